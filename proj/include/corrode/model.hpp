#pragma once

// Edge-state machine, domain types and the closed-form probabilities shared by
// the analytic solver and the discrete-event simulator.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace corrode {

/// Raised for malformed model inputs. `field()` names the offending value.
class InvalidInput : public std::invalid_argument {
 public:
  InvalidInput(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)), message_(what) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string field_;
  std::string message_;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kSecondsPerMonth = 30.0 * kSecondsPerDay;

// ---------------------------------------------------------------------------
// Edge states
// ---------------------------------------------------------------------------

enum class EdgeState : std::uint8_t {
  CleanLocal = 0,
  CleanDistributed = 1,
  ReciprocallyInconsistent = 2,
  SemanticallyCorrupt = 3,
};

inline constexpr int index(EdgeState s) noexcept { return static_cast<int>(s); }

inline constexpr std::string_view name(EdgeState s) noexcept {
  switch (s) {
    case EdgeState::CleanLocal: return "clean-local";
    case EdgeState::CleanDistributed: return "clean-distributed";
    case EdgeState::ReciprocallyInconsistent: return "reciprocally-inconsistent";
    case EdgeState::SemanticallyCorrupt: return "semantically-corrupt";
  }
  return "?";
}

/// True iff `from -> to` is one of the five permitted arcs:
/// 1->2, 2->1, 0->3, 1->3, 2->3. Self-loops are not transitions.
inline constexpr bool isLegalTransition(EdgeState from, EdgeState to) noexcept {
  using enum EdgeState;
  switch (from) {
    case CleanLocal: return to == SemanticallyCorrupt;
    case CleanDistributed: return to == ReciprocallyInconsistent || to == SemanticallyCorrupt;
    case ReciprocallyInconsistent: return to == CleanDistributed || to == SemanticallyCorrupt;
    case SemanticallyCorrupt: return false;
  }
  return false;
}

/// A state change that is known to be legal. Only constructible through
/// `make`, which rejects anything outside the transition diagram.
class Transition {
 public:
  static Transition make(EdgeState from, EdgeState to) {
    if (!isLegalTransition(from, to)) {
      throw std::logic_error("illegal edge transition " + std::string(name(from)) + " -> " +
                             std::string(name(to)));
    }
    return Transition(from, to);
  }

  EdgeState from() const noexcept { return from_; }
  EdgeState to() const noexcept { return to_; }

 private:
  Transition(EdgeState f, EdgeState t) : from_(f), to_(t) {}
  EdgeState from_;
  EdgeState to_;
};

// ---------------------------------------------------------------------------
// State vector
// ---------------------------------------------------------------------------

/// Real-valued edge counts per state. The total is held separately so that a
/// drifting fluid trajectory can be compared against it.
struct StateVector {
  std::array<double, 4> n{};
  double total = 0.0;

  double operator[](int i) const { return n[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return n[static_cast<std::size_t>(i)]; }

  double sum() const noexcept { return n[0] + n[1] + n[2] + n[3]; }

  /// Components non-negative and summing to `total` within `relTol`.
  bool valid(double relTol = 1e-9) const noexcept {
    for (double v : n)
      if (!(v >= 0.0)) return false;
    return total > 0.0 && std::abs(sum() - total) <= relTol * total;
  }

  static StateVector of(double n0, double n1, double n2, double n3) {
    return StateVector{{n0, n1, n2, n3}, n0 + n1 + n2 + n3};
  }
};

// ---------------------------------------------------------------------------
// Graph, topology, workload
// ---------------------------------------------------------------------------

struct Complete {
  bool operator==(const Complete&) const = default;
};

struct Category {
  std::uint64_t edges = 0;
  double probability = 0.0;
  bool operator==(const Category&) const = default;
};

struct ScaleFree {
  std::vector<Category> categories;
  bool operator==(const ScaleFree&) const = default;

  std::uint64_t totalEdges() const noexcept {
    std::uint64_t s = 0;
    for (const auto& c : categories) s += c.edges;
    return s;
  }

  /// Seven categories, N_j = 10^(base+j), p_j = 2^-(j+1) rounded to two
  /// decimals. `base = 4` is the full-size table; smaller bases keep the
  /// ratios for desk-sized simulations.
  static ScaleFree defaultTable(int base = 4) {
    ScaleFree sf;
    const std::array<double, 7> p{0.50, 0.25, 0.13, 0.06, 0.03, 0.02, 0.01};
    std::uint64_t size = 1;
    for (int i = 0; i < base; ++i) size *= 10;
    for (double pj : p) {
      sf.categories.push_back({size, pj});
      size *= 10;
    }
    return sf;
  }
};

using Topology = std::variant<Complete, ScaleFree>;

inline bool isComplete(const Topology& t) noexcept { return std::holds_alternative<Complete>(t); }

/// Throws InvalidInput unless the categories are non-empty, positive, sum to
/// one (to 1e-9) and cover exactly `n` edges.
inline void validateTopology(const Topology& t, double n) {
  const auto* sf = std::get_if<ScaleFree>(&t);
  if (!sf) return;
  if (sf->categories.empty())
    throw InvalidInput("graph.topology.categories", "scale-free topology needs at least one category");
  double psum = 0.0;
  for (std::size_t j = 0; j < sf->categories.size(); ++j) {
    const auto& c = sf->categories[j];
    const auto field = "graph.topology.categories[" + std::to_string(j) + "]";
    if (c.edges == 0) throw InvalidInput(field + ".edges", "must be positive");
    if (!(c.probability > 0.0)) throw InvalidInput(field + ".p", "must be positive");
    psum += c.probability;
  }
  if (std::abs(psum - 1.0) > 1e-9)
    throw InvalidInput("graph.topology.categories", "access probabilities sum to " +
                                                        std::to_string(psum) + ", expected 1");
  if (static_cast<double>(sf->totalEdges()) != n)
    throw InvalidInput("graph.n", "does not equal the sum of category sizes (" +
                                      std::to_string(sf->totalEdges()) + ")");
}

struct GraphSpec {
  double n = 0.0;  ///< total edge count
  double f = 0.0;  ///< fraction of edges that are distributed
  Topology topology = Complete{};

  void validate() const {
    if (!(n >= 1.0) || !std::isfinite(n)) throw InvalidInput("graph.n", "must be a finite count >= 1");
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidInput("graph.f", "must lie in [0, 1]");
    validateTopology(topology, n);
  }

  StateVector initialState() const { return StateVector{{(1.0 - f) * n, f * n, 0.0, 0.0}, n}; }
};

/// Queries that read then write once. Only `lambda` enters the model; `tps`
/// is kept when the rate was given as raw transactions per second.
struct WorkloadSpec {
  double lambda = 0.0;  ///< queries per second
  double r = 0.4;       ///< geometric read-count parameter
  double delta = 0.005; ///< mean distributed-write duration, seconds

  static constexpr double kUpdatingFraction = 0.10;

  static double lambdaFromTps(double tps) noexcept { return kUpdatingFraction * tps; }

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidInput("workload.lambda", "must be > 0");
    if (!(r > 0.0 && r <= 1.0)) throw InvalidInput("workload.r", "must lie in (0, 1]");
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidInput("workload.delta", "must be >= 0");
  }
};

/// Per-edge per-second transition rates together with the probabilities
/// they were built from. a_{i,j} = g_{i,j} * n_i.
struct TransitionCoefficients {
  double gStar3 = 0.0;  ///< shared rate into state 3 from states 0, 1, 2
  double g12 = 0.0;
  double g21 = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
  double q = 0.0;
};

// ---------------------------------------------------------------------------
// Closed-form probabilities
// ---------------------------------------------------------------------------

/// Probability that a single read lands on a clean record: states 0 and 1, or
/// the correct side of a state-2 edge.
inline double cleanReadProbability(const StateVector& s) {
  if (!(s.total > 0.0)) throw InvalidInput("n.total", "edge total must be positive");
  return (s[0] + s[1] + 0.5 * s[2]) / s.total;
}

/// Probability that all K reads are clean with P(K = k) = r (1-r)^(k-2), k >= 2.
inline double allReadsCleanProbability(double alpha, double r) noexcept {
  return alpha * alpha * r / (1.0 - alpha * (1.0 - r));
}

/// Probability that a second query starts writing at the remote end of an
/// edge before an in-flight distributed write (mean duration delta) lands.
inline double conflictProbability(double lambda, double delta, double n) noexcept {
  const double ld = lambda * delta;
  return ld / (2.0 * n + ld);
}

inline TransitionCoefficients transitionCoefficients(double lambda, double n, double beta,
                                                     double q) noexcept {
  TransitionCoefficients g;
  g.beta = beta;
  g.q = q;
  g.gStar3 = lambda * (1.0 - beta) / n;
  g.g12 = lambda * beta * beta * q / n;
  g.g21 = lambda * beta * (1.0 - q) / n;
  return g;
}

/// Full chain from a state vector to rates, using `s` for alpha.
inline TransitionCoefficients transitionCoefficients(const StateVector& s, const WorkloadSpec& w) {
  const double alpha = cleanReadProbability(s);
  auto g = transitionCoefficients(w.lambda, s.total, allReadsCleanProbability(alpha, w.r),
                                  conflictProbability(w.lambda, w.delta, s.total));
  g.alpha = alpha;
  return g;
}

/// Right-hand side of the fluid equations with the raw (non-averaged)
/// coupling terms.
inline std::array<double, 4> fluidDerivatives(const StateVector& s,
                                              const TransitionCoefficients& g) noexcept {
  const double n0 = s[0], n1 = s[1], n2 = s[2];
  return {
      -g.gStar3 * n0,
      g.g21 * n2 - (g.gStar3 + g.g12) * n1,
      g.g12 * n1 - (g.gStar3 + g.g21) * n2,
      g.gStar3 * (n0 + n1 + n2),
  };
}

/// Same equations with the averaged n2 (in the n1 equation) and n1 (in the
/// n2 equation) held constant. This is the decoupled system the solver
/// integrates in closed form.
inline std::array<double, 4> averagedFluidDerivatives(const StateVector& s,
                                                      const TransitionCoefficients& g,
                                                      double nbar1, double nbar2) noexcept {
  const double n0 = s[0], n1 = s[1], n2 = s[2];
  return {
      -g.gStar3 * n0,
      g.g21 * nbar2 - (g.gStar3 + g.g12) * n1,
      g.g12 * nbar1 - (g.gStar3 + g.g21) * n2,
      g.gStar3 * (n0 + n1 + n2),
  };
}

}  // namespace corrode
