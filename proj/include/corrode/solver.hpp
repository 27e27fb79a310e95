#pragma once

// Fluid solution under the time-averaging approximation, solved for the
// first-passage time U_gamma by fixed-point iteration over the averages.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "corrode/model.hpp"

namespace corrode {

namespace detail {

/// (1 - e^-x) / x, with its series near zero.
inline double phi(double x) noexcept {
  if (std::abs(x) < 1e-5) return 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0;
  return -std::expm1(-x) / x;
}

/// (x - 1 + e^-x) / x^2 = (1 - phi(x)) / x. Integral of s*phi(k s) is t^2 chi(k t).
inline double chi(double x) noexcept {
  if (std::abs(x) < 1e-2) {
    const double x2 = x * x;
    return 0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0 + x2 * x2 / 720.0;
  }
  return (x + std::expm1(-x)) / (x * x);
}

}  // namespace detail

struct SolverConfig {
  double gamma = 0.1;
  double fpTolerance = 1e-8;
  int maxIterations = 10000;
  double damping = 1.0;
  double seedState2 = 1.0;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("solver.gamma", "must lie in (0, 1)");
    if (!(fpTolerance > 0.0)) throw InvalidInput("solver.fp_tolerance", "must be > 0");
    if (maxIterations < 1) throw InvalidInput("solver.max_iterations", "must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw InvalidInput("solver.damping", "must lie in (0, 1]");
    if (!(seedState2 > 0.0)) throw InvalidInput("solver.seed_state2", "must be > 0");
  }
};

/// Time averages of n0, n1, n2 over [0, U_gamma].
struct AveragedState {
  double nbar0 = 0.0;
  double nbar1 = 0.0;
  double nbar2 = 0.0;
};

/// Closed-form solution of the decoupled fluid equations: the n2 coupling in
/// the n1 equation and the n1 coupling in the n2 equation are held at their
/// averages. n2(0) = 0 always.
class ClosedFormTrajectory {
 public:
  ClosedFormTrajectory() = default;

  ClosedFormTrajectory(const StateVector& initial, const TransitionCoefficients& g,
                       const AveragedState& averaged)
      : n00_(initial[0]), n10_(initial[1]), total_(initial.total), g_(g), avg_(averaged) {}

  ClosedFormTrajectory(const GraphSpec& graph, const TransitionCoefficients& g,
                       const AveragedState& averaged)
      : ClosedFormTrajectory(graph.initialState(), g, averaged) {}

  double n0(double t) const noexcept { return n00_ * std::exp(-decay0() * t); }

  double n1(double t) const noexcept {
    const double b = decay1();
    return n10_ * std::exp(-b * t) + inflow1() * t * detail::phi(b * t);
  }

  double n2(double t) const noexcept { return inflow2() * t * detail::phi(decay2() * t); }

  /// g*3 times the integral of n0 + n1 + n2 over [0, t].
  double n3(double t) const noexcept { return g_.gStar3 * integral012(t); }

  StateVector at(double t) const noexcept { return StateVector{{n0(t), n1(t), n2(t), n3(t)}, total_}; }

  /// Exact averages over [0, u]; u must be positive.
  AveragedState average(double u) const noexcept {
    const double b = decay1(), c = decay2();
    return AveragedState{
        n00_ * detail::phi(decay0() * u),
        n10_ * detail::phi(b * u) + inflow1() * u * detail::chi(b * u),
        inflow2() * u * detail::chi(c * u),
    };
  }

  const TransitionCoefficients& coefficients() const noexcept { return g_; }
  const AveragedState& couplingAverages() const noexcept { return avg_; }
  double total() const noexcept { return total_; }

 private:
  double decay0() const noexcept { return g_.gStar3; }
  double decay1() const noexcept { return g_.gStar3 + g_.g12; }
  double decay2() const noexcept { return g_.gStar3 + g_.g21; }
  double inflow1() const noexcept { return g_.g21 * avg_.nbar2; }
  double inflow2() const noexcept { return g_.g12 * avg_.nbar1; }

  double integral012(double t) const noexcept {
    const double b = decay1(), c = decay2();
    const double i0 = n00_ * t * detail::phi(decay0() * t);
    const double i1 = n10_ * t * detail::phi(b * t) + inflow1() * t * t * detail::chi(b * t);
    const double i2 = inflow2() * t * t * detail::chi(c * t);
    return i0 + i1 + i2;
  }

  double n00_ = 0.0;
  double n10_ = 0.0;
  double total_ = 0.0;
  TransitionCoefficients g_{};
  AveragedState avg_{};
};

inline AveragedState timeAverages(const ClosedFormTrajectory& trajectory, double uGamma) {
  if (!(uGamma > 0.0)) throw InvalidInput("uGamma", "averaging window must be positive");
  return trajectory.average(uGamma);
}

/// Smallest t with n3(t) >= target for a non-decreasing n3, by bracketing and
/// bisection to 1e-10 relative width. kInfinity if the target is never reached.
template <class N3>
double firstPassageTime(const N3& n3, double target, double initialGuess = 1.0) {
  if (n3(0.0) >= target) return 0.0;
  double lo = 0.0;
  double hi = initialGuess > 0.0 && std::isfinite(initialGuess) ? initialGuess : 1.0;
  while (!(n3(hi) >= target)) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi) || hi > 1e300) return kInfinity;
  }
  for (int i = 0; i < 400 && hi - lo > 1e-10 * hi * 0.5; ++i) {
    const double mid = lo + 0.5 * (hi - lo);
    if (n3(mid) >= target) hi = mid;
    else lo = mid;
  }
  return lo + 0.5 * (hi - lo);
}

inline double firstPassage(const ClosedFormTrajectory& trajectory, double gamma, double n) {
  const auto& g = trajectory.coefficients();
  if (!(g.gStar3 > 0.0)) return kInfinity;
  const double target = gamma * n;
  return firstPassageTime([&](double t) { return trajectory.n3(t); }, target,
                          target / (g.gStar3 * n));
}

enum class SolveStatus { Converged, NotConverged, Infinite };

inline std::string_view name(SolveStatus s) noexcept {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::NotConverged: return "not_converged";
    case SolveStatus::Infinite: return "infinite";
  }
  return "?";
}

struct IterationRecord {
  int iteration = 0;
  AveragedState averaged;
  double uGamma = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double change = 0.0;  ///< max relative change of the four unknowns
};

struct SolveResult {
  SolveStatus status = SolveStatus::NotConverged;
  double uGamma = kInfinity;  ///< seconds
  AveragedState averaged;
  double alpha = 1.0;
  double beta = 1.0;
  double q = 0.0;
  TransitionCoefficients coefficients;
  ClosedFormTrajectory trajectory;  ///< the trajectory that produced uGamma
  int iterations = 0;
  std::vector<IterationRecord> iterationLog;
  double conservationDrift = 0.0;  ///< |sum n_i(U) - N| / N
  std::string note;

  bool converged() const noexcept { return status == SolveStatus::Converged; }
  bool finite() const noexcept { return std::isfinite(uGamma); }
  double uGammaDays() const noexcept { return uGamma / kSecondsPerDay; }
  double uGammaMonths() const noexcept { return uGamma / kSecondsPerMonth; }
};

/// One pass of the fixed-point map: averages -> alpha -> beta -> q -> g ->
/// closed forms -> (U, new averages).
struct PipelineOutput {
  TransitionCoefficients coefficients;
  ClosedFormTrajectory trajectory;
  double uGamma = kInfinity;
  AveragedState averaged;
};

inline PipelineOutput pipelinePass(const GraphSpec& graph, const WorkloadSpec& workload, double gamma,
                                   const AveragedState& in) {
  const double n = graph.n;
  const double rest = std::max(0.0, n - in.nbar0 - in.nbar1 - in.nbar2);
  const StateVector averagedState{{in.nbar0, in.nbar1, in.nbar2, rest}, n};

  PipelineOutput out;
  out.coefficients = transitionCoefficients(averagedState, workload);
  out.trajectory = ClosedFormTrajectory(graph, out.coefficients, in);
  out.uGamma = firstPassage(out.trajectory, gamma, n);
  out.averaged = std::isfinite(out.uGamma) ? out.trajectory.average(out.uGamma) : in;
  return out;
}

namespace detail {

inline double relativeChange(double next, double prev) noexcept {
  return std::abs(next - prev) / std::max(std::abs(prev), 1e-12);
}

inline double maxRelativeChange(const AveragedState& a, double ua, const AveragedState& b, double ub) {
  return std::max({relativeChange(a.nbar0, b.nbar0), relativeChange(a.nbar1, b.nbar1),
                   relativeChange(a.nbar2, b.nbar2), relativeChange(ua, ub)});
}

}  // namespace detail

/// Fixed-point solve on the complete topology.
///
/// Iteration 0 starts from the initial state with `seedState2` edges moved
/// from the n1 average to the n2 average; with no state-2 mass the map sits
/// at beta = 1 and U = infinity. Degenerate inputs (f = 0 or delta = 0) never
/// produce a state-2 edge and short-circuit to an infinite result.
inline SolveResult fixedPointSolve(const GraphSpec& graph, const WorkloadSpec& workload,
                                   const SolverConfig& config) {
  graph.validate();
  workload.validate();
  config.validate();
  if (!isComplete(graph.topology))
    throw InvalidInput("graph.topology", "the analytic solver supports the complete topology only");

  SolveResult result;
  result.q = conflictProbability(workload.lambda, workload.delta, graph.n);

  if (graph.f == 0.0 || workload.delta == 0.0) {
    result.status = SolveStatus::Infinite;
    result.uGamma = kInfinity;
    result.note = graph.f == 0.0 ? "no distributed edges" : "instantaneous writes never conflict";
    const auto init = graph.initialState();
    result.averaged = {init[0], init[1], 0.0};
    result.trajectory = ClosedFormTrajectory(graph, result.coefficients, result.averaged);
    return result;
  }

  const auto init = graph.initialState();
  const double seed = std::min(config.seedState2, init[1]);
  AveragedState current{init[0], init[1] - seed, seed};
  double currentU = kInfinity;
  const double d = config.damping;

  for (int it = 1; it <= config.maxIterations; ++it) {
    const auto pass = pipelinePass(graph, workload, config.gamma, current);
    if (!std::isfinite(pass.uGamma)) {
      result.status = SolveStatus::Infinite;
      result.note = "no flow into state 3 at iteration " + std::to_string(it);
      result.iterations = it;
      result.averaged = current;
      result.coefficients = pass.coefficients;
      result.trajectory = pass.trajectory;
      return result;
    }

    AveragedState next = pass.averaged;
    double nextU = pass.uGamma;
    if (std::isfinite(currentU)) {
      next.nbar0 = d * next.nbar0 + (1.0 - d) * current.nbar0;
      next.nbar1 = d * next.nbar1 + (1.0 - d) * current.nbar1;
      next.nbar2 = d * next.nbar2 + (1.0 - d) * current.nbar2;
      nextU = d * nextU + (1.0 - d) * currentU;
    }
    const double change =
        std::isfinite(currentU) ? detail::maxRelativeChange(next, nextU, current, currentU) : kInfinity;

    result.iterationLog.push_back(
        {it, next, nextU, pass.coefficients.alpha, pass.coefficients.beta, change});
    result.iterations = it;
    result.coefficients = pass.coefficients;
    result.trajectory = pass.trajectory;
    current = next;
    currentU = nextU;

    if (change <= config.fpTolerance) {
      result.status = SolveStatus::Converged;
      break;
    }
  }

  if (result.status != SolveStatus::Converged) {
    result.status = SolveStatus::NotConverged;
    result.note = "no convergence within " + std::to_string(config.maxIterations) + " iterations";
  }
  result.uGamma = currentU;
  result.averaged = current;
  result.alpha = result.coefficients.alpha;
  result.beta = result.coefficients.beta;
  result.q = result.coefficients.q;
  result.conservationDrift = std::abs(result.trajectory.at(currentU).sum() - graph.n) / graph.n;
  return result;
}

}  // namespace corrode
