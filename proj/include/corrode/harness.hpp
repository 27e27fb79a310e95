#pragma once

// Experiment orchestration: parameter sweeps, cross-engine validation and the
// Scale-Free vs Complete comparison, plus their CSV/JSON serializations.
// Replicates may run on several threads; results are always assembled in
// (point, seed) order so outputs do not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "corrode/config.hpp"
#include "corrode/des.hpp"
#include "corrode/solver.hpp"

namespace corrode {

// ---------------------------------------------------------------------------
// Parallel map
// ---------------------------------------------------------------------------

/// Worker cap from CORRODE_WORKERS, else the hardware thread count.
inline unsigned workerCount() {
  if (const char* env = std::getenv("CORRODE_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Evaluates fn(0..count-1) on up to `workers` threads; results in index order.
template <class T, class F>
std::vector<T> parallelMap(std::size_t count, unsigned workers, F&& fn) {
  std::vector<std::optional<T>> slots(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failureLock;
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        std::lock_guard lock(failureLock);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), count));
  if (n <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct SampleStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stdDev = 0.0;
  double ci95 = 0.0;  ///< half-width of the Student-t 95% interval

  double low() const noexcept { return mean - ci95; }
  double high() const noexcept { return mean + ci95; }
  bool contains(double x) const noexcept { return x >= low() && x <= high(); }
};

inline SampleStats summarize(const std::vector<double>& xs) {
  SampleStats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.stdDev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  const boost::math::students_t dist(static_cast<double>(xs.size() - 1));
  s.ci95 = boost::math::quantile(boost::math::complement(dist, 0.025)) * s.stdDev /
           std::sqrt(static_cast<double>(xs.size()));
  return s;
}

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Fixed textual form for CSV cells: %.12g, "inf" for infinities, "nan" for NaN.
inline std::string formatNumber(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// JSON cannot carry infinities; they are written as the string "infinite".
inline Json jsonNumber(double v) {
  if (std::isinf(v)) return "infinite";
  if (std::isnan(v)) return nullptr;
  return v;
}

inline Json jsonOptional(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

// ---------------------------------------------------------------------------
// Single-engine helpers
// ---------------------------------------------------------------------------

inline SolveResult solve(const ExperimentConfig& cfg) { return fixedPointSolve(cfg.graph, cfg.workload, cfg.solver); }

inline std::vector<SimResult> simulateSeeds(const ExperimentConfig& cfg, const GraphSpec& graph,
                                            StopRule rule = StopRule::Gamma) {
  const auto seeds = cfg.seeds.list();
  return parallelMap<SimResult>(seeds.size(), workerCount(), [&](std::size_t i) {
    auto sim = cfg.simFor(seeds[i]);
    sim.stopRule = rule;
    return runSimulation(graph, cfg.workload, sim);
  });
}

struct ReplicateSummary {
  std::vector<std::optional<double>> perSeed;  ///< empty entries exceeded the horizon
  std::vector<std::uint64_t> seeds;
  SampleStats stats;  ///< over the finished runs only
  std::size_t horizonExceeded = 0;
};

inline ReplicateSummary summarizeRuns(const std::vector<SimResult>& runs) {
  ReplicateSummary s;
  std::vector<double> finished;
  for (const auto& r : runs) {
    s.perSeed.push_back(r.uGammaEstimate);
    s.seeds.push_back(r.seed);
    if (r.uGammaEstimate) finished.push_back(*r.uGammaEstimate);
    else ++s.horizonExceeded;
  }
  s.stats = summarize(finished);
  return s;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  SweepParameter parameter = SweepParameter::Lambda;
  double value = 0.0;
  SolveResult solve;
  std::optional<ReplicateSummary> sim;
};

inline std::vector<SweepRow> runSweep(const ExperimentConfig& cfg) {
  if (!cfg.sweep) throw ConfigError("sweep", "a sweep section is required");
  const auto grid = cfg.sweep->grid();
  std::vector<ExperimentConfig> points;
  for (double v : grid) points.push_back(withParameter(cfg, cfg.sweep->parameter, v));
  auto rows = parallelMap<SweepRow>(grid.size(), workerCount(), [&](std::size_t i) {
    return SweepRow{cfg.sweep->parameter, grid[i], solve(points[i]), std::nullopt};
  });
  // replicates are already spread over the workers, so points go one at a time
  if (cfg.seeds.replicated())
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].sim = summarizeRuns(simulateSeeds(points[i], points[i].graph));
  return rows;
}

inline std::string sweepCsv(const std::vector<SweepRow>& rows) {
  const bool withSim = !rows.empty() && rows.front().sim.has_value();
  std::string out = "param,value,u_gamma_seconds,u_gamma_months";
  if (withSim) out += ",sim_mean,sim_ci95";
  out += ",status\n";
  for (const auto& r : rows) {
    out += std::string(name(r.parameter)) + "," + formatNumber(r.value) + "," + formatNumber(r.solve.uGamma) + "," +
           formatNumber(r.solve.uGammaMonths());
    if (withSim) {
      const bool complete = r.sim->horizonExceeded == 0;
      out += "," + formatNumber(complete ? r.sim->stats.mean : kInfinity) + "," +
             formatNumber(complete ? r.sim->stats.ci95 : std::nan(""));
    }
    out += "," + std::string(name(r.solve.status)) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-engine validation
// ---------------------------------------------------------------------------

enum class Verdict { Pass, Fail, Inconclusive, ConsistentDegenerate };

inline std::string_view name(Verdict v) noexcept {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
    case Verdict::ConsistentDegenerate: return "consistent-degenerate";
  }
  return "?";
}

struct ValidationReport {
  SolveResult analytic;
  double analyticU = kInfinity;
  ReplicateSummary sim;
  double relativeError = kInfinity;  ///< |analytic - simMean| / simMean
  bool ciOverlap = false;            ///< analytic value inside the simulator's 95% interval
  double tolerance = 0.10;
  Verdict verdict = Verdict::Inconclusive;
  std::string guidance;
};

inline ValidationReport runValidation(const ExperimentConfig& cfg) {
  if (cfg.seeds.list().size() < 2) throw ConfigError("sim.seeds", "validation needs at least 2 seeds");
  ValidationReport rep;
  rep.tolerance = cfg.tolerance;
  rep.analytic = solve(cfg);
  rep.analyticU = rep.analytic.uGamma;
  rep.sim = summarizeRuns(simulateSeeds(cfg, cfg.graph));

  const std::size_t total = rep.sim.perSeed.size();
  if (rep.sim.horizonExceeded == total && !rep.analytic.finite()) {
    rep.verdict = Verdict::ConsistentDegenerate;
    rep.guidance = "both engines report no corruption: " + rep.analytic.note;
    return rep;
  }
  if (2 * rep.sim.horizonExceeded > total) {
    rep.verdict = Verdict::Inconclusive;
    rep.guidance = "most runs reached sim.horizon before U_gamma; raise sim.horizon";
    return rep;
  }
  const double mean = rep.sim.stats.mean;
  rep.relativeError = std::abs(rep.analyticU - mean) / mean;
  rep.ciOverlap = rep.analytic.finite() && rep.sim.stats.contains(rep.analyticU);
  rep.verdict = rep.relativeError <= rep.tolerance ? Verdict::Pass : Verdict::Fail;
  if (rep.sim.horizonExceeded > 0)
    rep.guidance = std::to_string(rep.sim.horizonExceeded) + " run(s) exceeded the horizon and are excluded";
  return rep;
}

// ---------------------------------------------------------------------------
// Topology comparison
// ---------------------------------------------------------------------------

struct TopologyComparison {
  ScaleFree table;
  ReplicateSummary scaleFree;
  ReplicateSummary complete;
  double ratio = kInfinity;  ///< mean U (Scale-Free) / mean U (Complete)
  /// onsets[seed][category], time at which the category's own state-3 share reached gamma
  std::vector<std::vector<std::optional<double>>> onsets;
  /// true iff category 0 reaches onset strictly before the last category in every run
  bool popularFirst = false;
};

inline TopologyComparison compareTopologies(const ExperimentConfig& cfg) {
  const auto* sf = std::get_if<ScaleFree>(&cfg.graph.topology);
  if (!sf) throw ConfigError("graph.topology.kind", "compare-topologies needs a scale_free topology");
  TopologyComparison cmp;
  cmp.table = *sf;
  const auto sfRuns = simulateSeeds(cfg, cfg.graph, StopRule::AllCategoryOnsets);
  GraphSpec complete = cfg.graph;
  complete.topology = Complete{};
  const auto cRuns = simulateSeeds(cfg, complete);

  cmp.scaleFree = summarizeRuns(sfRuns);
  cmp.complete = summarizeRuns(cRuns);
  if (cmp.scaleFree.stats.count > 0 && cmp.complete.stats.count > 0)
    cmp.ratio = cmp.scaleFree.stats.mean / cmp.complete.stats.mean;

  cmp.popularFirst = !sfRuns.empty();
  for (const auto& r : sfRuns) {
    cmp.onsets.push_back(r.categoryOnset);
    const auto& first = r.categoryOnset.front();
    const auto& last = r.categoryOnset.back();
    const bool ordered = first && (!last || *first < *last);
    cmp.popularFirst = cmp.popularFirst && ordered;
  }
  return cmp;
}

inline std::string comparisonCsv(const TopologyComparison& cmp) {
  std::string out = "topology,seed,u_gamma_seconds\n";
  auto rows = [&](const char* label, const ReplicateSummary& s) {
    for (std::size_t i = 0; i < s.seeds.size(); ++i)
      out += std::string(label) + "," + std::to_string(s.seeds[i]) + "," +
             formatNumber(s.perSeed[i].value_or(kInfinity)) + "\n";
  };
  rows("scale_free", cmp.scaleFree);
  rows("complete", cmp.complete);
  return out;
}

inline std::string onsetCsv(const TopologyComparison& cmp) {
  std::string out = "seed,category,edges,p,onset_seconds\n";
  for (std::size_t s = 0; s < cmp.onsets.size(); ++s)
    for (std::size_t j = 0; j < cmp.onsets[s].size(); ++j)
      out += std::to_string(cmp.scaleFree.seeds[s]) + "," + std::to_string(j) + "," +
             std::to_string(cmp.table.categories[j].edges) + "," + formatNumber(cmp.table.categories[j].probability) +
             "," + formatNumber(cmp.onsets[s][j].value_or(kInfinity)) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

inline std::string trajectoryCsv(const std::vector<TrajectoryRow>& rows) {
  std::string out = "t,n0,n1,n2,n3\n";
  for (const auto& r : rows)
    out += formatNumber(r.t) + "," + std::to_string(r.n[0]) + "," + std::to_string(r.n[1]) + "," +
           std::to_string(r.n[2]) + "," + std::to_string(r.n[3]) + "\n";
  return out;
}

/// Closed-form trajectory sampled at `points` evenly spaced times on [0, U].
inline std::string trajectoryCsv(const SolveResult& r, int points = 101) {
  std::string out = "t,n0,n1,n2,n3\n";
  if (!r.finite()) return out;
  for (int i = 0; i < points; ++i) {
    const double t = r.uGamma * static_cast<double>(i) / static_cast<double>(points - 1);
    const auto s = r.trajectory.at(t);
    out += formatNumber(t) + "," + formatNumber(s[0]) + "," + formatNumber(s[1]) + "," + formatNumber(s[2]) + "," +
           formatNumber(s[3]) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline Json toJson(const AveragedState& a) { return {{"nbar0", a.nbar0}, {"nbar1", a.nbar1}, {"nbar2", a.nbar2}}; }

inline Json toJson(const SolveResult& r) {
  Json log = Json::array();
  for (const auto& it : r.iterationLog)
    log.push_back({{"iteration", it.iteration},
                   {"averaged", toJson(it.averaged)},
                   {"u_gamma_seconds", jsonNumber(it.uGamma)},
                   {"alpha", it.alpha},
                   {"beta", it.beta},
                   {"change", jsonNumber(it.change)}});
  return {{"status", std::string(name(r.status))},
          {"u_gamma_seconds", jsonNumber(r.uGamma)},
          {"u_gamma_days", jsonNumber(r.uGammaDays())},
          {"u_gamma_months", jsonNumber(r.uGammaMonths())},
          {"seconds_per_month", kSecondsPerMonth},
          {"averaged", toJson(r.averaged)},
          {"alpha", r.alpha},
          {"beta", r.beta},
          {"q", r.q},
          {"coefficients",
           {{"g_star3", r.coefficients.gStar3}, {"g_12", r.coefficients.g12}, {"g_21", r.coefficients.g21}}},
          {"iterations", r.iterations},
          {"conservation_drift", r.conservationDrift},
          {"note", r.note},
          {"iteration_log", log}};
}

inline Json toJson(const SimResult& r) {
  const auto& e = r.events;
  Json onsets = Json::array();
  for (const auto& o : r.categoryOnset) onsets.push_back(jsonOptional(o));
  Json transitions = Json::array();
  for (const auto& row : e.transitions) transitions.push_back(row);
  return {{"seed", r.seed},
          {"u_gamma_seconds", jsonOptional(r.uGammaEstimate)},
          {"horizon_exceeded", r.horizonExceeded()},
          {"end_time", r.endTime},
          {"final_counts", r.trajectory.empty() ? Json(nullptr) : Json(r.trajectory.back().n)},
          {"events",
           {{"queries", e.queries},
            {"reads", e.reads},
            {"dirty_queries", e.dirtyQueries},
            {"local_writes", e.localWrites},
            {"distributed_writes", e.distributedWrites},
            {"conflicts", e.conflicts},
            {"corrections", e.corrections},
            {"inconsistencies", e.inconsistencies},
            {"corruptions", e.corruptions},
            {"transitions", transitions}}},
          {"illegal_transitions", r.illegalTransitions()},
          {"category_sizes", r.categorySizes},
          {"category_onset_seconds", onsets}};
}

inline Json toJson(const ReplicateSummary& s) {
  Json per = Json::array();
  for (std::size_t i = 0; i < s.seeds.size(); ++i)
    per.push_back({{"seed", s.seeds[i]}, {"u_gamma_seconds", jsonOptional(s.perSeed[i])}});
  return {{"mean", s.stats.mean},
          {"std_dev", s.stats.stdDev},
          {"ci95", s.stats.ci95},
          {"finished", s.stats.count},
          {"horizon_exceeded", s.horizonExceeded},
          {"per_seed", per}};
}

inline Json toJson(const ValidationReport& r) {
  return {{"analytic_u_seconds", jsonNumber(r.analyticU)},
          {"analytic", toJson(r.analytic)},
          {"sim", toJson(r.sim)},
          {"relative_error", jsonNumber(r.relativeError)},
          {"ci_overlap", r.ciOverlap},
          {"tolerance", r.tolerance},
          {"verdict", std::string(name(r.verdict))},
          {"guidance", r.guidance}};
}

inline Json toJson(const TopologyComparison& c) {
  Json onsets = Json::array();
  for (const auto& run : c.onsets) {
    Json row = Json::array();
    for (const auto& o : run) row.push_back(jsonOptional(o));
    onsets.push_back(row);
  }
  return {{"scale_free", toJson(c.scaleFree)},
          {"complete", toJson(c.complete)},
          {"ratio_scale_free_over_complete", jsonNumber(c.ratio)},
          {"category_onset_seconds", onsets},
          {"popular_category_first", c.popularFirst}};
}

inline Json toJson(const std::vector<SweepRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json row = {{"param", std::string(name(r.parameter))}, {"value", r.value}, {"solve", toJson(r.solve)}};
    if (r.sim) row["sim"] = toJson(*r.sim);
    out.push_back(row);
  }
  return out;
}

}  // namespace corrode
