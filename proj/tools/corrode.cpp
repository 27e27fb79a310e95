// corrode: time-to-corruption calculator and experiment runner.
//
//   corrode solve               analytic U_gamma (complete topology)
//   corrode simulate            one discrete-event run
//   corrode sweep               U_gamma over a parameter grid
//   corrode validate            analytic solver vs simulator over seeds
//   corrode compare-topologies  Scale-Free vs Complete simulations
//
// Exit codes: 0 ok, 1 validation verdict not "pass", 2 configuration error,
// 3 solver did not converge.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "corrode/corrode.hpp"

namespace {

using namespace corrode;

constexpr int kExitOk = 0;
constexpr int kExitVerdict = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNotConverged = 3;

/// Used when no --config is given.
const char* const kDefaultDocument = R"({"graph": {"n": 10000, "f": 0.3}, "workload": {"lambda": 500}})";

struct Overrides {
  std::optional<double> n, f, lambda, tps, r, delta;
  std::optional<std::string> topology;
  std::optional<double> gamma, fpTolerance, damping, seedState2;
  std::optional<long long> maxIterations;
  std::optional<unsigned long long> seed, seedCount, seedBase;
  std::optional<double> horizon, sampleInterval;
  std::optional<std::string> sweepParameter, sweepScale;
  std::optional<double> sweepFrom, sweepTo;
  std::optional<long long> sweepSteps;
  std::optional<double> tolerance;
};

struct Invocation {
  std::string configPath;
  std::string outputDir = "out";
  int verbosity = 0;
  Overrides set;
};

void addOptions(CLI::App* cmd, Invocation& inv) {
  auto& o = inv.set;
  cmd->add_option("-c,--config", inv.configPath, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("-o,--output-dir", inv.outputDir, "Directory for result.json and CSV outputs")->capture_default_str();
  cmd->add_flag("-v,--verbose", inv.verbosity, "More output (repeatable)");

  cmd->add_option("--n,--graph.n", o.n, "Total edge count N [edges]; scientific notation accepted")->group("Graph");
  cmd->add_option("--f,--graph.f", o.f, "Distributed-edge fraction f [0..1]")->group("Graph");
  cmd->add_option("--topology,--graph.topology.kind", o.topology,
                  "complete | scale_free (scale_free without a config uses the full 7-category table)")
      ->check(CLI::IsMember({"complete", "scale_free"}))
      ->group("Graph");

  cmd->add_option("--lambda,--workload.lambda", o.lambda, "Read-then-write query rate [queries/s]")->group("Workload");
  cmd->add_option("--tps,--workload.tps", o.tps, "Raw transactions per second; lambda = 0.10 x tps [1/s]")
      ->group("Workload");
  cmd->add_option("--r,--workload.r", o.r, "Geometric read-count parameter r (0..1]")->group("Workload");
  cmd->add_option("--delta,--workload.delta", o.delta, "Mean distributed-write duration [s]")->group("Workload");

  cmd->add_option("--gamma,--solver.gamma", o.gamma, "Corruption threshold fraction (0..1)")->group("Solver");
  cmd->add_option("--fp-tolerance,--solver.fp_tolerance", o.fpTolerance, "Fixed-point relative tolerance")
      ->group("Solver");
  cmd->add_option("--max-iterations,--solver.max_iterations", o.maxIterations, "Fixed-point iteration cap")
      ->group("Solver");
  cmd->add_option("--damping,--solver.damping", o.damping, "Iterate mixing weight (0..1]")->group("Solver");
  cmd->add_option("--seed-state2,--solver.seed_state2", o.seedState2, "Initial state-2 average [edges]")
      ->group("Solver");

  cmd->add_option("--seed,--sim.seed", o.seed, "RNG seed for a single run")->group("Simulation");
  cmd->add_option("--seeds,--sim.seeds.count", o.seedCount, "Number of replicate seeds")->group("Simulation");
  cmd->add_option("--seed-base,--sim.seeds.base", o.seedBase, "First replicate seed (default 1)")->group("Simulation");
  cmd->add_option("--horizon,--sim.horizon", o.horizon, "Maximum simulated time [s]")->group("Simulation");
  cmd->add_option("--sample-interval,--sim.sample_interval", o.sampleInterval, "Trajectory row spacing [s]")
      ->group("Simulation");

  cmd->add_option("--sweep.parameter", o.sweepParameter, "lambda | delta | f | gamma")
      ->check(CLI::IsMember({"lambda", "delta", "f", "gamma"}))
      ->group("Sweep");
  cmd->add_option("--sweep.from", o.sweepFrom, "First grid value [parameter units]")->group("Sweep");
  cmd->add_option("--sweep.to", o.sweepTo, "Last grid value [parameter units]")->group("Sweep");
  cmd->add_option("--sweep.steps", o.sweepSteps, "Grid points (>= 2)")->group("Sweep");
  cmd->add_option("--sweep.scale", o.sweepScale, "linear | log")->check(CLI::IsMember({"linear", "log"}))->group("Sweep");

  cmd->add_option("--tolerance,--validation.tolerance", o.tolerance, "Relative tolerance for the validate verdict")
      ->group("Validation");
}

/// Applies flag overrides to the raw document so that they pass through the
/// same validation as file values.
Json applyOverrides(Json doc, const Overrides& o) {
  auto set = [&](std::initializer_list<const char*> path, const Json& v) {
    Json* node = &doc;
    auto it = path.begin();
    for (std::size_t i = 0; i + 1 < path.size(); ++i, ++it) {
      if (!node->contains(*it) || !(*node)[*it].is_object()) (*node)[*it] = Json::object();
      node = &(*node)[*it];
    }
    (*node)[*it] = v;
  };
  auto erase = [&](const char* sectionKey, const char* key) {
    if (doc.contains(sectionKey) && doc[sectionKey].is_object()) doc[sectionKey].erase(key);
  };

  if (o.n) set({"graph", "n"}, *o.n);
  if (o.f) set({"graph", "f"}, *o.f);
  if (o.topology) {
    if (doc.contains("graph") && doc["graph"].contains("topology") && doc["graph"]["topology"].is_object() &&
        doc["graph"]["topology"].value("kind", "") != *o.topology)
      doc["graph"]["topology"] = Json::object();
    set({"graph", "topology", "kind"}, *o.topology);
    if (*o.topology == "scale_free" && !o.n) erase("graph", "n");
  }
  if (o.lambda) {
    erase("workload", "tps");
    set({"workload", "lambda"}, *o.lambda);
  }
  if (o.tps) {
    erase("workload", "lambda");
    set({"workload", "tps"}, *o.tps);
  }
  if (o.r) set({"workload", "r"}, *o.r);
  if (o.delta) set({"workload", "delta"}, *o.delta);
  if (o.gamma) set({"solver", "gamma"}, *o.gamma);
  if (o.fpTolerance) set({"solver", "fp_tolerance"}, *o.fpTolerance);
  if (o.maxIterations) set({"solver", "max_iterations"}, *o.maxIterations);
  if (o.damping) set({"solver", "damping"}, *o.damping);
  if (o.seedState2) set({"solver", "seed_state2"}, *o.seedState2);
  if (o.seed) {
    erase("sim", "seeds");
    set({"sim", "seed"}, *o.seed);
  }
  if (o.seedCount || o.seedBase) {
    std::uint64_t base = 1;
    std::optional<std::uint64_t> count;
    if (doc.contains("sim") && doc["sim"].is_object()) {
      const Json& sim = doc["sim"];
      if (sim.contains("seed") && sim["seed"].is_number_unsigned()) base = sim["seed"].get<std::uint64_t>();
      if (sim.contains("seeds") && sim["seeds"].is_object()) {
        base = sim["seeds"].value("base", base);
        if (sim["seeds"].contains("count")) count = sim["seeds"]["count"].get<std::uint64_t>();
      }
      if (sim.contains("seeds") && sim["seeds"].is_array() && !sim["seeds"].empty()) {
        base = sim["seeds"][0].get<std::uint64_t>();
        count = sim["seeds"].size();
      }
    }
    if (o.seedBase) base = *o.seedBase;
    if (o.seedCount) count = *o.seedCount;
    erase("sim", "seed");
    set({"sim", "seeds"}, Json{{"base", base}, {"count", count.value_or(1)}});
  }
  if (o.horizon) set({"sim", "horizon"}, *o.horizon);
  if (o.sampleInterval) set({"sim", "sample_interval"}, *o.sampleInterval);
  if (o.sweepParameter) set({"sweep", "parameter"}, *o.sweepParameter);
  if (o.sweepFrom) set({"sweep", "from"}, *o.sweepFrom);
  if (o.sweepTo) set({"sweep", "to"}, *o.sweepTo);
  if (o.sweepSteps) set({"sweep", "steps"}, *o.sweepSteps);
  if (o.sweepScale) set({"sweep", "scale"}, *o.sweepScale);
  if (o.tolerance) set({"validation", "tolerance"}, *o.tolerance);
  return doc;
}

ExperimentConfig resolveConfig(const Invocation& inv) {
  Json doc = inv.configPath.empty() ? Json::parse(kDefaultDocument) : readConfigDocument(inv.configPath);
  return parseConfig(applyOverrides(std::move(doc), inv.set));
}

void writeFile(const std::filesystem::path& dir, const std::string& name, const std::string& body) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  out << body;
}

std::string describeSeconds(double seconds) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6g s (%.6g days, %.6g months)", seconds, seconds / kSecondsPerDay,
                seconds / kSecondsPerMonth);
  return buf;
}

int cmdSolve(const Invocation& inv) {
  const auto cfg = resolveConfig(inv);
  const auto r = solve(cfg);
  const std::filesystem::path dir = inv.outputDir;
  writeFile(dir, "result.json", toJson(r).dump(2) + "\n");
  writeFile(dir, "trajectory.csv", trajectoryCsv(r));

  if (inv.verbosity > 0)
    for (const auto& it : r.iterationLog)
      std::printf("iter %4d  U=%.10g  nbar=(%.6g, %.6g, %.6g)  beta=%.8f  change=%.3g\n", it.iteration, it.uGamma,
                  it.averaged.nbar0, it.averaged.nbar1, it.averaged.nbar2, it.beta, it.change);

  switch (r.status) {
    case SolveStatus::Infinite: std::printf("U_gamma: infinite (%s)\n", r.note.c_str()); return kExitOk;
    case SolveStatus::NotConverged:
      std::printf("U_gamma: not converged after %d iterations (last estimate %s)\n", r.iterations,
                  describeSeconds(r.uGamma).c_str());
      return kExitNotConverged;
    case SolveStatus::Converged: break;
  }
  std::printf("U_gamma: %s\n", describeSeconds(r.uGamma).c_str());
  std::printf("alpha=%.10g beta=%.10g q=%.6g iterations=%d conservation drift=%.3g\n", r.alpha, r.beta, r.q,
              r.iterations, r.conservationDrift);
  return kExitOk;
}

int cmdSimulate(const Invocation& inv) {
  const auto cfg = resolveConfig(inv);
  const auto r = runSimulation(cfg.graph, cfg.workload, cfg.simFor(cfg.seeds.first()));
  const std::filesystem::path dir = inv.outputDir;
  writeFile(dir, "result.json", toJson(r).dump(2) + "\n");
  writeFile(dir, "trajectory.csv", trajectoryCsv(r.trajectory));
  if (r.uGammaEstimate) std::printf("U_gamma (seed %llu): %s\n", static_cast<unsigned long long>(r.seed),
                                    describeSeconds(*r.uGammaEstimate).c_str());
  else std::printf("U_gamma (seed %llu): not reached by horizon %.6g s\n", static_cast<unsigned long long>(r.seed),
                   r.endTime);
  std::printf("queries=%llu conflicts=%llu corrections=%llu dirty queries=%llu\n",
              static_cast<unsigned long long>(r.events.queries), static_cast<unsigned long long>(r.events.conflicts),
              static_cast<unsigned long long>(r.events.corrections),
              static_cast<unsigned long long>(r.events.dirtyQueries));
  return kExitOk;
}

int cmdSweep(const Invocation& inv) {
  const auto cfg = resolveConfig(inv);
  const auto rows = runSweep(cfg);
  const std::filesystem::path dir = inv.outputDir;
  const auto csv = sweepCsv(rows);
  writeFile(dir, "sweep.csv", csv);
  writeFile(dir, "result.json", toJson(rows).dump(2) + "\n");
  std::cout << csv;
  for (const auto& r : rows)
    if (r.solve.status == SolveStatus::NotConverged) return kExitNotConverged;
  return kExitOk;
}

int cmdValidate(const Invocation& inv) {
  const auto cfg = resolveConfig(inv);
  const auto rep = runValidation(cfg);
  const std::filesystem::path dir = inv.outputDir;
  writeFile(dir, "result.json", toJson(rep).dump(2) + "\n");
  std::string csv = "seed,u_gamma_seconds\n";
  for (std::size_t i = 0; i < rep.sim.seeds.size(); ++i)
    csv += std::to_string(rep.sim.seeds[i]) + "," + formatNumber(rep.sim.perSeed[i].value_or(kInfinity)) + "\n";
  writeFile(dir, "validation.csv", csv);

  std::printf("analytic U_gamma: %s\n",
              rep.analytic.finite() ? describeSeconds(rep.analyticU).c_str() : "infinite");
  std::printf("simulated mean:   %.6g s +/- %.3g (95%% CI, %zu runs, %zu over horizon)\n", rep.sim.stats.mean,
              rep.sim.stats.ci95, rep.sim.stats.count, rep.sim.horizonExceeded);
  std::printf("relative error:   %s (tolerance %.3g)  CI covers analytic: %s\n",
              formatNumber(rep.relativeError).c_str(), rep.tolerance, rep.ciOverlap ? "yes" : "no");
  std::printf("verdict: %s\n", std::string(name(rep.verdict)).c_str());
  if (!rep.guidance.empty()) std::printf("note: %s\n", rep.guidance.c_str());
  if (rep.analytic.status == SolveStatus::NotConverged) return kExitNotConverged;
  return rep.verdict == Verdict::Pass || rep.verdict == Verdict::ConsistentDegenerate ? kExitOk : kExitVerdict;
}

int cmdCompare(const Invocation& inv) {
  const auto cfg = resolveConfig(inv);
  const auto cmp = compareTopologies(cfg);
  const std::filesystem::path dir = inv.outputDir;
  writeFile(dir, "result.json", toJson(cmp).dump(2) + "\n");
  writeFile(dir, "compare.csv", comparisonCsv(cmp));
  writeFile(dir, "onsets.csv", onsetCsv(cmp));
  std::printf("scale-free mean U_gamma: %.6g s +/- %.3g\n", cmp.scaleFree.stats.mean, cmp.scaleFree.stats.ci95);
  std::printf("complete mean U_gamma:   %.6g s +/- %.3g\n", cmp.complete.stats.mean, cmp.complete.stats.ci95);
  std::printf("ratio (scale-free / complete): %s\n", formatNumber(cmp.ratio).c_str());
  std::printf("most popular category corrupts first in every run: %s\n", cmp.popularFirst ? "yes" : "no");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-to-corruption model for eventually consistent distributed graph databases"};
  app.require_subcommand(1);
  Invocation inv;

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const Invocation&);
  };
  const Sub subs[] = {
      {"solve", "Analytic U_gamma by fixed-point iteration (complete topology)", cmdSolve},
      {"simulate", "Single discrete-event simulation run", cmdSimulate},
      {"sweep", "Analytic U_gamma (and optional simulation replicates) over a parameter grid", cmdSweep},
      {"validate", "Compare the analytic solver with simulation over several seeds", cmdValidate},
      {"compare-topologies", "Simulate Scale-Free and Complete access at matched N, f and workload", cmdCompare},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Invocation&)>> commands;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    addOptions(cmd, inv);
    commands.emplace_back(cmd, s.run);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    for (const auto& [cmd, run] : commands)
      if (cmd->parsed()) return run(inv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
