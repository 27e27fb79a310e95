#pragma once

// Experiment configuration: a JSON document with sections graph, workload,
// solver, sim, sweep and validation. Unknown keys are rejected and every
// error names the offending field by its dotted path.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "corrode/des.hpp"
#include "corrode/model.hpp"
#include "corrode/solver.hpp"
#include "json.hpp"

namespace corrode {

using Json = nlohmann::json;

/// Configuration problem tied to a dotted field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class SweepParameter { Lambda, Delta, F, Gamma };
enum class SweepScale { Linear, Log };

inline std::string_view name(SweepParameter p) noexcept {
  switch (p) {
    case SweepParameter::Lambda: return "lambda";
    case SweepParameter::Delta: return "delta";
    case SweepParameter::F: return "f";
    case SweepParameter::Gamma: return "gamma";
  }
  return "?";
}

struct SweepSpec {
  SweepParameter parameter = SweepParameter::Lambda;
  double from = 0.0;
  double to = 0.0;
  int steps = 2;
  SweepScale scale = SweepScale::Linear;
  bool operator==(const SweepSpec&) const = default;

  std::vector<double> grid() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(steps - 1);
      if (i == steps - 1) out.push_back(to);
      else if (scale == SweepScale::Linear) out.push_back(from + u * (to - from));
      else out.push_back(from * std::pow(to / from, u));
    }
    return out;
  }
};

/// Either a single seed, an explicit list, or `count` consecutive seeds from `base`.
struct SeedSpec {
  struct Range {
    std::uint64_t base = 1;
    std::uint64_t count = 1;
    bool operator==(const Range&) const = default;
  };
  std::variant<std::uint64_t, std::vector<std::uint64_t>, Range> value = std::uint64_t{1};

  bool replicated() const noexcept { return !std::holds_alternative<std::uint64_t>(value); }

  std::vector<std::uint64_t> list() const {
    if (const auto* s = std::get_if<std::uint64_t>(&value)) return {*s};
    if (const auto* l = std::get_if<std::vector<std::uint64_t>>(&value)) return *l;
    const auto& r = std::get<Range>(value);
    std::vector<std::uint64_t> out;
    for (std::uint64_t i = 0; i < r.count; ++i) out.push_back(r.base + i);
    return out;
  }

  std::uint64_t first() const { return list().front(); }
  bool operator==(const SeedSpec&) const = default;
};

struct ExperimentConfig {
  GraphSpec graph;
  WorkloadSpec workload;
  std::optional<double> tps;  ///< set when the workload was given as raw TPS
  SolverConfig solver;
  SimConfig sim;              ///< sim.gamma mirrors solver.gamma; sim.seed is seeds.first()
  SeedSpec seeds;
  std::optional<SweepSpec> sweep;
  double tolerance = 0.10;    ///< relative tolerance for the cross-engine verdict

  /// SimConfig for one replicate.
  SimConfig simFor(std::uint64_t seed) const {
    SimConfig s = sim;
    s.seed = seed;
    s.gamma = solver.gamma;
    return s;
  }
};

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  auto same = [](const GraphSpec& x, const GraphSpec& y) {
    return x.n == y.n && x.f == y.f && x.topology == y.topology;
  };
  return same(a.graph, b.graph) && a.workload.lambda == b.workload.lambda && a.workload.r == b.workload.r &&
         a.workload.delta == b.workload.delta && a.tps == b.tps && a.solver.gamma == b.solver.gamma &&
         a.solver.fpTolerance == b.solver.fpTolerance && a.solver.maxIterations == b.solver.maxIterations &&
         a.solver.damping == b.solver.damping && a.solver.seedState2 == b.solver.seedState2 &&
         a.sim.horizon == b.sim.horizon && a.sim.sampleInterval == b.sim.sampleInterval && a.seeds == b.seeds &&
         a.sweep == b.sweep && a.tolerance == b.tolerance;
}

namespace detail {

inline void rejectUnknown(const Json& obj, const std::string& path, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (auto key : keys) known = known || key == k;
    if (!known) throw ConfigError(path.empty() ? k : path + "." + k, "unknown key");
  }
}

inline double number(const Json& obj, const std::string& key, const std::string& path) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(path + "." + key, "expected a number");
  return v.get<double>();
}

inline double numberOr(const Json& obj, const std::string& key, const std::string& path, double fallback) {
  return obj.contains(key) ? number(obj, key, path) : fallback;
}

inline std::uint64_t unsignedInt(const Json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  throw ConfigError(path, "expected a non-negative integer");
}

inline const Json& section(const Json& root, const std::string& key) {
  static const Json empty = Json::object();
  return root.contains(key) ? root.at(key) : empty;
}

/// Re-tags model validation failures as configuration errors.
template <class F>
void check(F&& f) {
  try {
    f();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.field(), e.message());
  }
}

}  // namespace detail

/// Parses and validates a configuration document, filling defaults.
inline ExperimentConfig parseConfig(const Json& root) {
  using namespace detail;
  rejectUnknown(root, "", {"graph", "workload", "solver", "sim", "sweep", "validation"});
  ExperimentConfig cfg;

  // graph
  const Json& g = section(root, "graph");
  rejectUnknown(g, "graph", {"n", "f", "topology"});
  if (!g.contains("f")) throw ConfigError("graph.f", "required");
  cfg.graph.f = number(g, "f", "graph");
  if (g.contains("topology")) {
    const Json& t = g.at("topology");
    rejectUnknown(t, "graph.topology", {"kind", "categories"});
    if (!t.contains("kind") || !t.at("kind").is_string())
      throw ConfigError("graph.topology.kind", "required: \"complete\" or \"scale_free\"");
    const auto kind = t.at("kind").get<std::string>();
    if (kind == "complete") {
      if (t.contains("categories")) throw ConfigError("graph.topology.categories", "not allowed for complete");
      cfg.graph.topology = Complete{};
    } else if (kind == "scale_free") {
      ScaleFree sf;
      if (t.contains("categories")) {
        const Json& cats = t.at("categories");
        if (!cats.is_array()) throw ConfigError("graph.topology.categories", "expected an array");
        for (std::size_t j = 0; j < cats.size(); ++j) {
          const auto path = "graph.topology.categories[" + std::to_string(j) + "]";
          rejectUnknown(cats[j], path, {"edges", "p"});
          if (!cats[j].contains("edges")) throw ConfigError(path + ".edges", "required");
          if (!cats[j].contains("p")) throw ConfigError(path + ".p", "required");
          sf.categories.push_back({unsignedInt(cats[j].at("edges"), path + ".edges"), number(cats[j], "p", path)});
        }
      } else {
        sf = ScaleFree::defaultTable();
      }
      cfg.graph.topology = sf;
    } else {
      throw ConfigError("graph.topology.kind", "unknown kind '" + kind + "'");
    }
  }
  if (g.contains("n")) {
    cfg.graph.n = number(g, "n", "graph");
  } else if (const auto* sf = std::get_if<ScaleFree>(&cfg.graph.topology)) {
    cfg.graph.n = static_cast<double>(sf->totalEdges());
  } else {
    throw ConfigError("graph.n", "required");
  }
  check([&] { cfg.graph.validate(); });

  // workload
  const Json& w = section(root, "workload");
  rejectUnknown(w, "workload", {"lambda", "tps", "r", "delta"});
  if (w.contains("lambda") && w.contains("tps")) throw ConfigError("workload.tps", "give either lambda or tps, not both");
  if (w.contains("lambda")) {
    cfg.workload.lambda = number(w, "lambda", "workload");
  } else if (w.contains("tps")) {
    cfg.tps = number(w, "tps", "workload");
    if (!(*cfg.tps > 0.0)) throw ConfigError("workload.tps", "must be > 0");
    cfg.workload.lambda = WorkloadSpec::lambdaFromTps(*cfg.tps);
  } else {
    throw ConfigError("workload.lambda", "required (or workload.tps)");
  }
  cfg.workload.r = numberOr(w, "r", "workload", 0.4);
  cfg.workload.delta = numberOr(w, "delta", "workload", 0.005);
  check([&] { cfg.workload.validate(); });

  // solver
  const Json& s = section(root, "solver");
  rejectUnknown(s, "solver", {"gamma", "fp_tolerance", "max_iterations", "damping", "seed_state2"});
  cfg.solver.gamma = numberOr(s, "gamma", "solver", 0.1);
  cfg.solver.fpTolerance = numberOr(s, "fp_tolerance", "solver", 1e-8);
  if (s.contains("max_iterations")) {
    const auto it = unsignedInt(s.at("max_iterations"), "solver.max_iterations");
    if (it > 100000000) throw ConfigError("solver.max_iterations", "too large");
    cfg.solver.maxIterations = static_cast<int>(it);
  }
  cfg.solver.damping = numberOr(s, "damping", "solver", 1.0);
  cfg.solver.seedState2 = numberOr(s, "seed_state2", "solver", 1.0);
  check([&] { cfg.solver.validate(); });

  // sim
  const Json& m = section(root, "sim");
  rejectUnknown(m, "sim", {"seed", "seeds", "horizon", "sample_interval"});
  if (m.contains("seed") && m.contains("seeds")) throw ConfigError("sim.seeds", "give either seed or seeds, not both");
  if (m.contains("seed")) {
    cfg.seeds.value = unsignedInt(m.at("seed"), "sim.seed");
  } else if (m.contains("seeds")) {
    const Json& sd = m.at("seeds");
    if (sd.is_array()) {
      std::vector<std::uint64_t> list;
      for (std::size_t i = 0; i < sd.size(); ++i)
        list.push_back(unsignedInt(sd[i], "sim.seeds[" + std::to_string(i) + "]"));
      if (list.empty()) throw ConfigError("sim.seeds", "must not be empty");
      cfg.seeds.value = list;
    } else if (sd.is_object()) {
      rejectUnknown(sd, "sim.seeds", {"base", "count"});
      SeedSpec::Range r;
      if (sd.contains("base")) r.base = unsignedInt(sd.at("base"), "sim.seeds.base");
      if (!sd.contains("count")) throw ConfigError("sim.seeds.count", "required");
      r.count = unsignedInt(sd.at("count"), "sim.seeds.count");
      if (r.count < 1) throw ConfigError("sim.seeds.count", "must be >= 1");
      cfg.seeds.value = r;
    } else {
      throw ConfigError("sim.seeds", "expected a list or {base, count}");
    }
  }
  cfg.sim.horizon = numberOr(m, "horizon", "sim", 1e6);
  cfg.sim.sampleInterval = numberOr(m, "sample_interval", "sim", 1.0);
  cfg.sim.seed = cfg.seeds.first();
  cfg.sim.gamma = cfg.solver.gamma;
  check([&] { cfg.sim.validate(); });

  // sweep
  if (root.contains("sweep")) {
    const Json& sw = root.at("sweep");
    rejectUnknown(sw, "sweep", {"parameter", "from", "to", "steps", "scale"});
    SweepSpec spec;
    if (!sw.contains("parameter") || !sw.at("parameter").is_string())
      throw ConfigError("sweep.parameter", "required: lambda, delta, f or gamma");
    const auto p = sw.at("parameter").get<std::string>();
    if (p == "lambda") spec.parameter = SweepParameter::Lambda;
    else if (p == "delta") spec.parameter = SweepParameter::Delta;
    else if (p == "f") spec.parameter = SweepParameter::F;
    else if (p == "gamma") spec.parameter = SweepParameter::Gamma;
    else throw ConfigError("sweep.parameter", "unknown parameter '" + p + "'");
    for (const char* k : {"from", "to", "steps"})
      if (!sw.contains(k)) throw ConfigError(std::string("sweep.") + k, "required");
    spec.from = number(sw, "from", "sweep");
    spec.to = number(sw, "to", "sweep");
    const auto steps = unsignedInt(sw.at("steps"), "sweep.steps");
    if (steps < 2 || steps > 1000000) throw ConfigError("sweep.steps", "must be in [2, 1e6]");
    spec.steps = static_cast<int>(steps);
    if (sw.contains("scale")) {
      if (!sw.at("scale").is_string()) throw ConfigError("sweep.scale", "expected \"linear\" or \"log\"");
      const auto sc = sw.at("scale").get<std::string>();
      if (sc == "linear") spec.scale = SweepScale::Linear;
      else if (sc == "log") spec.scale = SweepScale::Log;
      else throw ConfigError("sweep.scale", "unknown scale '" + sc + "'");
    }
    if (!(spec.from > 0.0)) throw ConfigError("sweep.from", "must be > 0");
    if (!(spec.to > spec.from)) throw ConfigError("sweep.to", "must be greater than sweep.from");
    if (spec.parameter == SweepParameter::F && spec.to > 1.0) throw ConfigError("sweep.to", "f must not exceed 1");
    if (spec.parameter == SweepParameter::Gamma && spec.to >= 1.0) throw ConfigError("sweep.to", "gamma must be < 1");
    cfg.sweep = spec;
  }

  // validation
  const Json& v = section(root, "validation");
  rejectUnknown(v, "validation", {"tolerance"});
  cfg.tolerance = numberOr(v, "tolerance", "validation", 0.10);
  if (!(cfg.tolerance >= 0.0)) throw ConfigError("validation.tolerance", "must be >= 0");
  return cfg;
}

inline ExperimentConfig parseConfig(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("<document>", std::string("parse error: ") + e.what());
  }
  return parseConfig(root);
}

inline ExperimentConfig parseConfig(const char* text) { return parseConfig(std::string(text)); }

inline Json readConfigDocument(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError("<document>", path + ": " + e.what());
  }
}

inline ExperimentConfig loadConfig(const std::string& path) { return parseConfig(readConfigDocument(path)); }

inline Json toJson(const ExperimentConfig& cfg) {
  Json root;
  Json topo;
  if (const auto* sf = std::get_if<ScaleFree>(&cfg.graph.topology)) {
    topo["kind"] = "scale_free";
    topo["categories"] = Json::array();
    for (const auto& c : sf->categories) topo["categories"].push_back({{"edges", c.edges}, {"p", c.probability}});
  } else {
    topo["kind"] = "complete";
  }
  root["graph"] = {{"n", cfg.graph.n}, {"f", cfg.graph.f}, {"topology", topo}};
  Json w = {{"r", cfg.workload.r}, {"delta", cfg.workload.delta}};
  if (cfg.tps) w["tps"] = *cfg.tps;
  else w["lambda"] = cfg.workload.lambda;
  root["workload"] = w;
  root["solver"] = {{"gamma", cfg.solver.gamma},
                    {"fp_tolerance", cfg.solver.fpTolerance},
                    {"max_iterations", cfg.solver.maxIterations},
                    {"damping", cfg.solver.damping},
                    {"seed_state2", cfg.solver.seedState2}};
  Json sim = {{"horizon", cfg.sim.horizon}, {"sample_interval", cfg.sim.sampleInterval}};
  if (const auto* s = std::get_if<std::uint64_t>(&cfg.seeds.value)) sim["seed"] = *s;
  else if (const auto* l = std::get_if<std::vector<std::uint64_t>>(&cfg.seeds.value)) sim["seeds"] = *l;
  else {
    const auto& r = std::get<SeedSpec::Range>(cfg.seeds.value);
    sim["seeds"] = {{"base", r.base}, {"count", r.count}};
  }
  root["sim"] = sim;
  if (cfg.sweep) {
    root["sweep"] = {{"parameter", std::string(name(cfg.sweep->parameter))},
                     {"from", cfg.sweep->from},
                     {"to", cfg.sweep->to},
                     {"steps", cfg.sweep->steps},
                     {"scale", cfg.sweep->scale == SweepScale::Linear ? "linear" : "log"}};
  }
  root["validation"] = {{"tolerance", cfg.tolerance}};
  return root;
}

/// Copy of `cfg` with one sweepable parameter replaced. Re-validated.
inline ExperimentConfig withParameter(ExperimentConfig cfg, SweepParameter p, double value) {
  switch (p) {
    case SweepParameter::Lambda:
      cfg.workload.lambda = value;
      cfg.tps.reset();
      break;
    case SweepParameter::Delta: cfg.workload.delta = value; break;
    case SweepParameter::F: cfg.graph.f = value; break;
    case SweepParameter::Gamma:
      cfg.solver.gamma = value;
      cfg.sim.gamma = value;
      break;
  }
  detail::check([&] {
    cfg.graph.validate();
    cfg.workload.validate();
    cfg.solver.validate();
  });
  return cfg;
}

}  // namespace corrode
