#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "qsd/birth_death.hpp"
#include "qsd/csv.hpp"
#include "qsd/diffusion.hpp"
#include "qsd/errors.hpp"
#include "qsd/fleming_viot.hpp"
#include "qsd/histogram.hpp"
#include "qsd/lotka_volterra.hpp"
#include "qsd/spectral.hpp"
#include "qsd/sub_generator.hpp"

namespace qsd::scenario {

using nlohmann::json;

inline constexpr const char* kToolkitVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Scenario configs are JSON documents:
//   { "scenario": <name>, "seed": <uint>, "outputs": [<keys>], "params": {...} }
// Built-in defaults are completed with file values and command-line overrides,
// in that order of increasing precedence.

struct ScenarioInfo {
  std::string name;
  std::string description;
};

inline const std::vector<ScenarioInfo>& list_scenarios() {
  static const std::vector<ScenarioInfo> infos = {
      {"example1",
       "random walk on {1..n} with uniform killing d: uniform QSD, survival and "
       "distance-vs-log-survival curves"},
      {"example2",
       "linear birth-death chain truncated at n: Yaglom limit, decay rates, "
       "extinction-rate curve"},
      {"example3_bd",
       "logistic birth-death process: classification, xi_1, truncated QSD and a "
       "Fleming-Viot estimate"},
      {"example4_feller",
       "logistic Feller diffusion: finite-difference (lambda_1, eta_1), Yaglom "
       "density and a Fleming-Viot histogram"},
      {"example5_lv",
       "3-type Lotka-Volterra system: survival-mode probabilities among "
       "surviving paths"},
      {"wright_fisher",
       "Wright-Fisher diffusion killed at eps: Fleming-Viot Yaglom histogram vs "
       "the density 2-2x"},
  };
  return infos;
}

inline json builtin_config(const std::string& name) {
  json c;
  c["scenario"] = name;
  if (name == "example1") {
    c["seed"] = 1;
    c["outputs"] = {"qsd", "curves", "distances"};
    c["params"] = {{"n", 100},          {"rate", 100.0}, {"d", 0.098},
                   {"init", 1},         {"t_max", 60.0}, {"n_times", 121}};
  } else if (name == "example2") {
    c["seed"] = 1;
    c["outputs"] = {"qsd", "curves", "distances"};
    c["params"] = {{"lambda", 0.9}, {"mu", 1.0},     {"n", 100},
                   {"init", 10},    {"t_max", 60.0}, {"n_times", 121}};
  } else if (name == "example3_bd") {
    c["seed"] = 11;
    c["outputs"] = {"qsd", "fv", "paths"};
    c["params"] = {{"lambda", 10.0},    {"mu", 1.0},       {"c", 1.0},
                   {"n_trunc", 200},    {"init", 10},      {"particles", 2000},
                   {"t_burnin", 20.0},  {"t_avg", 20.0},   {"n_snapshots", 40},
                   {"t_path", 20.0}};
  } else if (name == "example4_feller") {
    c["seed"] = 12;
    c["outputs"] = {"eigen", "fv", "paths"};
    c["params"] = {{"r", 9.0},          {"c", 1.0},       {"gamma", 0.5},
                   {"epsilon", 0.01},   {"n_grid", 1000}, {"z0", 1.0},
                   {"particles", 2000}, {"dt", 1e-3},     {"t_burnin", 3.0},
                   {"t_avg", 10.0},     {"n_snapshots", 20}, {"t_path", 20.0}};
  } else if (name == "example5_lv") {
    c["seed"] = 13;
    c["outputs"] = {"modes", "fv_modes", "paths"};
    c["params"] = {{"z0", {1.0, 1.0, 1.0}}, {"n_paths", 20000}, {"dt", 1e-3},
                   {"t_max", 4.0},          {"n_times", 17},    {"particles", 10000},
                   {"t_fv", 14.0},          {"n_times_fv", 29}, {"t_path", 10.0}};
  } else if (name == "wright_fisher") {
    c["seed"] = 14;
    c["outputs"] = {"fv", "paths"};
    c["params"] = {{"epsilon", 1e-3},    {"particles", 10000}, {"dt", 5e-4},
                   {"z0", 0.5},          {"t_burnin", 10.0},   {"t_avg", 20.0},
                   {"n_snapshots", 40},  {"t_path", 10.0}};
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  return c;
}

// deep merge: object fields recurse, everything else is replaced by `over`
inline void merge_into(json& base, const json& over) {
  if (!over.is_object() || !base.is_object()) {
    base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key()))
      merge_into(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

// "key=value" with dotted paths; bare keys other than the top-level ones are
// treated as params.<key>.  Values parse as JSON when possible, else strings.
inline void apply_override(json& cfg, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value, got '" + kv + "'");
  std::string key = kv.substr(0, eq);
  std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // plain string
  }
  if (key.find('.') == std::string::npos && key != "seed" && key != "scenario" &&
      key != "outputs")
    key = "params." + key;
  json* node = &cfg;
  std::size_t pos = 0;
  while (true) {
    std::size_t dot = key.find('.', pos);
    std::string part = key.substr(pos, dot - pos);
    if (part.empty()) throw ConfigError("empty path segment in override '" + kv + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

inline json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
}

struct RunSummary {
  std::string scenario;
  std::filesystem::path out_dir;
  std::vector<std::string> artifacts;
  json manifest;
};

namespace detail {

inline std::vector<double> time_grid(double t_max, long n_times) {
  if (!(t_max > 0.0) || n_times < 2) throw ConfigError("bad time grid");
  std::vector<double> t(n_times);
  for (long j = 0; j < n_times; ++j) t[j] = t_max * j / (n_times - 1);
  return t;
}

inline void require_outputs(const json& cfg, const std::set<std::string>& legal) {
  if (!cfg.contains("outputs") || !cfg["outputs"].is_array())
    throw ConfigError("field 'outputs' must be an array");
  if (cfg["outputs"].empty())
    throw ConfigError("field 'outputs' is empty: nothing to do");
  for (const auto& o : cfg["outputs"]) {
    if (!o.is_string() || !legal.count(o.get<std::string>())) {
      std::string allowed;
      for (const auto& k : legal) allowed += (allowed.empty() ? "" : ", ") + k;
      throw ConfigError("output '" + std::string(o.is_string() ? o.get<std::string>() : o.dump()) +
                        "' not available here; allowed: " + allowed);
    }
  }
}

inline bool wants(const json& cfg, const std::string& key) {
  for (const auto& o : cfg["outputs"])
    if (o == key) return true;
  return false;
}

inline void require_params(const json& cfg, const std::set<std::string>& known) {
  if (!cfg.contains("params") || !cfg["params"].is_object())
    throw ConfigError("field 'params' must be an object");
  for (auto it = cfg["params"].begin(); it != cfg["params"].end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown param '" + it.key() + "' for scenario " +
                        cfg["scenario"].get<std::string>());
}

inline std::uint64_t seed_of(const json& cfg) {
  if (!cfg.contains("seed") || !cfg["seed"].is_number_integer() ||
      cfg["seed"].get<long long>() < 0)
    throw ConfigError("field 'seed' must be a nonnegative integer");
  return cfg["seed"].get<std::uint64_t>();
}

class Emitter {
 public:
  Emitter(std::filesystem::path dir, RunSummary& summary)
      : dir_(std::move(dir)), summary_(summary) {}

  void write(const std::string& name, const csv::Table& table) {
    table.write(dir_ / name);
    summary_.artifacts.push_back(name);
  }

  std::filesystem::path dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  RunSummary& summary_;
};

inline csv::Table measure_table(const EmpiricalMeasure& m) {
  csv::Table t;
  t.header = {"state", "weight"};
  for (auto& [st, w] : m.weights) t.add_row({std::to_string(st), csv::fmt(w)});
  return t;
}

inline csv::Table hist_table(const Histogram& h) {
  csv::Table t;
  t.header = {"bin_left", "bin_right", "weight"};
  for (int i = 0; i < h.n_bins(); ++i)
    t.add_row({csv::fmt(h.edges[i]), csv::fmt(h.edges[i + 1]), csv::fmt(h.mass[i])});
  return t;
}

// snapshots CSV: one row per (time, atom) or (time, bin)
inline csv::Table snapshots_table(const FvResult& run, int n_bins = 100,
                                  double lo = 0.0, double hi = 0.0) {
  csv::Table t;
  bool continuous = !run.measures.empty() && run.measures.front().continuous;
  if (continuous) {
    t.header = {"t", "bin_left", "bin_right", "weight"};
    for (std::size_t s = 0; s < run.measures.size(); ++s) {
      Histogram h = make_histogram(run.measures[s].samples, n_bins, lo, hi);
      for (int i = 0; i < h.n_bins(); ++i)
        t.add_row({csv::fmt(run.t[s]), csv::fmt(h.edges[i]), csv::fmt(h.edges[i + 1]),
                   csv::fmt(h.mass[i])});
    }
  } else {
    t.header = {"t", "state", "weight"};
    for (std::size_t s = 0; s < run.measures.size(); ++s)
      for (auto& [st, w] : run.measures[s].weights)
        t.add_row({csv::fmt(run.t[s]), std::to_string(st), csv::fmt(w)});
  }
  return t;
}

inline csv::Table path_table(const DiffusionPath& p, const char* value_name = "x") {
  csv::Table t;
  t.header = {"t", value_name};
  for (std::size_t i = 0; i < p.t.size(); ++i)
    t.add_row({csv::fmt(p.t[i]), csv::fmt(p.x[i])});
  return t;
}

// walk on {1..n} with nearest-neighbour jump rate `rate`, reflecting ends,
// uniform killing d
inline SubGenerator uniform_killing_walk(int n, double rate, double d) {
  if (n < 2) throw ConfigError("need n >= 2");
  if (!(rate > 0.0) || !(d > 0.0)) throw ConfigError("need rate > 0 and d > 0");
  Mat Q = Mat::Zero(n, n);
  std::vector<std::string> labels(n);
  for (int i = 0; i < n; ++i) {
    if (i > 0) Q(i, i - 1) = rate;
    if (i + 1 < n) Q(i, i + 1) = rate;
    Q(i, i) = -((i > 0 ? rate : 0.0) + (i + 1 < n ? rate : 0.0) + d);
    labels[i] = std::to_string(i + 1);
  }
  return make_sub_generator(std::move(Q), std::move(labels));
}

// shared by example1/example2: one incremental conditioned propagation
// produces the survival curve, the extinction-rate curve and the TV distance
// to the Yaglom limit
struct ChainCurves {
  std::vector<double> t, survival, log_survival, rate, tv_to_alpha;
};

inline ChainCurves chain_curves(const SubGenerator& g, const QsdResult& spec,
                                int init_state_1based,
                                const std::vector<double>& grid) {
  if (init_state_1based < 1 || init_state_1based > g.dim())
    throw ConfigError("init state out of range");
  ChainCurves out;
  Vec v = point_mass(g.dim(), init_state_1based - 1);
  Vec kill = g.kill_rates();
  double log_s = 0.0, prev_t = 0.0;
  for (double t : grid) {
    if (t > prev_t) {
      ConditionedLaw c = conditioned_distribution(g, v, t - prev_t);
      v = c.dist;
      log_s += c.log_survival;
      prev_t = t;
    }
    out.t.push_back(t);
    out.log_survival.push_back(log_s);
    out.survival.push_back(std::exp(log_s));
    out.rate.push_back(v.dot(kill));
    out.tv_to_alpha.push_back(tv_distance(v, spec.alpha));
  }
  return out;
}

inline void emit_chain_outputs(const json& cfg, const SubGenerator& g,
                               const QsdResult& spec, int init,
                               const std::vector<double>& grid, Emitter& emit,
                               json& results) {
  results["theta"] = spec.theta;
  results["chi"] = spec.chi;
  results["gap"] = spec.gap();
  if (wants(cfg, "qsd")) {
    csv::Table t;
    t.header = {"state", "alpha", "pi"};
    for (int i = 0; i < g.dim(); ++i)
      t.add_row({g.label(i), csv::fmt(spec.alpha[i]), csv::fmt(spec.pi[i])});
    emit.write("qsd.csv", t);
  }
  if (wants(cfg, "curves") || wants(cfg, "distances")) {
    ChainCurves c = chain_curves(g, spec, init, grid);
    if (wants(cfg, "curves")) {
      csv::Table t;
      t.header = {"t", "survival", "log_survival", "extinction_rate"};
      for (std::size_t i = 0; i < c.t.size(); ++i)
        t.add_row({csv::fmt(c.t[i]), csv::fmt(c.survival[i]),
                   csv::fmt(c.log_survival[i]), csv::fmt(c.rate[i])});
      emit.write("survival_curve.csv", t);
    }
    if (wants(cfg, "distances")) {
      csv::Table t;
      t.header = {"t", "tv_to_yaglom", "minus_log_survival"};
      for (std::size_t i = 0; i < c.t.size(); ++i)
        t.add_row({csv::fmt(c.t[i]), csv::fmt(c.tv_to_alpha[i]),
                   csv::fmt(-c.log_survival[i])});
      emit.write("distance_vs_survival.csv", t);
    }
    results["final_rate"] = c.rate.back();
    results["final_tv_to_yaglom"] = c.tv_to_alpha.back();
  }
}

inline void run_example1(const json& cfg, Emitter& emit, json& results) {
  require_params(cfg, {"n", "rate", "d", "init", "t_max", "n_times"});
  const json& p = cfg["params"];
  SubGenerator g = uniform_killing_walk(p["n"].get<int>(), p["rate"].get<double>(),
                                        p["d"].get<double>());
  QsdResult spec = solve_qsd_spectral(g);
  emit_chain_outputs(cfg, g, spec, p["init"].get<int>(),
                     time_grid(p["t_max"].get<double>(), p["n_times"].get<long>()),
                     emit, results);
}

inline void run_example2(const json& cfg, Emitter& emit, json& results) {
  require_params(cfg, {"lambda", "mu", "n", "init", "t_max", "n_times"});
  const json& p = cfg["params"];
  BirthDeathRates rates =
      BirthDeathRates::linear(p["lambda"].get<double>(), p["mu"].get<double>());
  SubGenerator g = bd_truncated_generator(rates, p["n"].get<long>());
  QsdResult spec = solve_qsd_spectral(g);
  emit_chain_outputs(cfg, g, spec, p["init"].get<int>(),
                     time_grid(p["t_max"].get<double>(), p["n_times"].get<long>()),
                     emit, results);
}

inline void run_example3_bd(const json& cfg, Emitter& emit, json& results) {
  require_params(cfg, {"lambda", "mu", "c", "n_trunc", "init", "particles",
                       "t_burnin", "t_avg", "n_snapshots", "t_path"});
  const json& p = cfg["params"];
  BirthDeathRates rates = BirthDeathRates::logistic(
      p["lambda"].get<double>(), p["mu"].get<double>(), p["c"].get<double>());

  BdClassification cls = classify_qsd(rates);
  results["regime"] = to_string(cls.regime);
  results["series_S"] = to_string(cls.series_s);
  results["xi1_lo"] = cls.xi1.lo;
  results["xi1_hi"] = cls.xi1.hi;

  TruncatedQsd tq = truncated_qsd(rates, p["n_trunc"].get<long>());
  results["theta"] = tq.base.theta;
  results["chi"] = tq.base.chi;
  results["sensitivity_tv"] = tq.sensitivity_tv;
  long mode = 0;
  tq.base.alpha.maxCoeff(&mode);
  results["mode_state"] = mode + 1;

  if (wants(cfg, "qsd")) {
    csv::Table t;
    t.header = {"state", "alpha"};
    for (long i = 0; i < tq.base.alpha.size(); ++i)
      t.add_row({std::to_string(i + 1), csv::fmt(tq.base.alpha[i])});
    emit.write("qsd.csv", t);
  }
  if (wants(cfg, "fv")) {
    FvYaglomEstimate est = fv_yaglom_estimate(
        BdChainDynamics{rates}, p["particles"].get<long>(), p["init"].get<long>(),
        p["t_burnin"].get<double>(), p["t_avg"].get<double>(),
        p["n_snapshots"].get<int>(), seed_of(cfg));
    emit.write("fv_qsd.csv", measure_table(est.average));
    emit.write("fv_snapshots.csv", snapshots_table(est.run));
    auto it = est.average.weights.find(1);
    results["xi1_fv"] = rates.mu(1) * (it == est.average.weights.end() ? 0.0 : it->second);
    results["fv_jump_count"] = est.run.jump_count;
    results["fv_wall_seconds"] = est.run.wall_seconds;
  }
  if (wants(cfg, "paths")) {
    BdPath path = simulate_bd_path(rates, p["init"].get<long>(),
                                   p["t_path"].get<double>(), seed_of(cfg));
    csv::Table t;
    t.header = {"t", "state"};
    for (std::size_t i = 0; i < path.times.size(); ++i)
      t.add_row({csv::fmt(path.times[i]), std::to_string(path.states[i])});
    emit.write("path.csv", t);
  }
}

inline void run_example4_feller(const json& cfg, Emitter& emit, json& results) {
  require_params(cfg, {"r", "c", "gamma", "epsilon", "n_grid", "z0", "particles",
                       "dt", "t_burnin", "t_avg", "n_snapshots", "t_path"});
  const json& p = cfg["params"];
  FellerParams fp{p["gamma"].get<double>(), p["r"].get<double>(), p["c"].get<double>()};
  KolmogorovModel model = feller_to_kolmogorov(fp);
  const double eps = p["epsilon"].get<double>();

  DiscretizedOperator disc = discretize_generator(model, eps, 0.0, p["n_grid"].get<int>());
  const ContinuousEigenResult& e = disc.eig;
  results["lambda1"] = e.lambda1;
  results["lambda2"] = e.lambda2;
  results["epsilon"] = e.eps;
  results["x_max"] = e.x_max;
  results["n_grid"] = e.n_grid;
  // peak of the density pulled back to the population coordinate z = gamma x^2/2
  {
    long best = 0;
    double best_v = -1.0;
    for (long i = 0; i < static_cast<long>(e.x.size()); ++i) {
      double v = e.alpha_density[i] / (fp.gamma * e.x[i]);
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    results["z_peak_spectral"] = feller_z_from_x(fp, e.x[best]);
  }

  if (wants(cfg, "eigen")) {
    csv::Table t;
    t.header = {"x", "eta1", "alpha_density"};
    for (std::size_t i = 0; i < e.x.size(); ++i)
      t.add_row({csv::fmt(e.x[i]), csv::fmt(e.eta1[i]), csv::fmt(e.alpha_density[i])});
    emit.write("eigen.csv", t);
  }
  if (wants(cfg, "fv")) {
    DiffusionDynamics dyn;
    dyn.kind = DiffusionDynamics::Kind::kolmogorov_x;
    dyn.model = model;
    dyn.eps = eps;
    dyn.dt = p["dt"].get<double>();
    double x0 = feller_x_from_z(fp, p["z0"].get<double>());
    FvYaglomEstimate est = fv_yaglom_estimate(
        dyn, p["particles"].get<long>(), x0, p["t_burnin"].get<double>(),
        p["t_avg"].get<double>(), p["n_snapshots"].get<int>(), seed_of(cfg));
    Histogram fv_hist = make_histogram(est.average.samples, 100, eps, e.x_max);
    emit.write("fv_hist.csv", hist_table(fv_hist));
    emit.write("fv_snapshots.csv", snapshots_table(est.run, 100, eps, e.x_max));
    Histogram spectral_hist =
        histogram_from_grid_density(fv_hist.edges, e.x, e.alpha_density);
    results["l1_fv_vs_spectral"] = l1_distance(fv_hist, spectral_hist);
    std::vector<double> z_samples;
    z_samples.reserve(est.average.samples.size());
    for (double x : est.average.samples) z_samples.push_back(feller_z_from_x(fp, x));
    results["z_peak_fv"] = make_histogram(z_samples, 100).peak();
    results["fv_jump_count"] = est.run.jump_count;
    results["fv_wall_seconds"] = est.run.wall_seconds;
  }
  if (wants(cfg, "paths")) {
    double t_path = p["t_path"].get<double>();
    long stride = std::max(1L, static_cast<long>(t_path / fp.default_dt()) / 4000);
    DiffusionPath path =
        simulate_feller(fp, p["z0"].get<double>(), t_path, seed_of(cfg), 0.0, 0, stride);
    emit.write("path.csv", path_table(path, "z"));
  }
}

inline void run_example5_lv(const json& cfg, Emitter& emit, json& results) {
  require_params(cfg, {"z0", "n_paths", "dt", "t_max", "n_times", "particles",
                       "t_fv", "n_times_fv", "t_path"});
  const json& p = cfg["params"];
  LvParams lv = LvParams::three_type_example();
  std::vector<double> z0 = p["z0"].get<std::vector<double>>();
  results["balance"] = balance_holds(lv);

  if (wants(cfg, "modes")) {
    // Plain Monte Carlo over independent killed paths.  Total survival decays
    // roughly like exp(-1.6 t), so this curve is only usable on a short
    // horizon; the Fleming-Viot curve below covers large t.
    ModeCurves mc = mode_probabilities(
        lv, z0, time_grid(p["t_max"].get<double>(), p["n_times"].get<long>()),
        p["n_paths"].get<long>(), p["dt"].get<double>(), seed_of(cfg));
    csv::Table t;
    t.header = {"t", "survivors"};
    for (const auto& name : mc.pattern) t.header.push_back("p_" + name);
    for (std::size_t i = 0; i < mc.t.size(); ++i) {
      std::vector<std::string> row{csv::fmt(mc.t[i]), std::to_string(mc.survivors[i])};
      for (double f : mc.freq[i]) row.push_back(csv::fmt(f));
      t.add_row(std::move(row));
    }
    emit.write("modes.csv", t);
    results["low_sample"] = mc.low_sample;
    results["final_survivors"] = mc.survivors.back();
    results["mc_final_p_type1_only"] = mc.freq.back()[0];  // pattern "100" is mask 1
    results["mc_final_p_coexistence"] = mc.freq.back()[mc.coexistence_index()];
  }
  if (wants(cfg, "fv_modes")) {
    // Fleming-Viot ensemble: revival on total extinction keeps the sample size
    // at N for all t, so the conditional mode frequencies stay resolved far
    // beyond the horizon reachable by independent paths.
    LvFvResult fv = fv_lv_modes(
        lv, z0, time_grid(p["t_fv"].get<double>(), p["n_times_fv"].get<long>()),
        p["particles"].get<long>(), p["dt"].get<double>(), seed_of(cfg));
    csv::Table t;
    t.header = {"t"};
    for (const auto& name : fv.modes.pattern) t.header.push_back("p_" + name);
    for (std::size_t i = 0; i < fv.modes.t.size(); ++i) {
      std::vector<std::string> row{csv::fmt(fv.modes.t[i])};
      for (double f : fv.modes.freq[i]) row.push_back(csv::fmt(f));
      t.add_row(std::move(row));
    }
    emit.write("fv_modes.csv", t);
    results["fv_jump_count"] = fv.jump_count;
    results["final_p_type1_only"] = fv.modes.freq.back()[0];
    results["final_p_coexistence"] =
        fv.modes.freq.back()[fv.modes.coexistence_index()];
  }
  if (wants(cfg, "paths")) {
    double t_path = p["t_path"].get<double>();
    double dt = p["dt"].get<double>();
    long stride = std::max(1L, static_cast<long>(t_path / dt) / 4000);
    LvPath path = simulate_lv(lv, z0, t_path, seed_of(cfg), dt, 0, stride);
    csv::Table t;
    t.header = {"t"};
    for (int i = 0; i < lv.k(); ++i) t.header.push_back("z" + std::to_string(i + 1));
    for (std::size_t i = 0; i < path.t.size(); ++i) {
      std::vector<std::string> row{csv::fmt(path.t[i])};
      for (double z : path.z[i]) row.push_back(csv::fmt(z));
      t.add_row(std::move(row));
    }
    emit.write("path.csv", t);
  }
}

inline void run_wright_fisher(const json& cfg, Emitter& emit, json& results) {
  require_params(cfg, {"epsilon", "particles", "dt", "z0", "t_burnin", "t_avg",
                       "n_snapshots", "t_path"});
  const json& p = cfg["params"];
  DiffusionDynamics dyn;
  dyn.kind = DiffusionDynamics::Kind::wright_fisher;
  dyn.eps = p["epsilon"].get<double>();
  dyn.dt = p["dt"].get<double>();

  if (wants(cfg, "fv")) {
    FvYaglomEstimate est = fv_yaglom_estimate(
        dyn, p["particles"].get<long>(), p["z0"].get<double>(),
        p["t_burnin"].get<double>(), p["t_avg"].get<double>(),
        p["n_snapshots"].get<int>(), seed_of(cfg));
    Histogram fv_hist = make_histogram(est.average.samples, 100, 0.0, 1.0);
    emit.write("fv_hist.csv", hist_table(fv_hist));
    emit.write("fv_snapshots.csv", snapshots_table(est.run, 100, 0.0, 1.0));
    Histogram ref = histogram_from_density(fv_hist.edges,
                                           [](double x) { return 2.0 - 2.0 * x; });
    results["l1_to_reference"] = l1_distance(fv_hist, ref);
    results["fv_jump_count"] = est.run.jump_count;
    results["fv_wall_seconds"] = est.run.wall_seconds;
  }
  if (wants(cfg, "paths")) {
    double t_path = p["t_path"].get<double>();
    long stride = std::max(1L, static_cast<long>(t_path / dyn.dt) / 4000);
    DiffusionPath path = simulate_wright_fisher(p["z0"].get<double>(), t_path,
                                                seed_of(cfg), dyn.dt, 0, stride);
    emit.write("path.csv", path_table(path, "z"));
  }
}

inline std::set<std::string> legal_outputs(const std::string& name) {
  if (name == "example1" || name == "example2") return {"qsd", "curves", "distances"};
  if (name == "example3_bd") return {"qsd", "fv", "paths"};
  if (name == "example4_feller") return {"eigen", "fv", "paths"};
  if (name == "example5_lv") return {"modes", "fv_modes", "paths"};
  if (name == "wright_fisher") return {"fv", "paths"};
  throw ConfigError("unknown scenario '" + name + "'");
}

}  // namespace detail

// Completes `cfg` with the built-in defaults, validates it, runs the scenario
// and writes the requested CSVs plus manifest.json into out_dir.  Validation
// happens before anything is written.
inline RunSummary run_scenario(const json& cfg_in,
                               const std::filesystem::path& out_dir) {
  if (!cfg_in.is_object() || !cfg_in.contains("scenario") ||
      !cfg_in["scenario"].is_string())
    throw ConfigError("config needs a 'scenario' name");
  const std::string name = cfg_in["scenario"].get<std::string>();
  json cfg = builtin_config(name);
  merge_into(cfg, cfg_in);

  detail::require_outputs(cfg, detail::legal_outputs(name));

  RunSummary summary;
  summary.scenario = name;
  summary.out_dir = out_dir;

  auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  detail::Emitter emit(out_dir, summary);
  json results;
  if (name == "example1")
    detail::run_example1(cfg, emit, results);
  else if (name == "example2")
    detail::run_example2(cfg, emit, results);
  else if (name == "example3_bd")
    detail::run_example3_bd(cfg, emit, results);
  else if (name == "example4_feller")
    detail::run_example4_feller(cfg, emit, results);
  else if (name == "example5_lv")
    detail::run_example5_lv(cfg, emit, results);
  else
    detail::run_wright_fisher(cfg, emit, results);
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json manifest;
  manifest["scenario"] = name;
  manifest["inputs"] = cfg;
  manifest["seed"] = cfg.contains("seed") ? cfg["seed"] : json();
  manifest["versions"] = {{"toolkit", kToolkitVersion},
                          {"compiler", __VERSION__},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)}};
  manifest["artifacts"] = summary.artifacts;
  manifest["wall_seconds"] = wall;
  manifest["results"] = results;
  std::ofstream mf(out_dir / "manifest.json", std::ios::binary);
  if (!mf) throw ConfigError("cannot write manifest.json");
  mf << manifest.dump(2) << "\n";
  summary.artifacts.push_back("manifest.json");
  summary.manifest = std::move(manifest);
  return summary;
}

}  // namespace qsd::scenario
