// Scenario plumbing and the command-line runner: CSV round-trips, config
// merging and overrides, artifact layout, reproducibility, and the exit-code
// contract of the installed binary.  The binary path is injected by the build
// as QSD_CLI_BIN.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "qsd/scenario.hpp"

using namespace qsd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("qsd_scn_" + tag);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json manifest_of(const fs::path& dir) { return json::parse(slurp(dir / "manifest.json")); }

struct CliResult {
  int exit_code;
  std::string out, err;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  fs::path cap = fs::temp_directory_path() / ("qsd_cli_cap_" + std::to_string(counter++));
  fs::create_directories(cap);
  fs::path so = cap / "out.txt", se = cap / "err.txt";
  std::string cmd = std::string(QSD_CLI_BIN) + " " + args + " > " + so.string() +
                    " 2> " + se.string();
  int status = std::system(cmd.c_str());
  int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return {code, slurp(so), slurp(se)};
}

}  // namespace

TEST_CASE("csv tables and numbers round-trip exactly") {
  csv::Table t;
  t.header = {"a", "b", "label"};
  t.add_row({csv::fmt(0.1), csv::fmt(-3.25), "first"});
  t.add_row({csv::fmt(1e-17), csv::fmt(12345.678901234567), "second"});
  fs::path dir = fresh_dir("csv");
  fs::create_directories(dir);
  t.write(dir / "t.csv");
  csv::Table u = csv::read(dir / "t.csv");
  REQUIRE(u.header == t.header);
  REQUIRE(u.rows == t.rows);

  for (double v : {0.1, -3.25, 1e-17, 12345.678901234567, 5.835152766e-05}) {
    REQUIRE(csv::parse_double(csv::fmt(v)) == v);  // shortest form, exact
    REQUIRE(csv::fmt(v).find(',') == std::string::npos);
  }
  REQUIRE_THROWS_AS(csv::parse_double("abc"), ConfigError);
  REQUIRE_THROWS_AS(csv::read(dir / "missing.csv"), ConfigError);

  // written bytes: LF line endings, '.' decimal point, no CR anywhere
  std::string raw = slurp(dir / "t.csv");
  REQUIRE(raw.find('\r') == std::string::npos);
  REQUIRE(raw.back() == '\n');
  REQUIRE(raw.find("0.1") != std::string::npos);
}

TEST_CASE("generator matrices survive a CSV round-trip") {
  Mat Q(3, 3);
  Q << -1.25, 1.0, 0.125, 0.5, -2.0, 1.0, 0.0, 0.3, -0.9;
  SubGenerator g = make_sub_generator(Q, {"low", "mid", "high"});
  fs::path dir = fresh_dir("gen");
  fs::create_directories(dir);
  csv::save_generator(g, dir / "g.csv");
  SubGenerator h = csv::load_generator(dir / "g.csv");
  REQUIRE(h.dim() == 3);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(h.label(i) == g.label(i));
    for (int j = 0; j < 3; ++j) REQUIRE(h.Q(i, j) == Q(i, j));
  }

  csv::Table bad;
  bad.header = {"a", "b"};
  bad.add_row({"0", "0"});
  bad.write(dir / "bad.csv");
  REQUIRE_THROWS_AS(csv::load_generator(dir / "bad.csv"), ConfigError);
}

TEST_CASE("scenario registry lists unique names with defaults for each") {
  std::set<std::string> names;
  for (const auto& info : scenario::list_scenarios()) {
    REQUIRE(names.insert(info.name).second);
    REQUIRE_FALSE(info.description.empty());
    json cfg = scenario::builtin_config(info.name);
    REQUIRE(cfg["scenario"] == info.name);
    REQUIRE(cfg.contains("seed"));
    REQUIRE(cfg["outputs"].is_array());
    REQUIRE_FALSE(cfg["outputs"].empty());
    REQUIRE(cfg["params"].is_object());
  }
  REQUIRE(names.size() == 6);
  REQUIRE(names.count("wright_fisher") == 1);
  REQUIRE_THROWS_AS(scenario::builtin_config("nope"), ConfigError);
}

TEST_CASE("override strings edit the config at dotted paths") {
  json cfg = scenario::builtin_config("example2");
  scenario::apply_override(cfg, "lambda=1.1");  // bare key lands in params
  REQUIRE(cfg["params"]["lambda"] == 1.1);
  scenario::apply_override(cfg, "params.t_max=5");
  REQUIRE(cfg["params"]["t_max"] == 5);
  scenario::apply_override(cfg, "seed=9");  // top-level keys stay top-level
  REQUIRE(cfg["seed"] == 9);
  scenario::apply_override(cfg, "outputs=[\"qsd\"]");
  REQUIRE(cfg["outputs"] == json::array({"qsd"}));
  scenario::apply_override(cfg, "note=hello");  // non-JSON stays a string
  REQUIRE(cfg["params"]["note"] == "hello");
  REQUIRE_THROWS_AS(scenario::apply_override(cfg, "novalue"), ConfigError);
  REQUIRE_THROWS_AS(scenario::apply_override(cfg, "=5"), ConfigError);
  REQUIRE_THROWS_AS(scenario::apply_override(cfg, "params..x=5"), ConfigError);
}

TEST_CASE("config validation happens before any artifact is written") {
  fs::path dir = fresh_dir("valfirst");
  json cfg;
  cfg["scenario"] = "example1";
  cfg["outputs"] = json::array();
  REQUIRE_THROWS_AS(scenario::run_scenario(cfg, dir), ConfigError);
  REQUIRE_FALSE(fs::exists(dir));  // empty outputs rejected up front

  cfg["outputs"] = {"curves", "nonsense"};
  REQUIRE_THROWS_AS(scenario::run_scenario(cfg, dir), ConfigError);
  REQUIRE_FALSE(fs::exists(dir));

  cfg["outputs"] = {"qsd"};
  cfg["params"]["bogus"] = 1;
  REQUIRE_THROWS_AS(scenario::run_scenario(cfg, dir), ConfigError);
  REQUIRE_FALSE(fs::exists(dir / "manifest.json"));

  json empty;
  REQUIRE_THROWS_AS(scenario::run_scenario(empty, dir), ConfigError);
}

TEST_CASE("uniform-killing walk: rate equals the killing parameter") {
  // the conservative part is symmetric, so the conditioned limit is uniform
  // and the decay rate is exactly d
  fs::path dir = fresh_dir("ex1");
  json cfg;
  cfg["scenario"] = "example1";
  cfg["params"] = {{"n", 25}, {"rate", 25.0}, {"d", 0.07},
                   {"t_max", 5.0}, {"n_times", 6}};
  scenario::RunSummary s = scenario::run_scenario(cfg, dir);
  REQUIRE(s.scenario == "example1");
  json m = manifest_of(dir);
  REQUIRE(std::abs(m["results"]["theta"].get<double>() - 0.07) < 1e-10);
  REQUIRE(m["results"]["gap"].get<double>() > 0.0);

  csv::Table q = csv::read(dir / "qsd.csv");
  REQUIRE(q.header == std::vector<std::string>{"state", "alpha", "pi"});
  REQUIRE(q.rows.size() == 25);
  REQUIRE(q.rows.front()[0] == "1");
  for (const auto& row : q.rows)
    REQUIRE(std::abs(csv::parse_double(row[1]) - 1.0 / 25) < 1e-9);

  // survival decays, the distance to the limit shrinks
  csv::Table c = csv::read(dir / "survival_curve.csv");
  REQUIRE(c.rows.size() == 6);
  double s0 = csv::parse_double(c.rows.front()[1]);
  double s1 = csv::parse_double(c.rows.back()[1]);
  REQUIRE(s0 == 1.0);
  REQUIRE(s1 < s0);
  csv::Table d = csv::read(dir / "distance_vs_survival.csv");
  REQUIRE(csv::parse_double(d.rows.back()[1]) <
          csv::parse_double(d.rows[1][1]));
  for (const auto& a : {"qsd.csv", "survival_curve.csv",
                        "distance_vs_survival.csv", "manifest.json"})
    REQUIRE(fs::exists(dir / a));
}

TEST_CASE("remaining built-in scenarios run end to end on small budgets") {
  {  // truncated linear chain
    fs::path dir = fresh_dir("ex2");
    json cfg;
    cfg["scenario"] = "example2";
    cfg["params"] = {{"n", 40}, {"init", 5}, {"t_max", 5.0}, {"n_times", 6}};
    scenario::run_scenario(cfg, dir);
    json m = manifest_of(dir);
    REQUIRE(m["results"]["theta"].get<double>() > 0.0);
    REQUIRE(m["results"]["gap"].get<double>() > 0.0);
    REQUIRE(csv::read(dir / "qsd.csv").rows.size() == 40);
  }
  {  // logistic chain with ensemble estimate and a sample path
    fs::path dir = fresh_dir("ex3");
    json cfg;
    cfg["scenario"] = "example3_bd";
    cfg["params"] = {{"n_trunc", 60},  {"particles", 300}, {"t_burnin", 2.0},
                     {"t_avg", 2.0},   {"n_snapshots", 5}, {"t_path", 3.0}};
    scenario::run_scenario(cfg, dir);
    json m = manifest_of(dir);
    REQUIRE(m["results"]["regime"] == "unique_yaglom");
    REQUIRE(m["results"]["xi1_fv"].get<double>() > 0.0);
    REQUIRE(m["results"]["mode_state"].get<int>() >= 8);
    REQUIRE(m["results"]["mode_state"].get<int>() <= 10);
    csv::Table fv = csv::read(dir / "fv_qsd.csv");
    double mass = 0.0;
    for (const auto& row : fv.rows) mass += csv::parse_double(row[1]);
    REQUIRE(std::abs(mass - 1.0) < 1e-9);
    REQUIRE(csv::read(dir / "path.csv").rows.size() >= 2);
    REQUIRE(csv::read(dir / "fv_snapshots.csv").header ==
            std::vector<std::string>{"t", "state", "weight"});
  }
  {  // logistic diffusion: finite differences + ensemble histogram
    fs::path dir = fresh_dir("ex4");
    json cfg;
    cfg["scenario"] = "example4_feller";
    cfg["params"] = {{"n_grid", 500},    {"particles", 200}, {"t_burnin", 0.5},
                     {"t_avg", 0.5},     {"n_snapshots", 3}, {"t_path", 2.0},
                     {"z0", 9.0}};
    scenario::run_scenario(cfg, dir);
    json m = manifest_of(dir);
    REQUIRE(m["results"]["lambda2"].get<double>() >
            m["results"]["lambda1"].get<double>());
    REQUIRE(std::abs(m["results"]["z_peak_spectral"].get<double>() - 9.0) < 1.0);
    csv::Table h = csv::read(dir / "fv_hist.csv");
    REQUIRE(h.header == std::vector<std::string>{"bin_left", "bin_right", "weight"});
    double mass = 0.0;
    for (const auto& row : h.rows) mass += csv::parse_double(row[2]);
    REQUIRE(std::abs(mass - 1.0) < 1e-9);
    REQUIRE(fs::exists(dir / "eigen.csv"));
    REQUIRE(fs::exists(dir / "path.csv"));
  }
  {  // three-type competition: naive curve + conditioning ensemble
    fs::path dir = fresh_dir("ex5");
    json cfg;
    cfg["scenario"] = "example5_lv";
    cfg["params"] = {{"n_paths", 1000},  {"t_max", 1.0},  {"n_times", 3},
                     {"particles", 100}, {"t_fv", 1.5},   {"n_times_fv", 4},
                     {"t_path", 1.0},    {"dt", 2e-3}};
    scenario::run_scenario(cfg, dir);
    json m = manifest_of(dir);
    REQUIRE(m["results"]["balance"] == true);
    csv::Table modes = csv::read(dir / "modes.csv");
    REQUIRE(modes.header.size() == 9);  // t, survivors, 7 patterns
    for (const auto& row : modes.rows) {
      double tot = 0.0;
      for (std::size_t j = 2; j < row.size(); ++j) tot += csv::parse_double(row[j]);
      REQUIRE(std::abs(tot - 1.0) < 1e-9);
    }
    csv::Table fvm = csv::read(dir / "fv_modes.csv");
    REQUIRE(fvm.header.size() == 8);
    REQUIRE(fvm.rows.size() == 4);
    csv::Table path = csv::read(dir / "path.csv");
    REQUIRE(path.header == std::vector<std::string>{"t", "z1", "z2", "z3"});
  }
  {  // killed allele-frequency diffusion
    fs::path dir = fresh_dir("wf");
    json cfg;
    cfg["scenario"] = "wright_fisher";
    cfg["params"] = {{"particles", 300}, {"dt", 1e-3},      {"t_burnin", 1.0},
                     {"t_avg", 1.0},     {"n_snapshots", 3}, {"t_path", 1.0}};
    scenario::run_scenario(cfg, dir);
    json m = manifest_of(dir);
    REQUIRE(m["results"]["l1_to_reference"].get<double>() < 2.0);
    REQUIRE(m["results"]["fv_jump_count"].get<long>() > 0);
    REQUIRE(fs::exists(dir / "fv_hist.csv"));
    REQUIRE(fs::exists(dir / "path.csv"));
  }
}

TEST_CASE("binary lists the built-in scenarios") {
  CliResult r = run_cli("--list");
  REQUIRE(r.exit_code == 0);
  for (const auto& info : scenario::list_scenarios())
    REQUIRE(r.out.find(info.name) != std::string::npos);
}

TEST_CASE("binary merges builtin, file and flag layers in order") {
  fs::path dir = fresh_dir("layers");
  fs::create_directories(dir);
  {
    json file_cfg;
    file_cfg["scenario"] = "example2";
    file_cfg["seed"] = 2;
    file_cfg["outputs"] = {"qsd"};
    file_cfg["params"] = {{"n", 40}};
    std::ofstream out(dir / "cfg.json");
    out << file_cfg.dump(2);
  }
  fs::path run_dir = dir / "run";
  CliResult r = run_cli("run " + (dir / "cfg.json").string() + " --out " +
                        run_dir.string() + " --seed 3 --override params.t_max=2.0");
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  json m = manifest_of(run_dir);
  REQUIRE(m["inputs"]["seed"] == 3);              // flag beats file's 2
  REQUIRE(m["inputs"]["params"]["n"] == 40);      // file beats builtin's 100
  REQUIRE(m["inputs"]["params"]["t_max"] == 2.0); // override wins
  REQUIRE(m["inputs"]["params"]["lambda"] == 0.9);  // builtin survives
  REQUIRE(m["inputs"]["outputs"] == json::array({"qsd"}));
  REQUIRE(csv::read(run_dir / "qsd.csv").rows.size() == 40);
  REQUIRE_FALSE(fs::exists(run_dir / "survival_curve.csv"));
}

TEST_CASE("binary reruns are byte-identical") {
  fs::path a = fresh_dir("rerun_a"), b = fresh_dir("rerun_b");
  std::string args =
      " --seed 5 --n 30 --d 0.05 --t_max 4.0 --n_times 5 --rate 10.0";
  CliResult ra = run_cli("run example1 --out " + a.string() + args);
  CliResult rb = run_cli("run example1 --out " + b.string() + args);
  REQUIRE(ra.exit_code == 0);
  REQUIRE(rb.exit_code == 0);
  for (const auto& f : {"qsd.csv", "survival_curve.csv", "distance_vs_survival.csv"})
    REQUIRE(slurp(a / f) == slurp(b / f));
}

TEST_CASE("binary forwards unnamed flags as parameter overrides") {
  fs::path dir = fresh_dir("dflag");
  CliResult r = run_cli("run example1 --out " + dir.string() +
                        " --d 0.001 --n 20 --rate 20.0 --t_max 2.0 --n_times 3");
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  json m = manifest_of(dir);
  REQUIRE(std::abs(m["results"]["theta"].get<double>() - 0.001) < 1e-10);
  csv::Table q = csv::read(dir / "qsd.csv");
  REQUIRE(q.rows.size() == 20);
  for (const auto& row : q.rows)
    REQUIRE(std::abs(csv::parse_double(row[1]) - 0.05) < 1e-9);
}

TEST_CASE("binary reproduces the decay-parameter sweep endpoint") {
  fs::path dir = fresh_dir("sweep");
  CliResult r = run_cli("run example2 --out " + dir.string() +
                        " --override lambda=1.1 'outputs=[\"qsd\"]'");
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  json m = manifest_of(dir);
  REQUIRE(m["inputs"]["params"]["lambda"] == 1.1);
  REQUIRE(std::abs(m["results"]["theta"].get<double>() - 5.835152766e-5) < 2e-6);
}

TEST_CASE("binary exit codes follow the documented contract") {
  // unknown scenario name
  CliResult bad_name = run_cli("run not_a_scenario --out " +
                               fresh_dir("err1").string());
  REQUIRE(bad_name.exit_code == 2);
  REQUIRE(bad_name.err.find("config error") != std::string::npos);

  // malformed override
  CliResult bad_ov = run_cli("run example1 --override novalue --out " +
                             fresh_dir("err2").string());
  REQUIRE(bad_ov.exit_code == 2);

  // config file without a scenario field
  fs::path dir = fresh_dir("err3");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "cfg.json");
    out << "{\"seed\": 1}";
  }
  CliResult no_name = run_cli("run " + (dir / "cfg.json").string());
  REQUIRE(no_name.exit_code == 2);

  // unparseable config file
  {
    std::ofstream out(dir / "broken.json");
    out << "{nope";
  }
  CliResult broken = run_cli("run " + (dir / "broken.json").string());
  REQUIRE(broken.exit_code == 2);

  // unknown output key, validated before anything is written
  fs::path out_dir = fresh_dir("err4");
  CliResult bad_out = run_cli("run example1 --override 'outputs=[\"wat\"]' --out " +
                              out_dir.string());
  REQUIRE(bad_out.exit_code == 2);
  REQUIRE_FALSE(fs::exists(out_dir));

  // no subcommand prints help and fails
  CliResult help = run_cli("");
  REQUIRE(help.exit_code == 2);

  // ensemble collapse surfaces as the particle-system exit code
  fs::path col = fresh_dir("err5");
  CliResult collapse = run_cli(
      "run example4_feller --out " + col.string() +
      " --particles 50 --dt 5.0 --override 'outputs=[\"fv\"]'");
  REQUIRE(collapse.exit_code == 7);
}
