// qsdlab: scenario runner for the quasi-stationary distribution toolkit.
//
// Usage:
//   qsdlab --list
//   qsdlab run <scenario-name-or-config.json> [--out DIR] [--seed N]
//          [--particles N] [--epsilon X] [--dt X] [--t-max X]
//          [--override key=value ...] [--<param> value ...]
//
// Any unrecognized --key value pair is treated as --override key=value, so
// `qsdlab run example1 --d 0.001` adjusts the killing rate of example 1.
//
// Exit codes: 0 ok; 2 config; 3 generator invalid; 4 no convergence;
// 5 grid/quadrature; 6 not subcritical; 7 ensemble collapse / event cap;
// 8 bin mismatch; 1 anything else.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qsd/scenario.hpp"

namespace {

int run_command(const std::string& target, const std::string& out_dir,
                const std::vector<std::string>& overrides) {
  namespace sc = qsd::scenario;
  sc::json cfg;
  std::filesystem::path p(target);
  if (std::filesystem::exists(p) &&
      (p.extension() == ".json" || std::filesystem::is_regular_file(p))) {
    cfg = sc::load_config(p);
    if (!cfg.contains("scenario"))
      throw qsd::ConfigError("config file " + target + " lacks a 'scenario' field");
  } else {
    cfg["scenario"] = target;
  }
  for (const std::string& kv : overrides) sc::apply_override(cfg, kv);

  std::string dir = out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("QSD_OUT");
    dir = env != nullptr ? env
                         : "qsd_out_" + cfg["scenario"].get<std::string>();
  }
  sc::RunSummary s = sc::run_scenario(cfg, dir);
  std::cout << "scenario " << s.scenario << " -> " << s.out_dir.string() << "\n";
  for (const auto& a : s.artifacts) std::cout << "  wrote " << a << "\n";
  if (s.manifest.contains("results"))
    std::cout << "results: " << s.manifest["results"].dump() << "\n";
  return 0;
}

void print_list() {
  for (const auto& info : qsd::scenario::list_scenarios())
    std::cout << info.name << "  -  " << info.description << "\n";
}

// turn leftover "--key value" / "--key=value" tokens into key=value overrides
std::vector<std::string> overrides_from_extras(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string tok = extras[i];
    if (tok.rfind("--", 0) != 0)
      throw qsd::ConfigError("unexpected argument '" + tok + "'");
    tok = tok.substr(2);
    if (tok.find('=') != std::string::npos) {
      out.push_back(tok);
    } else {
      if (i + 1 >= extras.size())
        throw qsd::ConfigError("flag --" + tok + " needs a value");
      out.push_back(tok + "=" + extras[++i]);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasi-stationary distribution toolkit scenario runner"};
  app.set_help_all_flag("--help-all");

  bool list_flag = false;
  app.add_flag("--list", list_flag, "list built-in scenarios and exit");

  auto* run = app.add_subcommand("run", "run a scenario and emit its artifacts");
  run->allow_extras();
  std::string target, scenario_flag, out_dir;
  long seed = -1, particles = -1;
  double epsilon = -1.0, dt = -1.0, t_max = -1.0;
  std::vector<std::string> overrides;
  run->add_option("target", target, "built-in name or path to a config file");
  run->add_option("--scenario", scenario_flag, "built-in name or config file path");
  run->add_option("--out", out_dir, "output directory (default $QSD_OUT or ./qsd_out_<name>)");
  run->add_option("--seed", seed, "RNG seed override");
  run->add_option("--particles", particles, "Fleming-Viot particle count override");
  run->add_option("--epsilon", epsilon, "diffusion kill barrier override");
  run->add_option("--dt", dt, "Euler step override");
  run->add_option("--t-max", t_max, "time horizon override");
  run->add_option("--override", overrides, "key=value (repeatable; dotted paths allowed)")
      ->take_all();

  CLI11_PARSE(app, argc, argv);

  try {
    if (list_flag) {
      print_list();
      return 0;
    }
    if (!run->parsed()) {
      std::cerr << app.help();
      return 2;
    }
    if (target.empty()) target = scenario_flag;
    if (target.empty())
      throw qsd::ConfigError("no scenario given: pass a name or config path");

    std::vector<std::string> all;
    if (seed >= 0) all.push_back("seed=" + std::to_string(seed));
    if (particles >= 0) all.push_back("particles=" + std::to_string(particles));
    if (epsilon >= 0.0) all.push_back("epsilon=" + qsd::csv::fmt(epsilon));
    if (dt >= 0.0) all.push_back("dt=" + qsd::csv::fmt(dt));
    if (t_max >= 0.0) all.push_back("t_max=" + qsd::csv::fmt(t_max));
    for (const auto& kv : overrides) all.push_back(kv);
    for (const auto& kv : overrides_from_extras(run->remaining())) all.push_back(kv);
    return run_command(target, out_dir, all);
  } catch (const qsd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const qsd::NotAGenerator& e) {
    std::cerr << "generator error: " << e.what() << "\n";
    return 3;
  } catch (const qsd::ReducibleChain& e) {
    std::cerr << "generator error: " << e.what() << "\n";
    return 3;
  } catch (const qsd::NoConvergence& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 4;
  } catch (const qsd::GridTooCoarse& e) {
    std::cerr << "discretization error: " << e.what() << "\n";
    return 5;
  } catch (const qsd::QuadratureError& e) {
    std::cerr << "quadrature error: " << e.what() << "\n";
    return 5;
  } catch (const qsd::NotSubcritical& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 6;
  } catch (const qsd::EnsembleCollapse& e) {
    std::cerr << "particle-system error: " << e.what() << "\n";
    return 7;
  } catch (const qsd::EventCapExceeded& e) {
    std::cerr << "particle-system error: " << e.what() << "\n";
    return 7;
  } catch (const qsd::BinMismatch& e) {
    std::cerr << "measure error: " << e.what() << "\n";
    return 8;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
