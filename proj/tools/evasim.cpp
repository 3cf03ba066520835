// evasim: electric-vehicle aggregator market simulator.
//
// Subcommands:
//   simulate   run one full simulation and write report files
//   sweep      rerun the simulation across one parameter's values
//   gen-fleet  draw a synthetic fleet file from a spec
//   gen-data   write synthetic price and RegD signal files
//   report     print the summary of an existing report directory
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
// 4 internal error.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evasim/data.hpp"
#include "evasim/engine.hpp"
#include "evasim/runconfig.hpp"

namespace {

using namespace evasim;

struct FlagSet {
  std::string config, prices, regd, fleet, fleet_spec, out;
  double fleet_scale = 1.0;
  int horizon = 6;
  double alpha = 0.2, phi = 115.0, phi_prime = 115.0, rho = 0.0;
  int scenarios = 20;
  double eps_p = 3.0, eps_ev = 5.0;
  std::uint64_t seed = 1;
};

void add_common_options(CLI::App* cmd, FlagSet& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--prices", f.prices,
                  "price CSV (hour,lambda,mu_rc,mu_rp[,mileage])");
  cmd->add_option("--regd", f.regd, "RegD CSV (seconds,signal at 2 s cadence)");
  cmd->add_option("--fleet", f.fleet,
                  "fleet CSV; omit to generate the benchmark fleet");
  cmd->add_option("--fleet-spec", f.fleet_spec, "fleet spec JSON for generation");
  cmd->add_option("--fleet-scale", f.fleet_scale,
                  "scale factor for the built-in fleet");
  cmd->add_option("--horizon", f.horizon, "MPC look-ahead hours (H)");
  cmd->add_option("--alpha", f.alpha, "CVaR confidence level in (0,1)");
  cmd->add_option("--phi", f.phi, "current-hour shortfall penalty, $/MWh");
  cmd->add_option("--phi-prime", f.phi_prime,
                  "next-hour shortfall penalty, $/MWh");
  cmd->add_option("--scenarios", f.scenarios, "scenario count");
  cmd->add_option("--rho", f.rho, "owner compensation offset, $/MWh");
  cmd->add_option("--eps-p", f.eps_p, "price forecast noise, $/MWh");
  cmd->add_option("--eps-ev", f.eps_ev, "arrival forecast noise, percent");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "output directory");
}

RunConfig merge_config(const CLI::App* cmd, const FlagSet& f) {
  RunConfig cfg = RunConfig::defaults();
  if (cmd->count("--config")) cfg.apply_config_file(f.config);
  if (cmd->count("--prices")) cfg.prices_path = f.prices;
  if (cmd->count("--regd")) cfg.regd_path = f.regd;
  if (cmd->count("--fleet")) cfg.fleet_path = f.fleet;
  if (cmd->count("--fleet-spec")) cfg.fleet_spec_path = f.fleet_spec;
  if (cmd->count("--fleet-scale")) cfg.fleet_scale = f.fleet_scale;
  if (cmd->count("--horizon")) cfg.horizon = f.horizon;
  if (cmd->count("--alpha")) cfg.alpha = f.alpha;
  if (cmd->count("--phi")) cfg.phi = f.phi;
  if (cmd->count("--phi-prime")) cfg.phi_prime = f.phi_prime;
  if (cmd->count("--scenarios")) cfg.scenarios = f.scenarios;
  if (cmd->count("--rho")) cfg.rho = f.rho;
  if (cmd->count("--eps-p")) cfg.eps_p = f.eps_p;
  if (cmd->count("--eps-ev")) cfg.eps_ev = f.eps_ev;
  if (cmd->count("--seed")) cfg.seed = f.seed;
  if (cmd->count("--out")) cfg.out_dir = f.out;
  return cfg;
}

struct LoadedInputs {
  std::vector<PriceRecord> prices;
  std::vector<RegDTrace> traces;
  std::vector<EvRecord> fleet;
};

LoadedInputs load_inputs(const RunConfig& cfg) {
  if (cfg.prices_path.empty() || cfg.regd_path.empty())
    throw InvalidParameter(
        "simulate needs --prices and --regd (or config keys)");
  LoadedInputs in;
  in.traces = load_regd(cfg.regd_path);
  in.prices = load_prices(cfg.prices_path, &in.traces);
  if (!cfg.fleet_path.empty())
    in.fleet = load_fleet(cfg.fleet_path);
  else if (!cfg.fleet_spec_path.empty())
    in.fleet = generate_fleet(load_fleet_spec(cfg.fleet_spec_path), cfg.seed);
  else
    in.fleet = generate_fleet(FleetSpec::benchmark(cfg.fleet_scale), cfg.seed);
  return in;
}

void print_summary(const ReportSummary& s) {
  std::printf("hours simulated:        %d\n", s.hours);
  std::printf("energy cost:            $%.2f\n", s.energy_cost);
  std::printf("regulation credit:      $%.2f\n", s.regulation_credit);
  std::printf("daily net cost:         $%.2f\n", s.net_cost);
  std::printf("daily revenue:          $%.2f\n", s.daily_revenue());
  std::printf("mean performance score: %.4f\n", s.mean_score);
  std::printf("departures:             %d (rejected admissions: %d)\n",
              s.departures, s.rejected);
  static const char* kBucketNames[] = {"[0,0.3)",   "[0.3,0.6)", "[0.6,0.9)",
                                       "[0.9,1.2)", "[1.2,1.5)", ">=1.5"};
  std::printf("SoC deviation buckets (%%):");
  for (int b = 0; b < 6; ++b)
    std::printf(" %s: %d", kBucketNames[b], s.soc_buckets[b]);
  std::printf("\n");
}

int cmd_simulate(const CLI::App* cmd, const FlagSet& flags) {
  RunConfig cfg = merge_config(cmd, flags);
  cfg.validate();
  LoadedInputs in = load_inputs(cfg);
  auto outcomes = run(in.fleet, in.prices, in.traces, cfg.sim_params());
  if (outcomes.empty()) {
    std::fprintf(stderr, "nothing to simulate: empty fleet\n");
    return 3;
  }
  ReportSummary summary = write_report(outcomes, cfg.out_dir);
  print_summary(summary);
  std::printf("report written to %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_sweep(const CLI::App* cmd, const FlagSet& flags,
              const std::string& param, const std::string& values_csv) {
  RunConfig base = merge_config(cmd, flags);
  base.validate();
  if (param != "horizon" && param != "alpha" && param != "penalty")
    throw InvalidParameter("sweep --param must be horizon, alpha or penalty");

  std::vector<std::string> tokens;
  {
    std::stringstream ss(values_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) tokens.push_back(tok);
  }
  if (tokens.empty()) throw InvalidParameter("sweep needs --values");

  LoadedInputs in = load_inputs(base);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(base.out_dir, ec);
  std::ofstream table(fs::path(base.out_dir) / "sweep.csv");
  if (!table.is_open()) throw IoError("cannot write sweep.csv");
  table << "param,value,net_cost_usd,daily_revenue_usd,mean_score,status\n";
  std::printf("%-10s %12s %14s %16s %12s\n", "param", "value", "net_cost",
              "daily_revenue", "mean_score");

  for (const std::string& tok : tokens) {
    RunConfig cfg = base;
    std::string status = "ok";
    ReportSummary summary;
    try {
      const double v = std::stod(tok);
      if (param == "horizon") {
        cfg.horizon = static_cast<int>(v);
        if (cfg.horizon != v) throw InvalidParameter("horizon must be integer");
      } else if (param == "alpha") {
        cfg.alpha = v;
      } else {
        cfg.phi_prime = v;
      }
      cfg.validate();
      auto outcomes = run(in.fleet, in.prices, in.traces, cfg.sim_params());
      summary = summarize(outcomes);
    } catch (const std::exception& e) {
      status = std::string("error: ") + e.what();
    }
    table << param << ',' << tok << ',';
    if (status == "ok") {
      table << detail::fmt_double(summary.net_cost) << ','
            << detail::fmt_double(summary.daily_revenue()) << ','
            << detail::fmt_double(summary.mean_score) << ",ok\n";
      std::printf("%-10s %12s %14.2f %16.2f %12.4f\n", param.c_str(),
                  tok.c_str(), summary.net_cost, summary.daily_revenue(),
                  summary.mean_score);
    } else {
      table << ",,,\"" << status << "\"\n";
      std::printf("%-10s %12s %s\n", param.c_str(), tok.c_str(),
                  status.c_str());
    }
  }
  std::printf("sweep table written to %s/sweep.csv\n", base.out_dir.c_str());
  return 0;
}

int cmd_gen_fleet(const std::string& spec_path, double scale,
                  std::uint64_t seed, const std::string& out) {
  FleetSpec spec = spec_path.empty() ? FleetSpec::benchmark(scale)
                                     : load_fleet_spec(spec_path);
  auto fleet = generate_fleet(spec, seed);
  save_fleet(fleet, out);
  std::printf("wrote %zu EVs to %s\n", fleet.size(), out.c_str());
  return 0;
}

int cmd_gen_data(int hours, std::uint64_t seed, const std::string& out_dir) {
  if (hours < 2) throw InvalidParameter("gen-data needs --hours >= 2");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir);
  auto traces = synth_regd(hours, seed);
  auto prices = synth_prices(hours, seed);
  attach_mileage(prices, traces);
  save_prices(prices, (fs::path(out_dir) / "prices.csv").string());
  save_regd(traces, (fs::path(out_dir) / "regd.csv").string());
  std::printf("wrote %d hours of prices.csv and regd.csv to %s\n", hours,
              out_dir.c_str());
  return 0;
}

int cmd_report(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "summary.json");
  if (!in.is_open()) throw IoError("no summary.json under " + dir);
  nlohmann::json j;
  in >> j;
  ReportSummary s;
  s.hours = j.value("hours", 0);
  s.energy_cost = j.value("energy_cost_usd", 0.0);
  s.regulation_credit = j.value("regulation_credit_usd", 0.0);
  s.net_cost = j.value("net_cost_usd", 0.0);
  s.mean_score = j.value("mean_performance_score", 1.0);
  s.departures = j.value("departures", 0);
  s.rejected = j.value("rejected", 0);
  if (j.contains("soc_deviation_buckets"))
    s.soc_buckets = j.at("soc_deviation_buckets").get<std::vector<int>>();
  print_summary(s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"electric-vehicle aggregator market simulator"};
  app.require_subcommand(1);

  FlagSet sim_flags;
  CLI::App* simulate = app.add_subcommand("simulate", "run one simulation");
  add_common_options(simulate, sim_flags);

  FlagSet sweep_flags;
  std::string sweep_param, sweep_values;
  CLI::App* sweep = app.add_subcommand("sweep", "sweep one parameter");
  add_common_options(sweep, sweep_flags);
  sweep->add_option("--param", sweep_param, "horizon | alpha | penalty")
      ->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")
      ->required();

  std::string gf_spec, gf_out = "fleet.csv";
  double gf_scale = 1.0;
  std::uint64_t gf_seed = 1;
  CLI::App* gen_fleet_cmd =
      app.add_subcommand("gen-fleet", "generate a synthetic fleet file");
  gen_fleet_cmd->add_option("--spec", gf_spec, "fleet spec JSON");
  gen_fleet_cmd->add_option("--scale", gf_scale, "benchmark fleet scale");
  gen_fleet_cmd->add_option("--seed", gf_seed, "random seed");
  gen_fleet_cmd->add_option("--out", gf_out, "output CSV path");

  int gd_hours = 48;
  std::uint64_t gd_seed = 1;
  std::string gd_out = "data";
  CLI::App* gen_data_cmd =
      app.add_subcommand("gen-data", "generate synthetic market data");
  gen_data_cmd->add_option("--hours", gd_hours, "hours to generate");
  gen_data_cmd->add_option("--seed", gd_seed, "random seed");
  gen_data_cmd->add_option("--out", gd_out, "output directory");

  std::string rp_dir = "out";
  CLI::App* report_cmd =
      app.add_subcommand("report", "summarize an existing report directory");
  report_cmd->add_option("--dir", rp_dir, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(simulate, sim_flags);
    if (sweep->parsed())
      return cmd_sweep(sweep, sweep_flags, sweep_param, sweep_values);
    if (gen_fleet_cmd->parsed())
      return cmd_gen_fleet(gf_spec, gf_scale, gf_seed, gf_out);
    if (gen_data_cmd->parsed()) return cmd_gen_data(gd_hours, gd_seed, gd_out);
    if (report_cmd->parsed()) return cmd_report(rp_dir);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const InvalidParameter& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 4;
  }
  return 2;
}
