#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "evasim/data.hpp"
#include "evasim/engine.hpp"
#include "evasim/errors.hpp"

namespace evasim {

// Simulation configuration shared by the CLI and tests. Precedence is
// flags > config file > defaults: construct with the defaults, overlay a
// config file via apply_json (only keys present are touched), then let the
// caller overwrite fields for explicitly passed flags.
struct RunConfig {
  std::string prices_path;
  std::string regd_path;
  std::string fleet_path;       // CSV fleet; empty -> generated benchmark
  std::string fleet_spec_path;  // JSON spec for generation
  double fleet_scale = 1.0;

  int horizon = 6;
  double alpha = 0.2;
  double phi = 115.0;
  double phi_prime = 115.0;
  int scenarios = 20;
  double rho = 0.0;
  double eps_p = 3.0;
  double eps_ev = 5.0;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  static RunConfig defaults() { return RunConfig{}; }

  void apply_json(const nlohmann::json& j) {
    auto set_str = [&](const char* key, std::string& into) {
      if (j.contains(key)) into = j.at(key).get<std::string>();
    };
    auto set_num = [&](const char* key, auto& into) {
      using T = std::decay_t<decltype(into)>;
      if (j.contains(key)) into = j.at(key).get<T>();
    };
    set_str("prices", prices_path);
    set_str("regd", regd_path);
    set_str("fleet", fleet_path);
    set_str("fleet_spec", fleet_spec_path);
    set_num("fleet_scale", fleet_scale);
    set_num("horizon", horizon);
    set_num("alpha", alpha);
    set_num("phi", phi);
    set_num("phi_prime", phi_prime);
    set_num("scenarios", scenarios);
    set_num("rho", rho);
    set_num("eps_p", eps_p);
    set_num("eps_ev", eps_ev);
    set_num("seed", seed);
    set_str("out", out_dir);
  }

  void apply_config_file(const std::string& path) {
    std::ifstream in(resolve_data_path(path));
    if (!in.is_open()) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    apply_json(j);
  }

  SimParams sim_params() const {
    SimParams p;
    p.mpc.horizon = horizon;
    p.mpc.alpha = alpha;
    p.mpc.phi = phi;
    p.mpc.phi_prime = phi_prime;
    p.mpc.n_scenarios = scenarios;
    p.mpc.rho = rho;
    p.eps_p = eps_p;
    p.eps_ev = eps_ev;
    p.seed = seed;
    return p;
  }

  void validate() const {
    sim_params().mpc.validate();
    if (eps_p < 0.0 || eps_ev < 0.0)
      throw InvalidParameter("RunConfig: noise scales must be >= 0");
    if (fleet_scale <= 0.0)
      throw InvalidParameter("RunConfig: fleet_scale must be positive");
  }
};

inline FleetSpec fleet_spec_from_json(const nlohmann::json& j) {
  FleetSpec spec;
  if (!j.contains("types") || !j.at("types").is_array())
    throw ParseError("fleet spec: expected a 'types' array");
  for (const auto& t : j.at("types")) {
    EvTypeSpec ts;
    ts.label = t.value("label", std::string("T"));
    ts.count = t.at("count").get<int>();
    ts.arrival_lo = t.at("arrival").at(0).get<int>();
    ts.arrival_hi = t.at("arrival").at(1).get<int>();
    ts.depart_lo = t.at("departure").at(0).get<int>();
    ts.depart_hi = t.at("departure").at(1).get<int>();
    ts.delta_e_lo = t.at("delta_e").at(0).get<double>();
    ts.delta_e_hi = t.at("delta_e").at(1).get<double>();
    ts.p_max_lo = t.at("p_max").at(0).get<double>();
    ts.p_max_hi = t.at("p_max").at(1).get<double>();
    ts.e_rated_kwh = t.value("e_rated_kwh", 20.0);
    ts.efficiency = t.value("efficiency", 0.75);
    spec.types.push_back(ts);
  }
  spec.validate();
  return spec;
}

inline FleetSpec load_fleet_spec(const std::string& path) {
  std::ifstream in(resolve_data_path(path));
  if (!in.is_open()) throw IoError("cannot open fleet spec " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return fleet_spec_from_json(j);
}

}  // namespace evasim
