#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "evasim/errors.hpp"
#include "evasim/lp.hpp"
#include "evasim/model.hpp"
#include "evasim/rng.hpp"

namespace evasim {

// One upcoming virtual EV as seen inside a scenario: perturbed demand and
// power, plus its parking duration counted from the arrival step.
struct UpcomingEv {
  double delta_e_kwh = 0.0;
  double p_max_kw = 0.0;
  int duration_steps = 1;
};

// One sampled realization of the look-ahead: prices for offsets 1..H past the
// current hour and the upcoming virtual-EV parameters.
struct Scenario {
  double probability = 0.0;
  std::vector<double> lambda;  // $/MWh, offset t = 1..H
  std::vector<double> mu;      // composite regulation price, offset t = 1..H
  std::vector<UpcomingEv> upcoming;
};

struct MpcParams {
  int horizon = 6;            // H, look-ahead hours
  double alpha = 0.2;         // CVaR confidence level in (0,1)
  double phi = 115.0;         // $/MWh penalty on current-hour shortfall
  double phi_prime = 115.0;   // $/MWh penalty on next-hour shortfall
  int n_scenarios = 20;       // |Omega|
  double rho = 0.0;           // owner compensation offset on mu
  double bid_cap_kwh = -1.0;  // <0: derive the physical ceiling per problem

  double alpha_prime() const { return 1.0 / (1.0 - alpha); }

  void validate() const {
    if (horizon < 2) throw InvalidParameter("MpcParams: horizon must be >= 2");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw InvalidParameter("MpcParams: alpha must be in (0,1)");
    if (phi <= 0.0 || phi_prime <= 0.0)
      throw InvalidParameter("MpcParams: penalties must be positive");
    if (n_scenarios < 1)
      throw InvalidParameter("MpcParams: scenario count must be >= 1");
    if (rho < 0.0) throw InvalidParameter("MpcParams: rho must be >= 0");
  }
};

// First-stage outputs of one MPC solve.
struct MpcDecision {
  std::vector<double> pop_now_kwh;   // X_K per connected EV
  std::vector<double> reg_now_kwh;   // Y_K per connected EV
  double slack_now_kwh = 0.0;        // omega_K
  double bid_next_kwh = 0.0;         // B_{K+1}
  double objective = 0.0;            // CVaR value of the cost
  std::vector<double> scenario_excess;  // v^(s), cost above the VaR level
};

// Monte Carlo scenario sampling around the price and arrival forecasts.
// eps_p is an absolute $/MWh standard deviation applied to each price
// component; eps_ev is a percent standard deviation on upcoming-EV demand
// and power. Perturbed demand is clamped into the feasible cone of the
// perturbed power so every scenario stays schedulable.
inline std::vector<Scenario> generate_scenarios(
    const std::vector<PriceRecord>& forecast_prices,
    const std::vector<VirtualEv>& forecast_arrivals, double eps_p,
    double eps_ev, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidParameter("generate_scenarios: n must be >= 1");
  if (eps_p < 0.0 || eps_ev < 0.0)
    throw InvalidParameter("generate_scenarios: noise scales must be >= 0");
  constexpr double kLambdaFloor = 0.01;
  constexpr double kPowerFloor = 0.01;

  std::vector<Scenario> out(n);
  for (int s = 0; s < n; ++s) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(s));
    Scenario& sc = out[s];
    sc.probability = 1.0 / n;
    sc.lambda.reserve(forecast_prices.size());
    sc.mu.reserve(forecast_prices.size());
    for (const PriceRecord& p : forecast_prices) {
      const double lam = std::max(kLambdaFloor, p.lambda + eps_p * rng.normal());
      const double rc = std::max(0.0, p.mu_rc + eps_p * rng.normal());
      const double rp = std::max(0.0, p.mu_rp + eps_p * rng.normal());
      sc.lambda.push_back(lam);
      sc.mu.push_back(rc + rp * p.mileage);
    }
    sc.upcoming.reserve(forecast_arrivals.size());
    for (const VirtualEv& ev : forecast_arrivals) {
      UpcomingEv u;
      u.duration_steps = std::max(1, ev.duration_steps());
      u.p_max_kw = std::max(
          kPowerFloor, ev.p_max_kw * (1.0 + eps_ev / 100.0 * rng.normal()));
      u.delta_e_kwh = std::max(
          0.0, ev.delta_e_kwh * (1.0 + eps_ev / 100.0 * rng.normal()));
      u.delta_e_kwh = std::min(u.delta_e_kwh, u.p_max_kw * u.duration_steps);
      sc.upcoming.push_back(u);
    }
  }
  return out;
}

// Column layout of the MPC problem; all accessors are index arithmetic so the
// map stays valid for any solver round trip. Carries the builder metadata the
// extractor needs (power caps, cleared capacity).
struct MpcIndexMap {
  int n_connected = 0;
  int n_upcoming = 0;
  int horizon = 0;
  int n_scenarios = 0;
  double cleared_now_kwh = 0.0;
  std::vector<double> power_cap_kw;

  int scenario_block() const {
    return 2 * n_connected * horizon + 2 * n_upcoming * horizon + 1;
  }
  int first_stage() const { return 2 * n_connected + 2; }
  int total() const {
    return first_stage() + n_scenarios * scenario_block() + n_scenarios + 1;
  }

  int x_now(int i) const { return i; }
  int y_now(int i) const { return n_connected + i; }
  int omega_now() const { return 2 * n_connected; }
  int bid_next() const { return 2 * n_connected + 1; }

  // t is the look-ahead offset, 1..horizon
  int x_conn(int s, int i, int t) const {
    return first_stage() + s * scenario_block() + (t - 1) * n_connected + i;
  }
  int y_conn(int s, int i, int t) const {
    return first_stage() + s * scenario_block() + n_connected * horizon +
           (t - 1) * n_connected + i;
  }
  int x_upcoming(int s, int j, int t) const {
    return first_stage() + s * scenario_block() + 2 * n_connected * horizon +
           (t - 1) * n_upcoming + j;
  }
  int y_upcoming(int s, int j, int t) const {
    return first_stage() + s * scenario_block() + 2 * n_connected * horizon +
           n_upcoming * horizon + (t - 1) * n_upcoming + j;
  }
  int omega_next(int s) const {
    return first_stage() + (s + 1) * scenario_block() - 1;
  }
  int excess(int s) const {
    return first_stage() + n_scenarios * scenario_block() + s;
  }
  int var_level() const { return total() - 1; }
};

struct MpcProblem {
  lp::LpProblem problem;
  MpcIndexMap map;
  // remaining-window infeasibility absorbed by capping balance targets, kWh
  double clipped_energy_kwh = 0.0;
};

// Build the CVaR-regularized two-stage program for the current hour.
//
// Variables: first stage X_K, Y_K, omega_K, B_{K+1}; per scenario the future
// POP/regulation schedules of connected and upcoming EVs plus the next-hour
// shortfall; then one excess variable per scenario and the VaR level z.
// Objective: z + (1-alpha)^-1 sum_s pi_s v_s with all cost terms inside the
// per-scenario epigraph rows. The current hour carries no regulation revenue
// term because that capacity cleared in the previous hour.
inline MpcProblem build_mpc_problem(const ConnectedState& state,
                                    const std::vector<Scenario>& scenarios,
                                    double cleared_now_kwh, double lambda_now,
                                    const MpcParams& params) {
  state.validate();
  params.validate();
  if (scenarios.empty())
    throw InvalidParameter("build_mpc_problem: no scenarios");
  if (cleared_now_kwh < 0.0)
    throw InvalidParameter("build_mpc_problem: cleared capacity must be >= 0");
  const int H = params.horizon;
  const int nA = static_cast<int>(state.size());
  const int nF = static_cast<int>(scenarios.front().upcoming.size());
  const int S = static_cast<int>(scenarios.size());
  double prob_total = 0.0;
  for (const Scenario& sc : scenarios) {
    if (static_cast<int>(sc.lambda.size()) != H ||
        static_cast<int>(sc.mu.size()) != H)
      throw InvalidParameter("build_mpc_problem: scenario price length != H");
    if (static_cast<int>(sc.upcoming.size()) != nF)
      throw InvalidParameter(
          "build_mpc_problem: scenarios disagree on upcoming set size");
    for (double m : sc.mu)
      if (m - params.rho < -1e-9)
        throw InvalidParameter(
            "build_mpc_problem: mu - rho negative; offset outside validity");
    prob_total += sc.probability;
  }
  if (std::abs(prob_total - 1.0) > 1e-6)
    throw InvalidParameter("build_mpc_problem: probabilities must sum to 1");

  MpcProblem out;
  MpcIndexMap& map = out.map;
  map.n_connected = nA;
  map.n_upcoming = nF;
  map.horizon = H;
  map.n_scenarios = S;
  map.cleared_now_kwh = cleared_now_kwh;
  map.power_cap_kw = state.power_cap_kw;
  lp::LpProblem& p = out.problem;

  // connectivity masks: offset t is in the EV's window when t <= T - 1 for
  // connected EVs (T counts the current hour) and t <= T for upcoming EVs
  // (which plug in at offset 1)
  auto conn_a = [&](int i, int t) { return t <= state.remaining_steps[i] - 1; };
  auto conn_f = [&](const UpcomingEv& u, int t) { return t <= u.duration_steps; };

  // first stage
  for (int i = 0; i < nA; ++i)
    p.add_variable(0.0, state.power_cap_kw[i], 0.0, "x_now[" + state.ids[i] + "]");
  for (int i = 0; i < nA; ++i)
    p.add_variable(0.0, state.power_cap_kw[i] / 2.0, 0.0,
                   "y_now[" + state.ids[i] + "]");
  p.add_variable(0.0, lp::kInf, 0.0, "omega_now");

  double cap = params.bid_cap_kwh;
  if (cap < 0.0) {
    double a_half = 0.0;
    for (int i = 0; i < nA; ++i) a_half += state.power_cap_kw[i] / 2.0;
    double f_half = 0.0;
    for (const Scenario& sc : scenarios) {
      double h = 0.0;
      for (const UpcomingEv& u : sc.upcoming) h += u.p_max_kw / 2.0;
      f_half = std::max(f_half, h);
    }
    cap = a_half + f_half;
  }
  p.add_variable(0.0, cap, 0.0, "bid_next");

  // second stage
  for (int s = 0; s < S; ++s) {
    const Scenario& sc = scenarios[s];
    for (int t = 1; t <= H; ++t)
      for (int i = 0; i < nA; ++i) {
        const double ub = conn_a(i, t) ? state.power_cap_kw[i] : 0.0;
        p.add_variable(0.0, ub, 0.0);
      }
    for (int t = 1; t <= H; ++t)
      for (int i = 0; i < nA; ++i) {
        const double ub = conn_a(i, t) ? state.power_cap_kw[i] / 2.0 : 0.0;
        p.add_variable(0.0, ub, 0.0);
      }
    for (int t = 1; t <= H; ++t)
      for (int j = 0; j < nF; ++j) {
        const double ub = conn_f(sc.upcoming[j], t) ? sc.upcoming[j].p_max_kw : 0.0;
        p.add_variable(0.0, ub, 0.0);
      }
    for (int t = 1; t <= H; ++t)
      for (int j = 0; j < nF; ++j) {
        const double ub =
            conn_f(sc.upcoming[j], t) ? sc.upcoming[j].p_max_kw / 2.0 : 0.0;
        p.add_variable(0.0, ub, 0.0);
      }
    p.add_variable(0.0, lp::kInf, 0.0, "omega_next[" + std::to_string(s) + "]");
  }
  for (int s = 0; s < S; ++s)
    p.add_variable(0.0, lp::kInf, params.alpha_prime() * scenarios[s].probability,
                   "excess[" + std::to_string(s) + "]");
  p.add_variable(-lp::kInf, lp::kInf, 1.0, "var_level");

  // energy balance per connected EV and scenario; the target is the
  // remaining energy scaled by min(1, H/T), capped at what the remaining
  // connected window can physically absorb so drift never breaks the LP
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < nA; ++i) {
      const int T = state.remaining_steps[i];
      double target = state.remaining_energy_kwh[i] *
                      std::min(1.0, static_cast<double>(H) / T);
      const double reachable =
          state.power_cap_kw[i] * (1.0 + std::min(H, T - 1));
      if (target > reachable) {
        out.clipped_energy_kwh += target - reachable;
        target = reachable;
      }
      std::vector<int> cols{map.x_now(i)};
      std::vector<double> vals{1.0};
      for (int t = 1; t <= H; ++t) {
        cols.push_back(map.x_conn(s, i, t));
        vals.push_back(1.0);
      }
      p.add_eq_row(cols, vals, target);
    }

  // energy balance per upcoming virtual EV
  for (int s = 0; s < S; ++s)
    for (int j = 0; j < nF; ++j) {
      const UpcomingEv& u = scenarios[s].upcoming[j];
      const double ratio =
          std::min(1.0, static_cast<double>(H - 1) / u.duration_steps);
      std::vector<int> cols;
      std::vector<double> vals;
      for (int t = 1; t <= H; ++t) {
        cols.push_back(map.x_upcoming(s, j, t));
        vals.push_back(1.0);
      }
      p.add_eq_row(cols, vals, u.delta_e_kwh * ratio);
    }

  // symmetric-headroom boxes
  auto add_box = [&p](int x, int y, double cap_kw) {
    const int lo[] = {y, x};
    const double lo_v[] = {1.0, -1.0};
    p.add_le_row(lo, lo_v, 0.0);
    const int hi[] = {x, y};
    const double hi_v[] = {1.0, 1.0};
    p.add_le_row(hi, hi_v, cap_kw);
  };
  for (int i = 0; i < nA; ++i)
    add_box(map.x_now(i), map.y_now(i), state.power_cap_kw[i]);
  for (int s = 0; s < S; ++s) {
    const Scenario& sc = scenarios[s];
    for (int t = 1; t <= H; ++t) {
      for (int i = 0; i < nA; ++i)
        if (conn_a(i, t))
          add_box(map.x_conn(s, i, t), map.y_conn(s, i, t),
                  state.power_cap_kw[i]);
      for (int j = 0; j < nF; ++j)
        if (conn_f(sc.upcoming[j], t))
          add_box(map.x_upcoming(s, j, t), map.y_upcoming(s, j, t),
                  sc.upcoming[j].p_max_kw);
    }
  }

  // delivery of the already-cleared capacity:  sum Y_K >= B_K - omega_K
  {
    std::vector<int> cols;
    std::vector<double> vals;
    for (int i = 0; i < nA; ++i) {
      cols.push_back(map.y_now(i));
      vals.push_back(-1.0);
    }
    cols.push_back(map.omega_now());
    vals.push_back(-1.0);
    p.add_le_row(cols, vals, -cleared_now_kwh);
  }

  // next-hour delivery per scenario: sum Y_{K+1} >= B_{K+1} - omega^s
  for (int s = 0; s < S; ++s) {
    std::vector<int> cols;
    std::vector<double> vals;
    for (int i = 0; i < nA; ++i)
      if (conn_a(i, 1)) {
        cols.push_back(map.y_conn(s, i, 1));
        vals.push_back(-1.0);
      }
    for (int j = 0; j < nF; ++j)
      if (conn_f(scenarios[s].upcoming[j], 1)) {
        cols.push_back(map.y_upcoming(s, j, 1));
        vals.push_back(-1.0);
      }
    cols.push_back(map.bid_next());
    vals.push_back(1.0);
    cols.push_back(map.omega_next(s));
    vals.push_back(-1.0);
    p.add_le_row(cols, vals, 0.0);
  }

  // CVaR epigraph per scenario: Cost^(s) - z <= v^(s)
  for (int s = 0; s < S; ++s) {
    const Scenario& sc = scenarios[s];
    std::vector<int> cols;
    std::vector<double> vals;
    auto push = [&](int col, double val) {
      if (val != 0.0) {
        cols.push_back(col);
        vals.push_back(val);
      }
    };
    for (int i = 0; i < nA; ++i) push(map.x_now(i), lambda_now);
    push(map.omega_now(), params.phi);
    push(map.omega_next(s), params.phi_prime);
    push(map.bid_next(), -(sc.mu[0] - params.rho));
    for (int t = 1; t <= H; ++t) {
      for (int i = 0; i < nA; ++i)
        if (conn_a(i, t)) {
          push(map.x_conn(s, i, t), sc.lambda[t - 1]);
          if (t >= 2) push(map.y_conn(s, i, t), -(sc.mu[t - 1] - params.rho));
        }
      for (int j = 0; j < nF; ++j)
        if (conn_f(sc.upcoming[j], t)) {
          push(map.x_upcoming(s, j, t), sc.lambda[t - 1]);
          if (t >= 2)
            push(map.y_upcoming(s, j, t), -(sc.mu[t - 1] - params.rho));
        }
    }
    push(map.var_level(), -1.0);
    push(map.excess(s), -1.0);
    p.add_le_row(cols, vals, 0.0);
  }

  return out;
}

// Read the first-stage decision out of a solved MPC problem. Round-off below
// 1e-9 is clamped so downstream invariants hold exactly.
//
// The POP, shortfall and bid are read through the index map. The regulation
// vector is reselected canonically inside the optimal face: Y_K carries no
// objective weight, so the LP's split across EVs is arbitrary under a slack
// delivery constraint. The canonical choice assigns each EV regulation
// proportional to its headroom min(X, P - X), summing to exactly
// B_K - omega_K (the whole headroom when the hour is short). This keeps the
// decision invariant under scenario relabeling and matches the allocation
// rule's two cases.
inline MpcDecision extract_decision(const lp::LpSolution& solution,
                                    const MpcIndexMap& map) {
  if (solution.status != lp::Status::optimal)
    throw Error(std::string("extract_decision: LP not optimal: ") +
                lp::to_string(solution.status));
  auto clamp0 = [](double v) { return v < 1e-9 && v > -1e-9 ? 0.0 : v; };

  MpcDecision d;
  d.objective = solution.objective;
  d.pop_now_kwh.resize(map.n_connected);
  d.reg_now_kwh.assign(map.n_connected, 0.0);
  for (int i = 0; i < map.n_connected; ++i)
    d.pop_now_kwh[i] = clamp0(solution.x[map.x_now(i)]);
  d.slack_now_kwh = clamp0(solution.x[map.omega_now()]);
  d.bid_next_kwh = clamp0(solution.x[map.bid_next()]);

  std::vector<double> headroom(map.n_connected);
  double total_headroom = 0.0;
  for (int i = 0; i < map.n_connected; ++i) {
    headroom[i] = std::max(
        0.0, std::min(d.pop_now_kwh[i], map.power_cap_kw[i] - d.pop_now_kwh[i]));
    total_headroom += headroom[i];
  }
  double needed =
      std::max(0.0, map.cleared_now_kwh - d.slack_now_kwh);
  needed = std::min(needed, total_headroom);
  if (needed >= total_headroom - 1e-12) {
    d.reg_now_kwh = headroom;
  } else if (total_headroom > 0.0) {
    const double scale = needed / total_headroom;
    for (int i = 0; i < map.n_connected; ++i)
      d.reg_now_kwh[i] = clamp0(headroom[i] * scale);
  }

  d.scenario_excess.resize(map.n_scenarios);
  for (int s = 0; s < map.n_scenarios; ++s)
    d.scenario_excess[s] = clamp0(solution.x[map.excess(s)]);
  return d;
}

}  // namespace evasim
