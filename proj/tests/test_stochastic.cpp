#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "evasim/analytic.hpp"
#include "evasim/stochastic.hpp"
#include "test_support.hpp"

using namespace evasim;

TEST_CASE("zero noise reproduces the forecast in every scenario") {
  auto forecast = support::synthetic_forecast(6);
  auto arrivals = support::sample_arrivals();
  auto scenarios = generate_scenarios(forecast, arrivals, 0.0, 0.0, 5, 99);
  REQUIRE(scenarios.size() == 5);
  for (const auto& sc : scenarios) {
    CHECK(sc.probability == Catch::Approx(0.2));
    for (int t = 0; t < 6; ++t) {
      CHECK(sc.lambda[t] == Catch::Approx(forecast[t].lambda));
      CHECK(sc.mu[t] == Catch::Approx(forecast[t].mu()));
    }
    REQUIRE(sc.upcoming.size() == arrivals.size());
    for (std::size_t j = 0; j < arrivals.size(); ++j) {
      CHECK(sc.upcoming[j].delta_e_kwh == Catch::Approx(arrivals[j].delta_e_kwh));
      CHECK(sc.upcoming[j].p_max_kw == Catch::Approx(arrivals[j].p_max_kw));
      CHECK(sc.upcoming[j].duration_steps == arrivals[j].duration_steps());
    }
  }
}

TEST_CASE("single scenario carries the whole probability mass") {
  auto scenarios =
      generate_scenarios(support::synthetic_forecast(6), {}, 2.0, 4.0, 1, 7);
  REQUIRE(scenarios.size() == 1);
  CHECK(scenarios[0].probability == Catch::Approx(1.0));
}

TEST_CASE("scenario sampling is unbiased at the CLT scale") {
  const double eps_p = 3.0;
  auto forecast = support::synthetic_forecast(4);
  auto scenarios = generate_scenarios(forecast, {}, eps_p, 0.0, 10000, 2025);
  for (int t = 0; t < 4; ++t) {
    double mean = 0.0;
    for (const auto& sc : scenarios) mean += sc.lambda[t];
    mean /= scenarios.size();
    CHECK(std::abs(mean - forecast[t].lambda) <= 3.0 * eps_p / 100.0);
  }
}

TEST_CASE("perturbed arrivals stay inside their feasible cone") {
  auto arrivals = support::sample_arrivals();
  auto scenarios = generate_scenarios(support::synthetic_forecast(6), arrivals,
                                      0.0, 80.0, 400, 11);
  for (const auto& sc : scenarios)
    for (const auto& u : sc.upcoming) {
      CHECK(u.delta_e_kwh >= 0.0);
      CHECK(u.p_max_kw > 0.0);
      CHECK(u.delta_e_kwh <= u.p_max_kw * u.duration_steps + 1e-9);
    }
}

TEST_CASE("scenario generation rejects bad arguments") {
  CHECK_THROWS_AS(generate_scenarios({}, {}, 1.0, 1.0, 0, 1), InvalidParameter);
  CHECK_THROWS_AS(generate_scenarios({}, {}, -1.0, 1.0, 2, 1), InvalidParameter);
}

namespace {

MpcParams default_params() {
  MpcParams p;
  p.horizon = 6;
  p.alpha = 0.2;
  p.phi = 115.0;
  p.phi_prime = 115.0;
  return p;
}

std::vector<Scenario> scenarios_for(int n, std::uint64_t seed,
                                    double eps_p = 3.0, double eps_ev = 5.0) {
  return generate_scenarios(support::synthetic_forecast(6),
                            support::sample_arrivals(), eps_p, eps_ev, n, seed);
}

}  // namespace

TEST_CASE("builder variable count matches the two-stage layout") {
  ConnectedState st;
  st.ids = {"a", "b"};
  st.remaining_energy_kwh = {5.0, 7.0};
  st.power_cap_kw = {4.0, 4.0};
  st.remaining_steps = {8, 9};
  VirtualEv one;
  one.arrival_step = 1;
  one.departure_step = 8;
  one.delta_e_kwh = 6.0;
  one.p_max_kw = 5.0;
  auto scenarios = generate_scenarios(support::synthetic_forecast(6), {one},
                                      0.0, 0.0, 3, 1);
  auto built = build_mpc_problem(st, scenarios, 1.0, 28.0, default_params());
  // 6 first-stage + 3 * 37 second-stage + 3 excess + 1 VaR level
  CHECK(built.problem.num_vars() == 121);
  CHECK(built.map.total() == 121);
  CHECK(built.map.var_level() == 120);
}

TEST_CASE("no regulation incentive means no regulation schedule") {
  ConnectedState st = support::small_state();
  auto forecast = support::synthetic_forecast(6);
  for (auto& p : forecast) {
    p.mu_rc = 0.0;
    p.mu_rp = 0.0;
  }
  auto scenarios = generate_scenarios(forecast, {}, 0.0, 0.0, 1, 1);
  auto built = build_mpc_problem(st, scenarios, 0.0, 31.0, default_params());

  lp::SolveOptions plain;
  plain.presolve = false;
  auto sol = lp::solve(built.problem, plain);
  REQUIRE(sol.status == lp::Status::optimal);
  auto d = extract_decision(sol, built.map);
  for (double y : d.reg_now_kwh) CHECK(y == Catch::Approx(0.0).margin(1e-9));
  CHECK(d.bid_next_kwh == Catch::Approx(0.0).margin(1e-9));
  CHECK(d.slack_now_kwh == Catch::Approx(0.0).margin(1e-9));

  // the POP profile must be the pure energy-cost minimum: compare objective
  // against per-EV analytic schedules with zero regulation prices
  double ref = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    const int T = st.remaining_steps[i];
    const int H = default_params().horizon;
    std::vector<SlotPrice> prices{{31.0, 0.0}};
    for (int t = 1; t <= std::min(H, T - 1); ++t)
      prices.push_back({forecast[t - 1].lambda, 0.0});
    const double target =
        st.remaining_energy_kwh[i] * std::min(1.0, double(H) / T);
    ref += solve_single(prices, target, st.power_cap_kw[i]).objective;
  }
  CHECK_THAT(sol.objective, Catch::Matchers::WithinRel(ref, 1e-6));

  // presolve path reaches the same optimum
  auto sol2 = lp::solve(built.problem);
  REQUIRE(sol2.status == lp::Status::optimal);
  CHECK_THAT(sol2.objective, Catch::Matchers::WithinRel(ref, 1e-6));
}

TEST_CASE("single-scenario CVaR collapses to the deterministic cost") {
  ConnectedState st = support::small_state();
  auto scenarios = scenarios_for(1, 3, 2.0, 4.0);
  MpcParams params = default_params();

  for (double alpha : {0.001, 0.2, 0.8}) {
    params.alpha = alpha;
    auto built = build_mpc_problem(st, scenarios, 1.5, 33.0, params);
    auto sol = lp::solve(built.problem);
    REQUIRE(sol.status == lp::Status::optimal);
    const double det = support::deterministic_mpc_objective(
        st, scenarios[0], 1.5, 33.0, params);
    CHECK_THAT(sol.objective, Catch::Matchers::WithinRel(det, 1e-6));
  }
}

TEST_CASE("huge next-hour penalty with perfect prediction stays degenerate") {
  ConnectedState st = support::small_state();
  auto scenarios = scenarios_for(1, 3, 0.0, 0.0);
  MpcParams params = default_params();
  params.alpha = 0.001;
  params.phi_prime = 1e5;
  auto built = build_mpc_problem(st, scenarios, 0.5, 33.0, params);
  auto sol = lp::solve(built.problem);
  REQUIRE(sol.status == lp::Status::optimal);
  const double det = support::deterministic_mpc_objective(st, scenarios[0], 0.5,
                                                          33.0, params);
  CHECK_THAT(sol.objective, Catch::Matchers::WithinRel(det, 1e-6));
}

TEST_CASE("CVaR objective is non-decreasing in the confidence level") {
  ConnectedState st = support::small_state();
  auto scenarios = scenarios_for(20, 17);
  MpcParams params = default_params();
  double prev = -1e300;
  for (double alpha : {0.05, 0.2, 0.5, 0.8, 0.95}) {
    params.alpha = alpha;
    auto built = build_mpc_problem(st, scenarios, 1.0, 30.0, params);
    auto sol = lp::solve(built.problem);
    REQUIRE(sol.status == lp::Status::optimal);
    CHECK(sol.objective >= prev - 1e-7 * (1.0 + std::abs(prev)));
    prev = sol.objective;
  }
}

TEST_CASE("relabeling scenarios does not move the first-stage decision") {
  ConnectedState st = support::small_state();
  auto scenarios = scenarios_for(8, 23);
  MpcParams params = default_params();
  params.n_scenarios = 8;

  auto base = build_mpc_problem(st, scenarios, 1.0, 30.0, params);
  auto base_sol = lp::solve(base.problem);
  REQUIRE(base_sol.status == lp::Status::optimal);
  auto base_d = extract_decision(base_sol, base.map);

  std::rotate(scenarios.begin(), scenarios.begin() + 3, scenarios.end());
  auto rot = build_mpc_problem(st, scenarios, 1.0, 30.0, params);
  auto rot_sol = lp::solve(rot.problem);
  REQUIRE(rot_sol.status == lp::Status::optimal);
  auto rot_d = extract_decision(rot_sol, rot.map);

  CHECK_THAT(rot_sol.objective,
             Catch::Matchers::WithinRel(base_sol.objective, 1e-9));
  for (std::size_t i = 0; i < st.size(); ++i) {
    CHECK(rot_d.pop_now_kwh[i] == Catch::Approx(base_d.pop_now_kwh[i]).margin(1e-5));
    CHECK(rot_d.reg_now_kwh[i] == Catch::Approx(base_d.reg_now_kwh[i]).margin(1e-5));
  }
  CHECK(rot_d.bid_next_kwh == Catch::Approx(base_d.bid_next_kwh).margin(1e-5));
}

TEST_CASE("extract_decision reads through the index map") {
  ConnectedState st = support::small_state();
  auto scenarios = scenarios_for(4, 5);
  auto built = build_mpc_problem(st, scenarios, 1.0, 30.0, default_params());
  auto sol = lp::solve(built.problem);
  REQUIRE(sol.status == lp::Status::optimal);
  auto d = extract_decision(sol, built.map);
  CHECK(d.pop_now_kwh.size() == st.size());
  CHECK(d.reg_now_kwh.size() == st.size());
  CHECK(d.scenario_excess.size() == 4);
  for (std::size_t i = 0; i < st.size(); ++i) {
    CHECK(d.reg_now_kwh[i] >= 0.0);
    CHECK(d.reg_now_kwh[i] <= d.pop_now_kwh[i] + 1e-7);
    CHECK(d.pop_now_kwh[i] <= st.power_cap_kw[i] - d.reg_now_kwh[i] + 1e-7);
  }
  double sum_y = 0.0;
  for (double y : d.reg_now_kwh) sum_y += y;
  CHECK(sum_y >= 1.0 - d.slack_now_kwh - 1e-7);

  lp::LpSolution bad;
  bad.status = lp::Status::infeasible;
  CHECK_THROWS_AS(extract_decision(bad, built.map), Error);
}

TEST_CASE("empty connected set still builds; slack absorbs the obligation") {
  ConnectedState st;  // nobody plugged in
  auto scenarios = scenarios_for(3, 9);
  auto built = build_mpc_problem(st, scenarios, 2.0, 30.0, default_params());
  auto sol = lp::solve(built.problem);
  REQUIRE(sol.status == lp::Status::optimal);
  auto d = extract_decision(sol, built.map);
  CHECK(d.slack_now_kwh == Catch::Approx(2.0));
  CHECK(d.pop_now_kwh.empty());
}

TEST_CASE("toy two-stage instance agrees with grid enumeration") {
  ConnectedState st;
  st.ids = {"only"};
  st.remaining_energy_kwh = {3.0};
  st.power_cap_kw = {2.0};
  st.remaining_steps = {4};

  MpcParams params = default_params();
  params.horizon = 2;
  params.alpha = 0.3;
  params.phi = 60.0;
  params.phi_prime = 45.0;
  const double cleared = 0.8;
  const double lambda_now = 36.0;

  std::vector<Scenario> scenarios(2);
  scenarios[0].probability = 0.5;
  scenarios[0].lambda = {30.0, 42.0};
  scenarios[0].mu = {12.0, 6.0};
  scenarios[1].probability = 0.5;
  scenarios[1].lambda = {38.0, 26.0};
  scenarios[1].mu = {4.0, 16.0};

  auto built = build_mpc_problem(st, scenarios, cleared, lambda_now, params);
  auto sol = lp::solve(built.problem);
  REQUIRE(sol.status == lp::Status::optimal);

  // brute force: X_K and B on a grid; Y_K maximal (it only relieves the
  // shortfall), per scenario split the remaining target over two slots with
  // the regulation offers at their per-slot maxima
  const double target = 3.0 * std::min(1.0, 2.0 / 4.0);  // 1.5
  const double p_cap = 2.0;
  const int n_grid = 301;
  double best = 1e300;
  auto headroom = [&](double x) { return std::max(0.0, std::min(x, p_cap - x)); };
  for (int gi = 0; gi < n_grid; ++gi) {
    const double x_now = target * gi / (n_grid - 1);
    const double omega_now = std::max(0.0, cleared - headroom(x_now));
    const double e2 = target - x_now;
    for (int gb = 0; gb < n_grid; ++gb) {
      const double bid = 2.0 * gb / (n_grid - 1);
      double costs[2];
      for (int s = 0; s < 2; ++s) {
        double inner = 1e300;
        const double lo = std::max(0.0, e2 - p_cap);
        const double hi = std::min(p_cap, e2);
        for (int gx = 0; gx < n_grid; ++gx) {
          const double x1 = lo + (hi - lo) * gx / (n_grid - 1);
          const double x2 = e2 - x1;
          const double y1 = headroom(x1);
          const double y2 = headroom(x2);
          const double omega_next = std::max(0.0, bid - y1);
          const double c = lambda_now * x_now + params.phi * omega_now +
                           scenarios[s].lambda[0] * x1 -
                           scenarios[s].mu[0] * bid +
                           scenarios[s].lambda[1] * x2 -
                           scenarios[s].mu[1] * y2 +
                           params.phi_prime * omega_next;
          inner = std::min(inner, c);
        }
        costs[s] = inner;
      }
      for (double z : costs) {
        double cvar = z;
        for (int s = 0; s < 2; ++s)
          cvar += params.alpha_prime() * scenarios[s].probability *
                  std::max(0.0, costs[s] - z);
        best = std::min(best, cvar);
      }
    }
  }
  CHECK(sol.objective <= best + 1e-6);
  CHECK(sol.objective >= best - 2.5);  // grid resolution bracket
}
