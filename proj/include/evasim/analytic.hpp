#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evasim/errors.hpp"

namespace evasim {

// Energy and regulation prices for one connected slot. mu is the composite
// regulation price; a compensation offset rho is subtracted uniformly before
// solving, which leaves the optimal structure intact.
struct SlotPrice {
  double lambda = 0.0;
  double mu = 0.0;
};

// Closed-form optimum of the single-EV market participation problem:
//   min sum_t lambda_t * x_t - (mu_t - rho) * y_t
//   s.t. y_t <= x_t <= p_max - y_t,  y_t >= 0,  sum_t x_t = delta_e.
//
// Every slot's decision is captured by v in [-1, 1] with
//   x = p_max * (1 + v) / 2,   y = p_max * (1 - |v|) / 2,
// and at most one slot (the marginal slot) takes a fractional v.
struct AnalyticSolution {
  std::vector<double> x_kwh;
  std::vector<double> y_kwh;
  std::vector<double> v;
  // Threshold value: the (F+1)-th element of the ascending ordered set
  // {lambda_t - mu_t, lambda_t + mu_t for all t} U {-inf}; also the optimal
  // multiplier of the energy-balance constraint.
  double omega = -std::numeric_limits<double>::infinity();
  std::optional<int> marginal_slot;
  double objective = 0.0;
};

namespace detail {

// Price events, ascending. Raising a slot's v from -1 to 0 costs
// lambda - mu per unit; raising from 0 to +1 costs lambda + mu. Stage 0
// events always precede stage 1 events of the same slot in cost, so filling
// the cheapest events first is feasible slot-wise and optimal overall.
struct PriceEvent {
  double value;
  int slot;
  int stage;  // 0: -1 -> 0, 1: 0 -> +1

  bool operator<(const PriceEvent& o) const {
    if (value != o.value) return value < o.value;
    if (slot != o.slot) return slot < o.slot;
    return stage < o.stage;
  }
};

}  // namespace detail

inline AnalyticSolution solve_single(std::span<const SlotPrice> prices,
                                     double delta_e_kwh, double p_max_kw,
                                     double rho = 0.0) {
  constexpr double kSnap = 1e-9;
  const int n = static_cast<int>(prices.size());

  if (p_max_kw <= 0.0)
    throw InvalidParameter("solve_single: p_max must be positive");
  if (delta_e_kwh < -kSnap)
    throw InvalidParameter("solve_single: delta_e must be >= 0");
  if (delta_e_kwh > p_max_kw * n + kSnap * std::max(1.0, p_max_kw * n))
    throw Infeasible("solve_single: delta_e exceeds p_max * slot count");

  std::vector<double> mu_eff(n);
  for (int t = 0; t < n; ++t) {
    if (prices[t].lambda <= 0.0)
      throw InvalidParameter("solve_single: lambda must be positive (slot " +
                             std::to_string(t) + ")");
    mu_eff[t] = prices[t].mu - rho;
    if (mu_eff[t] < -kSnap)
      throw InvalidParameter(
          "solve_single: effective regulation price mu - rho is negative (slot " +
          std::to_string(t) + ")");
    mu_eff[t] = std::max(mu_eff[t], 0.0);
  }

  AnalyticSolution sol;
  sol.v.assign(n, -1.0);
  if (n == 0) return sol;

  // budget = 2*delta_e/p_max is the total amount by which slot decisions must
  // rise above the all-idle point v = -1; F = ceil(budget) is the
  // flexibility index and the rank of the threshold in the ordered set.
  const double budget =
      std::clamp(2.0 * delta_e_kwh / p_max_kw, 0.0, 2.0 * n);
  const double rounded = std::round(budget);
  const bool integral = std::abs(budget - rounded) <= kSnap;
  const int flex = integral ? static_cast<int>(rounded)
                            : static_cast<int>(std::ceil(budget));

  std::vector<detail::PriceEvent> events;
  events.reserve(2 * n);
  for (int t = 0; t < n; ++t) {
    events.push_back({prices[t].lambda - mu_eff[t], t, 0});
    events.push_back({prices[t].lambda + mu_eff[t], t, 1});
  }
  std::sort(events.begin(), events.end());

  const int n_full = integral ? flex : flex - 1;
  const double frac = integral ? 0.0 : budget - n_full;

  for (int k = 0; k < n_full; ++k) sol.v[events[k].slot] += 1.0;
  if (!integral) {
    const int chi = events[n_full].slot;
    sol.v[chi] += frac;
    sol.marginal_slot = chi;
  }

  sol.omega = flex == 0 ? -std::numeric_limits<double>::infinity()
                        : events[flex - 1].value;

  sol.x_kwh.resize(n);
  sol.y_kwh.resize(n);
  for (int t = 0; t < n; ++t) {
    sol.x_kwh[t] = p_max_kw * (1.0 + sol.v[t]) / 2.0;
    sol.y_kwh[t] = p_max_kw * (1.0 - std::abs(sol.v[t])) / 2.0;
    sol.objective += prices[t].lambda * sol.x_kwh[t] - mu_eff[t] * sol.y_kwh[t];
  }
  return sol;
}

}  // namespace evasim
