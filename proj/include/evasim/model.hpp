#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "evasim/errors.hpp"

namespace evasim {

// Internal unit conventions: power in kW, energy in kWh, one-hour steps (so a
// constant power held for one step delivers the same number in kWh). Prices
// stay in $/MWh; conversion to MWh happens at settlement only. Hour indices
// live on one absolute multi-day axis, so overnight sessions never wrap.

constexpr int kSamplesPerHour = 1800;  // 2-second cadence

// Grid-side energy needed to move a battery from soc_arrival to soc_expected.
inline double required_energy(double soc_arrival, double soc_expected,
                              double e_rated_kwh, double efficiency) {
  if (efficiency <= 0.0)
    throw InvalidParameter("required_energy: efficiency must be positive");
  if (soc_arrival < 0.0 || soc_arrival > 1.0 || soc_expected < 0.0 ||
      soc_expected > 1.0)
    throw InvalidParameter("required_energy: SoC values must lie in [0,1]");
  if (e_rated_kwh < 0.0)
    throw InvalidParameter("required_energy: battery capacity must be >= 0");
  return (soc_expected - soc_arrival) * e_rated_kwh / efficiency;
}

// Integer charging flexibility index, ceil(2*delta_e/p_max). The tiny snap
// keeps ratios that are integers up to float dust from landing one rank high.
inline int flexibility_index(double delta_e_kwh, double p_max_kw) {
  if (p_max_kw <= 0.0)
    throw InvalidParameter("flexibility_index: p_max must be positive");
  if (delta_e_kwh < 0.0)
    throw InvalidParameter("flexibility_index: delta_e must be >= 0");
  const double ratio = 2.0 * delta_e_kwh / p_max_kw;
  return static_cast<int>(std::ceil(ratio - 1e-9));
}

// One EV charging request.
struct EvRecord {
  std::string id;
  int arrival_step = 0;
  int departure_step = 0;
  double soc_arrival = 0.0;
  double soc_expected = 0.0;
  double e_rated_kwh = 0.0;
  double efficiency = 1.0;
  double p_max_kw = 0.0;
  double delta_e_kwh = 0.0;  // grid-side, from required_energy

  int duration_steps() const { return departure_step - arrival_step; }

  int flex_index() const { return flexibility_index(delta_e_kwh, p_max_kw); }

  // True when the request fits inside the parking window at full power.
  bool admissible() const {
    return delta_e_kwh <= p_max_kw * duration_steps() + 1e-9;
  }

  void validate() const {
    if (arrival_step >= departure_step)
      throw InvalidParameter("EvRecord " + id + ": arrival must precede departure");
    if (soc_expected < soc_arrival)
      throw InvalidParameter("EvRecord " + id + ": expected SoC below arrival SoC");
    if (efficiency <= 0.0 || efficiency > 1.0)
      throw InvalidParameter("EvRecord " + id + ": efficiency must be in (0,1]");
    if (p_max_kw <= 0.0)
      throw InvalidParameter("EvRecord " + id + ": p_max must be positive");
    if (delta_e_kwh < 0.0)
      throw InvalidParameter("EvRecord " + id + ": delta_e must be >= 0");
    if (!admissible())
      throw InvalidParameter("EvRecord " + id +
                             ": delta_e exceeds p_max * parking duration");
  }
};

// Aggregate of EVs sharing (arrival, departure, flexibility index); behaves
// like one EV with summed demand and power in the market problem.
struct VirtualEv {
  int arrival_step = 0;
  int departure_step = 0;
  int flex_index = 0;
  double delta_e_kwh = 0.0;
  double p_max_kw = 0.0;
  std::vector<std::string> member_ids;

  int duration_steps() const { return departure_step - arrival_step; }
};

// Partition EVs by (arrival, departure, flexibility index). Output is sorted
// by that key, so grouping is deterministic regardless of input order.
inline std::vector<VirtualEv> group_virtual_evs(const std::vector<EvRecord>& evs) {
  std::map<std::tuple<int, int, int>, VirtualEv> groups;
  for (const EvRecord& ev : evs) {
    const int f = ev.flex_index();
    auto key = std::make_tuple(ev.arrival_step, ev.departure_step, f);
    auto [it, inserted] = groups.try_emplace(key);
    VirtualEv& g = it->second;
    if (inserted) {
      g.arrival_step = ev.arrival_step;
      g.departure_step = ev.departure_step;
      g.flex_index = f;
    }
    g.delta_e_kwh += ev.delta_e_kwh;
    g.p_max_kw += ev.p_max_kw;
    g.member_ids.push_back(ev.id);
  }
  std::vector<VirtualEv> out;
  out.reserve(groups.size());
  for (auto& [key, g] : groups) out.push_back(std::move(g));
  return out;
}

// Hourly market prices. mu() is the composite regulation price per unit of
// capacity under performance-based compensation.
struct PriceRecord {
  int step = 0;
  double lambda = 0.0;   // energy, $/MWh
  double mu_rc = 0.0;    // regulation capacity, $/MW
  double mu_rp = 0.0;    // regulation performance, $/dMW
  double mileage = 0.0;  // dimensionless RegD mileage

  double mu() const { return mu_rc + mu_rp * mileage; }

  void validate() const {
    if (lambda <= 0.0)
      throw InvalidParameter("PriceRecord: lambda must be positive");
    if (mu_rc < 0.0 || mu_rp < 0.0 || mileage < 0.0)
      throw InvalidParameter("PriceRecord: mu_rc, mu_rp, mileage must be >= 0");
  }
};

// One hour of the 2-second RegD signal, each sample in [-1, 1].
struct RegDTrace {
  std::vector<double> samples;

  void validate() const {
    if (static_cast<int>(samples.size()) != kSamplesPerHour)
      throw InvalidParameter("RegDTrace: expected " +
                             std::to_string(kSamplesPerHour) + " samples, got " +
                             std::to_string(samples.size()));
    for (double s : samples)
      if (!(s >= -1.0 && s <= 1.0))
        throw InvalidParameter("RegDTrace: sample outside [-1,1]");
  }

  static RegDTrace constant(double value) {
    RegDTrace t;
    t.samples.assign(kSamplesPerHour, value);
    return t;
  }
};

// Snapshot of the connected set used by the MPC builder: remaining energy,
// power cap and remaining parking steps per plugged-in EV. remaining_steps
// counts the current hour, so 1 means "departs after this hour".
struct ConnectedState {
  std::vector<std::string> ids;
  std::vector<double> remaining_energy_kwh;
  std::vector<double> power_cap_kw;
  std::vector<int> remaining_steps;

  std::size_t size() const { return ids.size(); }

  // Energy no longer deliverable inside the remaining window. Violations are
  // flagged to the caller, never clamped here.
  bool energy_feasible(std::size_t i, double tol = 1e-9) const {
    return remaining_energy_kwh[i] <=
           power_cap_kw[i] * remaining_steps[i] + tol;
  }

  void validate() const {
    const std::size_t n = ids.size();
    if (remaining_energy_kwh.size() != n || power_cap_kw.size() != n ||
        remaining_steps.size() != n)
      throw InvalidParameter("ConnectedState: vector lengths disagree");
    for (std::size_t i = 0; i < n; ++i) {
      if (remaining_steps[i] < 1)
        throw InvalidParameter("ConnectedState: remaining_steps < 1 for " + ids[i]);
      if (remaining_energy_kwh[i] < 0.0)
        throw InvalidParameter("ConnectedState: negative remaining energy for " +
                               ids[i]);
      if (power_cap_kw[i] <= 0.0)
        throw InvalidParameter("ConnectedState: non-positive power cap for " +
                               ids[i]);
    }
  }
};

}  // namespace evasim
