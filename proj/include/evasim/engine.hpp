#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evasim/errors.hpp"
#include "evasim/model.hpp"
#include "evasim/settlement.hpp"
#include "evasim/stochastic.hpp"

namespace evasim {

// An EV that left this hour, with the unmet energy and the SoC shortfall it
// implies. Over-delivery (negative residual) is clamped and reported.
struct Departure {
  std::string id;
  double residual_kwh = 0.0;
  double soc_deviation = 0.0;  // fraction of rated capacity
  double overshoot_kwh = 0.0;
};

struct DispatchResult {
  std::vector<double> delivered_energy_kwh;  // per EV, raw accumulation
  std::vector<double> instructed_series_kw;  // sum of per-EV tasks * signal
  std::vector<double> delivered_series_kw;   // sum of (POP - actual charge)
  long clamp_events = 0;
};

// Regulation task split across connected EVs. With no shortfall the cleared
// capacity is shared pro rata over the offered capacities; a short hour
// dispatches every EV at its full offer.
inline std::vector<double> allocate_regulation(
    std::span<const double> reg_now_kwh, double cleared_kwh,
    double slack_kwh) {
  if (cleared_kwh < 0.0 || slack_kwh < 0.0)
    throw InvalidParameter("allocate_regulation: negative inputs");
  std::vector<double> task(reg_now_kwh.begin(), reg_now_kwh.end());
  if (slack_kwh > 1e-9) return task;  // shortfall: dispatch the full offer
  double total = 0.0;
  for (double y : task) total += y;
  if (total <= 0.0) return std::vector<double>(task.size(), 0.0);
  const double share = cleared_kwh / total;
  for (double& r : task) r = std::min(r * share, r);
  return task;
}

// Follow one hour of the RegD signal. Per 2-second sample the instructed
// charging power is POP - signal * task; delivery clamps it into [0, p_max]
// and stops once the battery's remaining energy is exhausted. When no clamp
// fired for an EV its delivered energy reduces to the closed form
// POP - task * mean(signal), which keeps quiet hours exact.
inline DispatchResult dispatch_hour(std::span<const double> pop_kwh,
                                    std::span<const double> task_kw,
                                    const RegDTrace& trace,
                                    std::span<const double> remaining_kwh,
                                    std::span<const double> p_max_kw) {
  trace.validate();
  const int n = static_cast<int>(pop_kwh.size());
  if (static_cast<int>(task_kw.size()) != n ||
      static_cast<int>(remaining_kwh.size()) != n ||
      static_cast<int>(p_max_kw.size()) != n)
    throw InvalidParameter("dispatch_hour: vector lengths disagree");
  const int samples = kSamplesPerHour;
  const double dt = 1.0 / samples;

  DispatchResult out;
  out.delivered_energy_kwh.assign(n, 0.0);
  out.instructed_series_kw.assign(samples, 0.0);
  out.delivered_series_kw.assign(samples, 0.0);

  double signal_sum = 0.0;
  for (double s : trace.samples) signal_sum += s;

  std::vector<double> used(n, 0.0);
  std::vector<char> clamped(n, 0);
  for (int g = 0; g < samples; ++g) {
    const double sig = trace.samples[g];
    double inst_agg = 0.0, del_agg = 0.0;
    for (int i = 0; i < n; ++i) {
      const double instructed = pop_kwh[i] - sig * task_kw[i];
      double delivered = instructed;
      if (delivered < 0.0) delivered = 0.0;
      if (delivered > p_max_kw[i]) delivered = p_max_kw[i];
      const double room = (remaining_kwh[i] - used[i]) / dt;
      if (delivered > room) delivered = std::max(0.0, room);
      if (delivered != instructed) {
        clamped[i] = 1;
        ++out.clamp_events;
      }
      used[i] += delivered * dt;
      inst_agg += sig * task_kw[i];
      del_agg += pop_kwh[i] - delivered;
    }
    out.instructed_series_kw[g] = inst_agg;
    out.delivered_series_kw[g] = del_agg;
  }
  for (int i = 0; i < n; ++i)
    out.delivered_energy_kwh[i] =
        clamped[i] ? used[i] : pop_kwh[i] - task_kw[i] * signal_sum * dt;
  return out;
}

struct CorrectionResult {
  ConnectedState state;                     // remaining EVs after the hour
  std::vector<double> effective_kwh;        // booked energy, telescoped
  std::vector<double> remaining_after_kwh;  // per input EV, post-correction
  std::vector<Departure> departures;
};

// Battery data the correction needs to express residuals as SoC.
struct BatteryRef {
  double e_rated_kwh = 0.0;
  double efficiency = 1.0;
};

// Book the hour: subtract delivered energy, advance the clock, and drop EVs
// whose parking window closed. Residual dust below 1e-9 kWh snaps to zero so
// a completed request reads as exactly fulfilled; over-delivery clamps to
// zero and surfaces as overshoot.
inline CorrectionResult correct_state(const ConnectedState& state,
                                      std::span<const double> delivered_kwh,
                                      std::span<const BatteryRef> batteries) {
  const std::size_t n = state.size();
  if (delivered_kwh.size() != n || batteries.size() != n)
    throw InvalidParameter("correct_state: vector lengths disagree");
  CorrectionResult out;
  out.effective_kwh.resize(n);
  out.remaining_after_kwh.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double after = state.remaining_energy_kwh[i] - delivered_kwh[i];
    double overshoot = 0.0;
    if (after < 0.0) {
      overshoot = -after;
      after = 0.0;
    }
    if (after < 1e-9) after = 0.0;
    out.effective_kwh[i] = state.remaining_energy_kwh[i] - after;
    out.remaining_after_kwh[i] = after;
    const int steps_left = state.remaining_steps[i] - 1;
    if (steps_left == 0) {
      Departure dep;
      dep.id = state.ids[i];
      dep.residual_kwh = after;
      dep.overshoot_kwh = overshoot;
      dep.soc_deviation = batteries[i].e_rated_kwh > 0.0
                              ? after * batteries[i].efficiency /
                                    batteries[i].e_rated_kwh
                              : 0.0;
      out.departures.push_back(std::move(dep));
    } else {
      out.state.ids.push_back(state.ids[i]);
      out.state.remaining_energy_kwh.push_back(after);
      out.state.power_cap_kw.push_back(state.power_cap_kw[i]);
      out.state.remaining_steps.push_back(steps_left);
    }
  }
  return out;
}

struct HourOutcome {
  int hour = 0;
  std::vector<std::string> connected_ids;  // ordering of all per-EV vectors
  MpcDecision decision;
  std::vector<double> allocation_kw;
  std::vector<double> instructed_series_kw;  // ISO request: signal * B_K
  std::vector<double> delivered_series_kw;
  std::vector<double> delivered_energy_kwh;   // telescoped booking
  std::vector<double> remaining_after_kwh;    // per EV, post-correction
  std::vector<double> power_cap_kw;
  double cleared_kwh = 0.0;  // B_K
  SettlementRecord settlement;
  std::vector<Departure> departures;
  std::vector<std::string> rejected;  // "id: reason" for failed admissions
  long clamp_events = 0;
  double clipped_energy_kwh = 0.0;
  long lp_iterations = 0;
};

struct SimParams {
  MpcParams mpc;
  double eps_p = 3.0;   // price noise, $/MWh
  double eps_ev = 5.0;  // upcoming-EV noise, percent
  std::uint64_t seed = 1;
};

namespace detail {

struct Session {
  EvRecord ev;
  double remaining_kwh = 0.0;
  int remaining_steps = 0;
};

}  // namespace detail

// Rolling-horizon operation over the fleet's whole span: admit arrivals,
// solve the hourly MPC, allocate and dispatch against the RegD trace, settle,
// and correct the connected set. Every submitted next-hour offer clears in
// full; the very first hour starts with no obligation.
inline std::vector<HourOutcome> run(const std::vector<EvRecord>& fleet,
                                    const std::vector<PriceRecord>& prices,
                                    const std::vector<RegDTrace>& traces,
                                    const SimParams& params) {
  params.mpc.validate();
  if (prices.empty()) throw InvalidParameter("run: no price data");
  for (std::size_t k = 0; k < prices.size(); ++k) {
    prices[k].validate();
    if (k > 0 && prices[k].step != prices[k - 1].step + 1)
      throw InvalidParameter("run: price steps must be contiguous");
  }
  if (traces.size() != prices.size())
    throw InvalidParameter("run: need one RegD trace per price hour");

  std::vector<HourOutcome> outcomes;
  if (fleet.empty()) return outcomes;

  int first_arrival = fleet.front().arrival_step;
  int last_departure = fleet.front().departure_step;
  for (const EvRecord& ev : fleet) {
    first_arrival = std::min(first_arrival, ev.arrival_step);
    last_departure = std::max(last_departure, ev.departure_step);
  }
  const int price_first = prices.front().step;
  const int price_last = prices.back().step;
  if (price_first > first_arrival || price_last < last_departure + 1)
    throw InvalidParameter(
        "run: price data must cover the fleet span plus one look-ahead hour "
        "(need steps " +
        std::to_string(first_arrival) + ".." +
        std::to_string(last_departure + 1) + ")");

  std::map<int, std::vector<EvRecord>> arrivals;
  for (const EvRecord& ev : fleet) arrivals[ev.arrival_step].push_back(ev);

  auto price_at = [&](int step) -> const PriceRecord& {
    return prices[step - price_first];
  };
  auto trace_at = [&](int step) -> const RegDTrace& {
    return traces[step - price_first];
  };

  std::vector<detail::Session> sessions;
  double cleared = 0.0;  // B_K, fully cleared offer from the previous hour

  for (int hour = first_arrival; hour < last_departure; ++hour) {
    HourOutcome rec;
    rec.hour = hour;
    rec.cleared_kwh = cleared;

    if (auto it = arrivals.find(hour); it != arrivals.end()) {
      for (const EvRecord& ev : it->second) {
        try {
          ev.validate();
        } catch (const InvalidParameter& e) {
          rec.rejected.push_back(e.what());
          continue;
        }
        sessions.push_back(
            {ev, ev.delta_e_kwh, ev.departure_step - ev.arrival_step});
      }
    }

    ConnectedState state;
    std::vector<BatteryRef> batteries;
    for (const detail::Session& s : sessions) {
      state.ids.push_back(s.ev.id);
      state.remaining_energy_kwh.push_back(s.remaining_kwh);
      state.power_cap_kw.push_back(s.ev.p_max_kw);
      state.remaining_steps.push_back(s.remaining_steps);
      batteries.push_back({s.ev.e_rated_kwh, s.ev.efficiency});
    }
    rec.connected_ids = state.ids;
    rec.power_cap_kw = state.power_cap_kw;

    // look-ahead truncated to the available price data
    const int h_eff = std::min(params.mpc.horizon, price_last - hour);

    std::vector<PriceRecord> forecast;
    for (int t = 1; t <= h_eff; ++t) forecast.push_back(price_at(hour + t));

    std::vector<EvRecord> next_hour;
    if (auto it = arrivals.find(hour + 1); it != arrivals.end())
      for (const EvRecord& ev : it->second)
        if (ev.admissible()) next_hour.push_back(ev);
    const std::vector<VirtualEv> upcoming = group_virtual_evs(next_hour);

    MpcParams mpc = params.mpc;
    mpc.horizon = h_eff;
    auto scenarios = generate_scenarios(
        forecast, upcoming, params.eps_p, params.eps_ev, mpc.n_scenarios,
        params.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(hour));
    auto built =
        build_mpc_problem(state, scenarios, cleared, price_at(hour).lambda, mpc);
    rec.clipped_energy_kwh = built.clipped_energy_kwh;
    auto sol = lp::solve(built.problem);
    rec.decision = extract_decision(sol, built.map);
    rec.lp_iterations = sol.iterations;

    rec.allocation_kw =
        allocate_regulation(rec.decision.reg_now_kwh, cleared,
                            rec.decision.slack_now_kwh);

    const RegDTrace& trace = trace_at(hour);
    auto dispatch =
        dispatch_hour(rec.decision.pop_now_kwh, rec.allocation_kw, trace,
                      state.remaining_energy_kwh, state.power_cap_kw);
    rec.clamp_events = dispatch.clamp_events;
    rec.delivered_series_kw = std::move(dispatch.delivered_series_kw);

    // the market instruction tracks the cleared capacity, not the EVA's
    // internal split, so the score punishes short hours
    rec.instructed_series_kw.resize(trace.samples.size());
    for (std::size_t g = 0; g < trace.samples.size(); ++g)
      rec.instructed_series_kw[g] = trace.samples[g] * cleared;

    auto corrected =
        correct_state(state, dispatch.delivered_energy_kwh, batteries);
    rec.delivered_energy_kwh = std::move(corrected.effective_kwh);
    rec.remaining_after_kwh = std::move(corrected.remaining_after_kwh);
    rec.departures = std::move(corrected.departures);

    double total_delivered_kwh = 0.0;
    for (double e : rec.delivered_energy_kwh) total_delivered_kwh += e;
    const double score = performance_score(rec.instructed_series_kw,
                                           rec.delivered_series_kw);
    rec.settlement =
        settle_hour(cleared / 1000.0, score, mileage(trace), price_at(hour),
                    total_delivered_kwh / 1000.0);

    // sessions advance: departures fall out, the rest keep their booking
    {
      std::vector<detail::Session> remaining;
      std::size_t next_idx = 0;
      for (std::size_t i = 0; i < sessions.size(); ++i) {
        if (sessions[i].remaining_steps - 1 == 0) continue;
        detail::Session s = sessions[i];
        s.remaining_kwh = corrected.state.remaining_energy_kwh[next_idx];
        s.remaining_steps = corrected.state.remaining_steps[next_idx];
        ++next_idx;
        remaining.push_back(std::move(s));
      }
      sessions = std::move(remaining);
    }

    cleared = rec.decision.bid_next_kwh;
    outcomes.push_back(std::move(rec));
  }
  return outcomes;
}

}  // namespace evasim
