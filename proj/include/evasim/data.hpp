#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evasim/engine.hpp"
#include "evasim/errors.hpp"
#include "evasim/model.hpp"
#include "evasim/rng.hpp"
#include "evasim/settlement.hpp"

namespace evasim {

// File schemas (v1):
//   prices.csv : hour,lambda,mu_rc,mu_rp[,mileage]   one row per hour
//   regd.csv   : seconds,signal                      2-second cadence
//   fleet.csv  : id,arrival,departure,soc_arrival,soc_expected,
//                e_rated_kwh,efficiency,p_max_kw
// Relative paths resolve under $EVASIM_DATA_DIR when that variable is set.

inline std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::path(path).is_absolute()) return path;
  if (const char* dir = std::getenv("EVASIM_DATA_DIR"))
    if (*dir && !fs::exists(path)) return (fs::path(dir) / path).string();
  return path;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct CsvReader {
  std::string file;
  std::ifstream in;
  int line_no = 0;

  explicit CsvReader(const std::string& path) : file(path), in(path) {
    if (!in.is_open()) throw IoError("cannot open " + path);
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(file + ":" + std::to_string(line_no) + ": " + msg);
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
        line.pop_back();
      if (line.empty()) continue;
      fields.clear();
      std::stringstream ss(line);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        const auto a = tok.find_first_not_of(" \t");
        const auto b = tok.find_last_not_of(" \t");
        fields.push_back(a == std::string::npos
                             ? std::string()
                             : tok.substr(a, b - a + 1));
      }
      if (!line.empty() && line.back() == ',') fields.push_back("");
      return true;
    }
    return false;
  }

  double num(const std::string& field, const char* what) {
    try {
      std::size_t used = 0;
      const double v = std::stod(field, &used);
      if (used != field.size()) fail(std::string("malformed ") + what);
      return v;
    } catch (const ParseError&) {
      throw;
    } catch (...) {
      fail(std::string("malformed ") + what + " '" + field + "'");
    }
  }

  long integer(const std::string& field, const char* what) {
    try {
      std::size_t used = 0;
      const long v = std::stol(field, &used);
      if (used != field.size()) fail(std::string("malformed ") + what);
      return v;
    } catch (const ParseError&) {
      throw;
    } catch (...) {
      fail(std::string("malformed ") + what + " '" + field + "'");
    }
  }
};

}  // namespace detail

// Hourly RegD traces from a 2-second CSV. Partial hours at the file edge are
// rejected rather than padded.
inline std::vector<RegDTrace> load_regd(const std::string& path) {
  detail::CsvReader csv(resolve_data_path(path));
  std::vector<std::string> f;
  if (!csv.next(f) || f.size() < 2 || f[0] != "seconds" || f[1] != "signal")
    csv.fail("expected header 'seconds,signal'");

  std::vector<RegDTrace> traces;
  RegDTrace current;
  long expected_seconds = 0;
  while (csv.next(f)) {
    if (f.size() != 2) csv.fail("expected 2 fields");
    const long secs = csv.integer(f[0], "seconds");
    if (secs != expected_seconds)
      csv.fail("expected seconds " + std::to_string(expected_seconds) +
               ", got " + std::to_string(secs) + " (2-second cadence)");
    expected_seconds += 2;
    const double v = csv.num(f[1], "signal");
    if (!(v >= -1.0 && v <= 1.0))
      csv.fail("signal " + detail::fmt_double(v) + " outside [-1,1]");
    current.samples.push_back(v);
    if (static_cast<int>(current.samples.size()) == kSamplesPerHour) {
      traces.push_back(std::move(current));
      current = RegDTrace{};
    }
  }
  if (!current.samples.empty())
    csv.fail("trailing partial hour of " +
             std::to_string(current.samples.size()) + " samples");
  return traces;
}

// Hourly price records. Rows must be sorted and gap-free. When the file has
// no mileage column, traces must be supplied so the mileage can be computed
// from the paired RegD signal.
inline std::vector<PriceRecord> load_prices(
    const std::string& path,
    const std::vector<RegDTrace>* traces = nullptr) {
  detail::CsvReader csv(resolve_data_path(path));
  std::vector<std::string> f;
  if (!csv.next(f)) csv.fail("empty file");
  const bool has_mileage = f.size() == 5 && f[4] == "mileage";
  if (!(f.size() >= 4 && f[0] == "hour" && f[1] == "lambda" &&
        f[2] == "mu_rc" && f[3] == "mu_rp") ||
      (f.size() == 5 && !has_mileage) || f.size() > 5)
    csv.fail("expected header 'hour,lambda,mu_rc,mu_rp[,mileage]'");

  std::vector<PriceRecord> out;
  while (csv.next(f)) {
    if (f.size() != (has_mileage ? 5u : 4u)) csv.fail("wrong field count");
    PriceRecord p;
    p.step = static_cast<int>(csv.integer(f[0], "hour"));
    p.lambda = csv.num(f[1], "lambda");
    p.mu_rc = csv.num(f[2], "mu_rc");
    p.mu_rp = csv.num(f[3], "mu_rp");
    p.mileage = has_mileage ? csv.num(f[4], "mileage") : 0.0;
    if (!out.empty()) {
      if (p.step <= out.back().step) csv.fail("hours not strictly increasing");
      if (p.step != out.back().step + 1)
        csv.fail("missing hour " + std::to_string(out.back().step + 1));
    }
    try {
      p.validate();
    } catch (const InvalidParameter& e) {
      csv.fail(e.what());
    }
    out.push_back(p);
  }
  if (out.empty()) csv.fail("no price rows");
  if (!has_mileage) {
    if (!traces)
      throw InvalidParameter(
          "load_prices: file has no mileage column and no RegD traces were "
          "paired with it");
    if (traces->size() < out.size())
      throw InvalidParameter(
          "load_prices: fewer RegD traces than price hours");
    for (std::size_t k = 0; k < out.size(); ++k)
      out[k].mileage = mileage((*traces)[k]);
  }
  return out;
}

inline void save_prices(const std::vector<PriceRecord>& prices,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out.is_open()) throw IoError("cannot write " + path);
  out << "hour,lambda,mu_rc,mu_rp,mileage\n";
  for (const PriceRecord& p : prices)
    out << p.step << ',' << detail::fmt_double(p.lambda) << ','
        << detail::fmt_double(p.mu_rc) << ',' << detail::fmt_double(p.mu_rp)
        << ',' << detail::fmt_double(p.mileage) << '\n';
}

inline void save_regd(const std::vector<RegDTrace>& traces,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out.is_open()) throw IoError("cannot write " + path);
  out << "seconds,signal\n";
  long secs = 0;
  for (const RegDTrace& t : traces)
    for (double v : t.samples) {
      out << secs << ',' << detail::fmt_double(v) << '\n';
      secs += 2;
    }
}

// One EV population segment: counts, window bounds (clock hours; a departure
// window below the arrival window rolls into the next day) and parameter
// ranges for the uniform draws.
struct EvTypeSpec {
  std::string label;
  int count = 0;
  int arrival_lo = 0, arrival_hi = 0;
  int depart_lo = 0, depart_hi = 0;
  double delta_e_lo = 0.0, delta_e_hi = 0.0;  // kWh
  double p_max_lo = 0.0, p_max_hi = 0.0;      // kW
  double e_rated_kwh = 20.0;
  double efficiency = 0.75;
};

struct FleetSpec {
  std::vector<EvTypeSpec> types;

  // The benchmark population: overnight commuters plus two daytime cohorts,
  // optionally scaled down while keeping the 6:2:2 proportions.
  static FleetSpec benchmark(double scale = 1.0) {
    auto scaled = [&](int n) {
      return std::max(1, static_cast<int>(std::lround(n * scale)));
    };
    FleetSpec spec;
    spec.types.push_back({"I", scaled(600), 16, 23, 6, 13, 10.0, 24.0, 4.0,
                          8.0, 20.0, 0.75});
    spec.types.push_back(
        {"II", scaled(200), 0, 7, 14, 21, 10.0, 24.0, 4.0, 8.0, 20.0, 0.75});
    spec.types.push_back(
        {"III", scaled(200), 8, 15, 22, 5, 10.0, 24.0, 4.0, 8.0, 20.0, 0.75});
    return spec;
  }

  void validate() const {
    for (const EvTypeSpec& t : types) {
      if (t.count < 0) throw InvalidParameter("FleetSpec: negative count");
      if (t.arrival_hi < t.arrival_lo)
        throw InvalidParameter("FleetSpec: empty arrival window");
      if (t.delta_e_hi < t.delta_e_lo || t.p_max_hi < t.p_max_lo)
        throw InvalidParameter("FleetSpec: empty parameter range");
      if (t.delta_e_lo < 0.0 || t.p_max_lo <= 0.0)
        throw InvalidParameter("FleetSpec: parameter ranges must be positive");
      if (t.efficiency <= 0.0 || t.efficiency > 1.0)
        throw InvalidParameter("FleetSpec: efficiency must be in (0,1]");
      const double worst_gap =
          t.delta_e_hi * t.efficiency / t.e_rated_kwh;
      if (worst_gap > 0.9 + 1e-12)
        throw InvalidParameter(
            "FleetSpec: delta_e range cannot fit the battery between 5% and "
            "95% SoC at this efficiency");
    }
  }
};

// Deterministic synthetic fleet. Arrival/departure hours are inclusive
// integer draws; a departure at or before the arrival rolls to the next day
// on the absolute axis. Draws violating the full-power feasibility bound are
// redrawn.
inline std::vector<EvRecord> generate_fleet(const FleetSpec& spec,
                                            std::uint64_t seed) {
  spec.validate();
  std::vector<EvRecord> fleet;
  constexpr double kSocArrival = 0.05;
  for (std::size_t type_idx = 0; type_idx < spec.types.size(); ++type_idx) {
    const EvTypeSpec& t = spec.types[type_idx];
    Rng rng = Rng::derive(seed, type_idx);
    int dep_lo = t.depart_lo, dep_hi = t.depart_hi;
    if (dep_hi < dep_lo) dep_hi += 24;  // wrapped clock window
    for (int k = 0; k < t.count; ++k) {
      EvRecord ev;
      ev.id = t.label + "-" + std::to_string(k);
      ev.e_rated_kwh = t.e_rated_kwh;
      ev.efficiency = t.efficiency;
      for (int attempt = 0;; ++attempt) {
        if (attempt >= 1000)
          throw InvalidParameter(
              "generate_fleet: cannot draw a feasible EV for type " + t.label);
        ev.arrival_step = static_cast<int>(
            rng.uniform_int(t.arrival_lo, t.arrival_hi));
        int dep = static_cast<int>(rng.uniform_int(dep_lo, dep_hi));
        if (dep <= ev.arrival_step) dep += 24;
        ev.departure_step = dep;
        const double delta = rng.uniform(t.delta_e_lo, t.delta_e_hi);
        ev.p_max_kw = rng.uniform(t.p_max_lo, t.p_max_hi);
        ev.soc_arrival = kSocArrival;
        ev.soc_expected =
            kSocArrival + delta * ev.efficiency / ev.e_rated_kwh;
        ev.delta_e_kwh = required_energy(ev.soc_arrival, ev.soc_expected,
                                         ev.e_rated_kwh, ev.efficiency);
        if (ev.admissible()) break;
      }
      fleet.push_back(ev);
    }
  }
  return fleet;
}

inline void save_fleet(const std::vector<EvRecord>& fleet,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out.is_open()) throw IoError("cannot write " + path);
  out << "id,arrival,departure,soc_arrival,soc_expected,e_rated_kwh,"
         "efficiency,p_max_kw\n";
  for (const EvRecord& ev : fleet)
    out << ev.id << ',' << ev.arrival_step << ',' << ev.departure_step << ','
        << detail::fmt_double(ev.soc_arrival) << ','
        << detail::fmt_double(ev.soc_expected) << ','
        << detail::fmt_double(ev.e_rated_kwh) << ','
        << detail::fmt_double(ev.efficiency) << ','
        << detail::fmt_double(ev.p_max_kw) << '\n';
}

inline std::vector<EvRecord> load_fleet(const std::string& path) {
  detail::CsvReader csv(resolve_data_path(path));
  std::vector<std::string> f;
  if (!csv.next(f) || f.size() != 8 || f[0] != "id")
    csv.fail(
        "expected header 'id,arrival,departure,soc_arrival,soc_expected,"
        "e_rated_kwh,efficiency,p_max_kw'");
  std::vector<EvRecord> fleet;
  while (csv.next(f)) {
    if (f.size() != 8) csv.fail("expected 8 fields");
    EvRecord ev;
    ev.id = f[0];
    ev.arrival_step = static_cast<int>(csv.integer(f[1], "arrival"));
    ev.departure_step = static_cast<int>(csv.integer(f[2], "departure"));
    ev.soc_arrival = csv.num(f[3], "soc_arrival");
    ev.soc_expected = csv.num(f[4], "soc_expected");
    ev.e_rated_kwh = csv.num(f[5], "e_rated_kwh");
    ev.efficiency = csv.num(f[6], "efficiency");
    ev.p_max_kw = csv.num(f[7], "p_max_kw");
    try {
      ev.delta_e_kwh = required_energy(ev.soc_arrival, ev.soc_expected,
                                       ev.e_rated_kwh, ev.efficiency);
      ev.validate();
    } catch (const InvalidParameter& e) {
      csv.fail(e.what());
    }
    fleet.push_back(ev);
  }
  return fleet;
}

// Synthetic day-shaped prices: a morning and an evening peak on the energy
// price, regulation prices lifted in the evening, seeded jitter throughout.
// Mileage starts at zero; attach_mileage pairs it with a trace set.
inline std::vector<PriceRecord> synth_prices(int n_hours, std::uint64_t seed,
                                             int first_step = 0) {
  if (n_hours < 1) throw InvalidParameter("synth_prices: need hours >= 1");
  Rng rng = Rng::derive(seed, 0xA11CE);
  std::vector<PriceRecord> out;
  for (int h = 0; h < n_hours; ++h) {
    const int clock = (first_step + h) % 24;
    PriceRecord p;
    p.step = first_step + h;
    const double morning = std::exp(-0.5 * std::pow((clock - 8.5) / 2.2, 2));
    const double evening = std::exp(-0.5 * std::pow((clock - 18.5) / 2.8, 2));
    p.lambda = 26.0 + 14.0 * morning + 26.0 * evening + rng.uniform(-2.0, 2.0);
    p.mu_rc = 9.0 + 10.0 * evening + rng.uniform(-1.5, 1.5);
    p.mu_rc = std::max(0.5, p.mu_rc);
    p.mu_rp = std::max(0.05, 0.16 + 0.1 * evening + rng.uniform(-0.04, 0.04));
    p.mileage = 0.0;
    out.push_back(p);
  }
  return out;
}

inline void attach_mileage(std::vector<PriceRecord>& prices,
                           const std::vector<RegDTrace>& traces) {
  if (traces.size() < prices.size())
    throw InvalidParameter("attach_mileage: fewer traces than price hours");
  for (std::size_t k = 0; k < prices.size(); ++k)
    prices[k].mileage = mileage(traces[k]);
}

// Synthetic RegD-style signal: a mean-reverting walk, de-meaned per
// quarter-hour block so each hour is nearly energy neutral, as the real
// signal is designed to be.
inline std::vector<RegDTrace> synth_regd(int n_hours, std::uint64_t seed) {
  if (n_hours < 1) throw InvalidParameter("synth_regd: need hours >= 1");
  Rng rng = Rng::derive(seed, 0x5160);
  std::vector<RegDTrace> out;
  double s = 0.0;
  for (int h = 0; h < n_hours; ++h) {
    RegDTrace t;
    t.samples.resize(kSamplesPerHour);
    for (int g = 0; g < kSamplesPerHour; ++g) {
      s = 0.985 * s + 0.11 * rng.normal();
      s = std::clamp(s, -1.0, 1.0);
      t.samples[g] = s;
    }
    constexpr int block = kSamplesPerHour / 4;
    for (int b = 0; b < 4; ++b) {
      double mean = 0.0;
      for (int g = b * block; g < (b + 1) * block; ++g) mean += t.samples[g];
      mean /= block;
      for (int g = b * block; g < (b + 1) * block; ++g)
        t.samples[g] = std::clamp(t.samples[g] - mean, -1.0, 1.0);
    }
    out.push_back(std::move(t));
  }
  return out;
}

// Aggregated results of a run, also what the report files contain.
struct ReportSummary {
  int hours = 0;
  double energy_cost = 0.0;
  double regulation_credit = 0.0;
  double net_cost = 0.0;
  double mean_score = 1.0;
  int departures = 0;
  int rejected = 0;
  long clamp_events = 0;
  // SoC deviation histogram, percent edges 0.3/0.6/0.9/1.2/1.5, last bucket
  // open-ended
  std::vector<int> soc_buckets = std::vector<int>(6, 0);
  int within_half_percent = 0;

  double daily_revenue() const { return -net_cost; }
};

inline ReportSummary summarize(const std::vector<HourOutcome>& outcomes) {
  ReportSummary s;
  s.hours = static_cast<int>(outcomes.size());
  double score_sum = 0.0;
  for (const HourOutcome& rec : outcomes) {
    s.energy_cost += rec.settlement.energy_cost;
    s.regulation_credit += rec.settlement.regulation_credit;
    s.net_cost += rec.settlement.net_cost;
    score_sum += rec.settlement.score;
    s.rejected += static_cast<int>(rec.rejected.size());
    s.clamp_events += rec.clamp_events;
    for (const Departure& dep : rec.departures) {
      ++s.departures;
      const double pct = dep.soc_deviation * 100.0;
      const int bucket = pct < 0.3   ? 0
                         : pct < 0.6 ? 1
                         : pct < 0.9 ? 2
                         : pct < 1.2 ? 3
                         : pct < 1.5 ? 4
                                     : 5;
      ++s.soc_buckets[bucket];
      if (pct < 0.5) ++s.within_half_percent;
    }
  }
  if (s.hours > 0) s.mean_score = score_sum / s.hours;
  return s;
}

// Emit the per-hour settlement table, the SoC-deviation histogram and the
// daily totals under `dir`. Returns the summary.
inline ReportSummary write_report(const std::vector<HourOutcome>& outcomes,
                                  const std::string& dir) {
  if (outcomes.empty()) throw InvalidParameter("write_report: no outcomes");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);

  {
    std::ofstream out(fs::path(dir) / "settlement.csv");
    if (!out.is_open()) throw IoError("cannot write settlement.csv in " + dir);
    out << "hour,cleared_mwh,score,mileage,energy_cost_usd,"
           "regulation_credit_usd,net_cost_usd,connected,departures,"
           "clamp_events\n";
    for (const HourOutcome& rec : outcomes)
      out << rec.hour << ',' << detail::fmt_double(rec.cleared_kwh / 1000.0)
          << ',' << detail::fmt_double(rec.settlement.score) << ','
          << detail::fmt_double(rec.settlement.mileage) << ','
          << detail::fmt_double(rec.settlement.energy_cost) << ','
          << detail::fmt_double(rec.settlement.regulation_credit) << ','
          << detail::fmt_double(rec.settlement.net_cost) << ','
          << rec.connected_ids.size() << ',' << rec.departures.size() << ','
          << rec.clamp_events << '\n';
  }

  const ReportSummary s = summarize(outcomes);
  {
    std::ofstream out(fs::path(dir) / "soc_deviation.csv");
    if (!out.is_open())
      throw IoError("cannot write soc_deviation.csv in " + dir);
    out << "bucket_low_pct,bucket_high_pct,count\n";
    const double edges[] = {0.0, 0.3, 0.6, 0.9, 1.2, 1.5};
    for (int b = 0; b < 6; ++b) {
      out << detail::fmt_double(edges[b]) << ',';
      if (b < 5)
        out << detail::fmt_double(edges[b + 1]);
      else
        out << "inf";
      out << ',' << s.soc_buckets[b] << '\n';
    }
  }

  {
    nlohmann::json j;
    j["hours"] = s.hours;
    j["energy_cost_usd"] = s.energy_cost;
    j["regulation_credit_usd"] = s.regulation_credit;
    j["net_cost_usd"] = s.net_cost;
    j["daily_revenue_usd"] = s.daily_revenue();
    j["mean_performance_score"] = s.mean_score;
    j["departures"] = s.departures;
    j["rejected"] = s.rejected;
    j["clamp_events"] = s.clamp_events;
    j["soc_deviation_buckets"] = s.soc_buckets;
    j["within_half_percent"] = s.within_half_percent;
    std::ofstream out(fs::path(dir) / "summary.json");
    if (!out.is_open()) throw IoError("cannot write summary.json in " + dir);
    out << j.dump(2) << '\n';
  }
  return s;
}

}  // namespace evasim
