#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "evasim/data.hpp"
#include "test_support.hpp"

using namespace evasim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("evasim_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("price loading accepts a clean file") {
  TempDir tmp;
  std::string text = "hour,lambda,mu_rc,mu_rp,mileage\n";
  for (int h = 0; h < 24; ++h)
    text += std::to_string(h) + ",30.5,10,0.4,120\n";
  write_text(tmp.file("p.csv"), text);
  auto prices = load_prices(tmp.file("p.csv"));
  REQUIRE(prices.size() == 24);
  CHECK(prices[7].step == 7);
  CHECK(prices[7].lambda == Catch::Approx(30.5));
}

TEST_CASE("price loading reports bad rows with their line") {
  TempDir tmp;
  write_text(tmp.file("neg.csv"),
             "hour,lambda,mu_rc,mu_rp,mileage\n"
             "0,31,10,0.4,100\n"
             "1,-5,10,0.4,100\n");
  try {
    load_prices(tmp.file("neg.csv"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  write_text(tmp.file("gap.csv"),
             "hour,lambda,mu_rc,mu_rp,mileage\n"
             "12,31,10,0.4,100\n"
             "14,31,10,0.4,100\n");
  try {
    load_prices(tmp.file("gap.csv"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("missing hour 13") != std::string::npos);
  }
}

TEST_CASE("prices without a mileage column pair with traces") {
  TempDir tmp;
  write_text(tmp.file("p.csv"),
             "hour,lambda,mu_rc,mu_rp\n"
             "0,31,10,0.4\n"
             "1,33,11,0.4\n");
  CHECK_THROWS_AS(load_prices(tmp.file("p.csv")), InvalidParameter);
  auto traces = synth_regd(2, 4);
  auto prices = load_prices(tmp.file("p.csv"), &traces);
  CHECK(prices[0].mileage == Catch::Approx(mileage(traces[0])));
  CHECK(prices[1].mileage == Catch::Approx(mileage(traces[1])));
}

TEST_CASE("price files round-trip losslessly") {
  TempDir tmp;
  auto traces = synth_regd(30, 9);
  auto prices = synth_prices(30, 12);
  attach_mileage(prices, traces);
  save_prices(prices, tmp.file("rt.csv"));
  auto again = load_prices(tmp.file("rt.csv"));
  REQUIRE(again.size() == prices.size());
  for (std::size_t k = 0; k < prices.size(); ++k) {
    CHECK(again[k].step == prices[k].step);
    CHECK(again[k].lambda == Catch::Approx(prices[k].lambda).epsilon(1e-10));
    CHECK(again[k].mu_rc == Catch::Approx(prices[k].mu_rc).epsilon(1e-10));
    CHECK(again[k].mu_rp == Catch::Approx(prices[k].mu_rp).epsilon(1e-10));
    CHECK(again[k].mileage == Catch::Approx(prices[k].mileage).epsilon(1e-10));
  }
}

TEST_CASE("RegD loading enforces cadence, range and whole hours") {
  TempDir tmp;

  std::string day = "seconds,signal\n";
  for (int g = 0; g < 24 * kSamplesPerHour; ++g)
    day += std::to_string(2 * g) + ",0\n";
  write_text(tmp.file("day.csv"), day);
  auto traces = load_regd(tmp.file("day.csv"));
  REQUIRE(traces.size() == 24);
  for (const auto& t : traces)
    for (double v : t.samples) CHECK(v == 0.0);

  write_text(tmp.file("range.csv"), "seconds,signal\n0,1.2\n");
  CHECK_THROWS_AS(load_regd(tmp.file("range.csv")), ParseError);

  std::string partial = "seconds,signal\n";
  for (int g = 0; g < kSamplesPerHour + 10; ++g)
    partial += std::to_string(2 * g) + ",0.1\n";
  write_text(tmp.file("partial.csv"), partial);
  CHECK_THROWS_AS(load_regd(tmp.file("partial.csv")), ParseError);

  write_text(tmp.file("cadence.csv"), "seconds,signal\n0,0.1\n3,0.1\n");
  CHECK_THROWS_AS(load_regd(tmp.file("cadence.csv")), ParseError);
}

TEST_CASE("RegD round-trip") {
  TempDir tmp;
  auto traces = synth_regd(3, 77);
  save_regd(traces, tmp.file("r.csv"));
  auto again = load_regd(tmp.file("r.csv"));
  REQUIRE(again.size() == 3);
  for (int h = 0; h < 3; ++h)
    for (int g = 0; g < kSamplesPerHour; g += 131)
      CHECK(again[h].samples[g] ==
            Catch::Approx(traces[h].samples[g]).margin(1e-10));
}

TEST_CASE("benchmark fleet has the documented composition") {
  auto fleet = generate_fleet(FleetSpec::benchmark(), 42);
  REQUIRE(fleet.size() == 1000);
  int type1 = 0, type2 = 0, type3 = 0;
  for (const auto& ev : fleet) {
    if (ev.id.rfind("I-", 0) == 0) ++type1;
    if (ev.id.rfind("II-", 0) == 0) ++type2;
    if (ev.id.rfind("III-", 0) == 0) ++type3;
    CHECK_NOTHROW(ev.validate());
    CHECK(ev.delta_e_kwh >= 10.0 - 1e-9);
    CHECK(ev.delta_e_kwh <= 24.0 + 1e-9);
    CHECK(ev.p_max_kw >= 4.0);
    CHECK(ev.p_max_kw <= 8.0);
  }
  CHECK(type1 == 600);
  CHECK(type2 == 200);
  CHECK(type3 == 200);

  auto scaled = generate_fleet(FleetSpec::benchmark(0.1), 42);
  CHECK(scaled.size() == 100);
}

TEST_CASE("zero-count spec yields an empty fleet") {
  FleetSpec spec = FleetSpec::benchmark();
  for (auto& t : spec.types) t.count = 0;
  CHECK(generate_fleet(spec, 1).empty());
}

TEST_CASE("every generated EV fits its parking window at full power") {
  auto fleet = generate_fleet(FleetSpec::benchmark(5.0), 7);  // 5000 EVs
  auto more = generate_fleet(FleetSpec::benchmark(5.0), 8);   // 5000 more
  fleet.insert(fleet.end(), more.begin(), more.end());
  for (const auto& ev : fleet)
    CHECK(ev.delta_e_kwh <= ev.p_max_kw * ev.duration_steps() + 1e-9);
}

TEST_CASE("fleet generation is reproducible and serializable") {
  TempDir tmp;
  auto a = generate_fleet(FleetSpec::benchmark(0.05), 99);
  auto b = generate_fleet(FleetSpec::benchmark(0.05), 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].id == b[k].id);
    CHECK(a[k].arrival_step == b[k].arrival_step);
    CHECK(a[k].departure_step == b[k].departure_step);
    CHECK(a[k].delta_e_kwh == b[k].delta_e_kwh);
    CHECK(a[k].p_max_kw == b[k].p_max_kw);
  }

  save_fleet(a, tmp.file("fleet.csv"));
  auto loaded = load_fleet(tmp.file("fleet.csv"));
  REQUIRE(loaded.size() == a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(loaded[k].id == a[k].id);
    CHECK(loaded[k].delta_e_kwh ==
          Catch::Approx(a[k].delta_e_kwh).epsilon(1e-9));
  }
}

TEST_CASE("departure windows roll over midnight onto the absolute axis") {
  auto fleet = generate_fleet(FleetSpec::benchmark(0.2), 3);
  for (const auto& ev : fleet) {
    CHECK(ev.departure_step > ev.arrival_step);
    if (ev.id.rfind("I-", 0) == 0) {
      CHECK(ev.arrival_step >= 16);
      CHECK(ev.arrival_step <= 23);
      CHECK(ev.departure_step >= 30);  // clock 6 next day
      CHECK(ev.departure_step <= 37);  // clock 13 next day
    }
    if (ev.id.rfind("III-", 0) == 0) {
      CHECK(ev.departure_step >= 22);
      CHECK(ev.departure_step <= 29);  // clock 5 next day
    }
  }
}

namespace {

std::vector<HourOutcome> quiet_run() {
  std::vector<EvRecord> fleet;
  for (int k = 0; k < 6; ++k) {
    EvRecord ev;
    ev.id = "q" + std::to_string(k);
    ev.arrival_step = k % 3;
    ev.departure_step = ev.arrival_step + 5 + k % 2;
    ev.e_rated_kwh = 20.0;
    ev.efficiency = 1.0;
    ev.soc_arrival = 0.1;
    ev.soc_expected = 0.5;
    ev.p_max_kw = 4.0;
    ev.delta_e_kwh = 8.0;
    fleet.push_back(ev);
  }
  auto prices = support::synthetic_forecast(12, 0);
  for (auto& p : prices) {
    p.mu_rc = 0.0;
    p.mu_rp = 0.0;
  }
  std::vector<RegDTrace> traces(12, RegDTrace::constant(0.0));
  SimParams params;
  params.mpc.horizon = 3;
  params.mpc.n_scenarios = 1;
  params.eps_p = 0.0;
  params.eps_ev = 0.0;
  return run(fleet, prices, traces, params);
}

}  // namespace

TEST_CASE("reports of a silent run are all zeros in the right places") {
  TempDir tmp;
  auto outcomes = quiet_run();
  auto summary = write_report(outcomes, tmp.file("out"));

  CHECK(summary.regulation_credit == 0.0);
  CHECK(summary.departures == 6);
  CHECK(summary.soc_buckets[0] == 6);  // every EV lands in [0, 0.3)
  for (int b = 1; b < 6; ++b) CHECK(summary.soc_buckets[b] == 0);

  // one settlement row per simulated hour
  std::ifstream in(tmp.file("out") + "/settlement.csv");
  REQUIRE(in.is_open());
  std::string line;
  int rows = -1;  // header
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(outcomes.size()));

  // bucket counts sum to the departed fleet size
  int total = 0;
  for (int b = 0; b < 6; ++b) total += summary.soc_buckets[b];
  CHECK(total == summary.departures);

  CHECK(fs::exists(tmp.file("out") + "/summary.json"));
  CHECK(fs::exists(tmp.file("out") + "/soc_deviation.csv"));
}

TEST_CASE("report writing fails cleanly on an unwritable path") {
  auto outcomes = quiet_run();
  CHECK_THROWS_AS(write_report(outcomes, "/proc/definitely/not/writable"),
                  IoError);
  CHECK_THROWS_AS(write_report({}, "anywhere"), InvalidParameter);
}

TEST_CASE("synthetic generators produce valid, seeded-stable data") {
  auto prices = synth_prices(48, 5);
  auto traces = synth_regd(48, 5);
  attach_mileage(prices, traces);
  for (const auto& p : prices) CHECK_NOTHROW(p.validate());
  for (const auto& t : traces) CHECK_NOTHROW(t.validate());
  for (const auto& p : prices) CHECK(p.mileage > 1.0);

  auto prices2 = synth_prices(48, 5);
  for (std::size_t k = 0; k < prices.size(); ++k)
    CHECK(prices2[k].lambda == prices[k].lambda);

  // near energy neutrality per hour
  for (const auto& t : traces) {
    double mean = 0.0;
    for (double v : t.samples) mean += v;
    mean /= t.samples.size();
    CHECK(std::abs(mean) < 0.02);
  }
}

TEST_CASE("data directory override resolves relative paths") {
  TempDir tmp;
  write_text(tmp.file("env.csv"),
             "hour,lambda,mu_rc,mu_rp,mileage\n0,30,10,0.4,100\n");
  ::setenv("EVASIM_DATA_DIR", tmp.path.string().c_str(), 1);
  auto prices = load_prices("env.csv");
  ::unsetenv("EVASIM_DATA_DIR");
  CHECK(prices.size() == 1);
}
