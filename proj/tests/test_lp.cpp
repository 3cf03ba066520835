#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "evasim/lp.hpp"
#include "evasim/rng.hpp"

using namespace evasim;
using namespace evasim::lp;

TEST_CASE("bound-active minimum") {
  LpProblem p;
  p.add_variable(1.0, kInf, 1.0, "x");
  auto s = solve(p);
  REQUIRE(s.status == Status::optimal);
  CHECK(s.x[0] == Catch::Approx(1.0));
  CHECK(s.objective == Catch::Approx(1.0));
}

TEST_CASE("contradictory constraints are reported infeasible") {
  LpProblem p;
  const int x = p.add_variable(1.0, kInf, 0.0, "x");
  const int cols[] = {x};
  const double vals[] = {1.0};
  p.add_le_row(cols, vals, 0.0);  // x <= 0 against x >= 1

  for (bool presolve : {true, false}) {
    SolveOptions opts;
    opts.presolve = presolve;
    CHECK(solve(p, opts).status == Status::infeasible);
  }
}

TEST_CASE("unbounded problems are reported, not returned as optimal") {
  LpProblem p;
  p.add_variable(-kInf, kInf, -1.0, "x");
  for (bool presolve : {true, false}) {
    SolveOptions opts;
    opts.presolve = presolve;
    CHECK(solve(p, opts).status == Status::unbounded);
  }
}

static LpProblem two_slot_market_lp() {
  // min 30 x1 + 35 x2 - 10 y1 - 4 y2
  //  s.t. x1 + x2 = 2, y <= x, x + y <= 2, y >= 0
  LpProblem p;
  const int x1 = p.add_variable(0.0, 2.0, 30.0, "x1");
  const int x2 = p.add_variable(0.0, 2.0, 35.0, "x2");
  const int y1 = p.add_variable(0.0, 1.0, -10.0, "y1");
  const int y2 = p.add_variable(0.0, 1.0, -4.0, "y2");
  const int balance_cols[] = {x1, x2};
  const double ones[] = {1.0, 1.0};
  p.add_eq_row(balance_cols, ones, 2.0);
  const double lo_vals[] = {1.0, -1.0};
  const int lo1[] = {y1, x1};
  p.add_le_row(lo1, lo_vals, 0.0);
  const int lo2[] = {y2, x2};
  p.add_le_row(lo2, lo_vals, 0.0);
  const int hi1[] = {x1, y1};
  p.add_le_row(hi1, ones, 2.0);
  const int hi2[] = {x2, y2};
  p.add_le_row(hi2, ones, 2.0);
  return p;
}

TEST_CASE("two-slot market instance solves to 51 with and without presolve") {
  LpProblem p = two_slot_market_lp();
  for (bool presolve : {true, false}) {
    SolveOptions opts;
    opts.presolve = presolve;
    auto s = solve(p, opts);
    REQUIRE(s.status == Status::optimal);
    CHECK(s.objective == Catch::Approx(51.0));
    CHECK(s.x[0] + s.x[1] == Catch::Approx(2.0));
  }
}

TEST_CASE("identical problems yield identical solutions") {
  LpProblem p = two_slot_market_lp();
  auto a = solve(p);
  auto b = solve(p);
  REQUIRE(a.status == Status::optimal);
  REQUIRE(b.status == Status::optimal);
  CHECK(a.objective == b.objective);
  for (std::size_t j = 0; j < a.x.size(); ++j) CHECK(a.x[j] == b.x[j]);
}

namespace {

// Reference optimum by enumerating basic solutions of Ax = b (rows from both
// eq and active le/bound combinations is overkill; instead sample the vertex
// set by brute force over which constraints are tight). For the small random
// problems below a fine feasibility grid over the box plus all eq-consistent
// corners is enough: we enumerate all subsets of variables pinned to a bound
// and solve the remaining square systems.
struct DenseLp {
  int n = 0;
  std::vector<double> c, lb, ub;
  std::vector<std::vector<double>> a_eq;
  std::vector<double> b_eq;
  std::vector<std::vector<double>> a_le;
  std::vector<double> b_le;
};

double enumerate_optimum(const DenseLp& p) {
  // Collect every row (eq rows always active; le rows optional) and bound as
  // potential active constraints; try all choices of n active constraints.
  struct RowRef {
    const std::vector<double>* a;
    double b;
    bool required;
  };
  std::vector<RowRef> rows;
  for (std::size_t r = 0; r < p.a_eq.size(); ++r)
    rows.push_back({&p.a_eq[r], p.b_eq[r], true});
  for (std::size_t r = 0; r < p.a_le.size(); ++r)
    rows.push_back({&p.a_le[r], p.b_le[r], false});
  std::vector<std::vector<double>> bound_rows;
  std::vector<double> bound_rhs;
  for (int j = 0; j < p.n; ++j) {
    std::vector<double> unit(p.n, 0.0);
    unit[j] = 1.0;
    if (p.lb[j] > -1e300) {
      bound_rows.push_back(unit);
      bound_rhs.push_back(p.lb[j]);
    }
    if (p.ub[j] < 1e300) {
      bound_rows.push_back(unit);
      bound_rhs.push_back(p.ub[j]);
    }
  }
  for (std::size_t r = 0; r < bound_rows.size(); ++r)
    rows.push_back({&bound_rows[r], bound_rhs[r], false});

  const int total = static_cast<int>(rows.size());
  double best = std::numeric_limits<double>::infinity();

  std::vector<int> pick;
  auto feasible = [&](const std::vector<double>& x) {
    for (int j = 0; j < p.n; ++j)
      if (x[j] < p.lb[j] - 1e-7 || x[j] > p.ub[j] + 1e-7) return false;
    for (std::size_t r = 0; r < p.a_eq.size(); ++r) {
      double s = 0.0;
      for (int j = 0; j < p.n; ++j) s += p.a_eq[r][j] * x[j];
      if (std::abs(s - p.b_eq[r]) > 1e-7) return false;
    }
    for (std::size_t r = 0; r < p.a_le.size(); ++r) {
      double s = 0.0;
      for (int j = 0; j < p.n; ++j) s += p.a_le[r][j] * x[j];
      if (s > p.b_le[r] + 1e-7) return false;
    }
    return true;
  };

  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(pick.size()) == p.n) {
      for (const auto& r : rows)
        if (r.required) {
          bool present = false;
          for (int k : pick)
            if (rows[k].required && rows[k].a == r.a) present = true;
          if (!present) return;
        }
      // solve the n x n system by Gaussian elimination
      std::vector<std::vector<double>> m(p.n, std::vector<double>(p.n + 1));
      for (int i = 0; i < p.n; ++i) {
        for (int j = 0; j < p.n; ++j) m[i][j] = (*rows[pick[i]].a)[j];
        m[i][p.n] = rows[pick[i]].b;
      }
      for (int col = 0; col < p.n; ++col) {
        int piv = -1;
        double best_piv = 1e-9;
        for (int r = col; r < p.n; ++r)
          if (std::abs(m[r][col]) > best_piv) {
            best_piv = std::abs(m[r][col]);
            piv = r;
          }
        if (piv < 0) return;  // singular choice
        std::swap(m[col], m[piv]);
        for (int r = 0; r < p.n; ++r) {
          if (r == col) continue;
          const double f = m[r][col] / m[col][col];
          for (int j = col; j <= p.n; ++j) m[r][j] -= f * m[col][j];
        }
      }
      std::vector<double> x(p.n);
      for (int j = 0; j < p.n; ++j) x[j] = m[j][p.n] / m[j][j];
      if (!feasible(x)) return;
      double obj = 0.0;
      for (int j = 0; j < p.n; ++j) obj += p.c[j] * x[j];
      best = std::min(best, obj);
      return;
    }
    if (start >= total) return;
    for (int k = start; k < total; ++k) {
      pick.push_back(k);
      rec(k + 1);
      pick.pop_back();
    }
  };
  rec(0);
  return best;
}

}  // namespace

TEST_CASE("random small LPs agree with vertex enumeration") {
  Rng rng(55);
  int solved = 0;
  for (int trial = 0; trial < 40; ++trial) {
    DenseLp d;
    d.n = static_cast<int>(rng.uniform_int(2, 4));
    d.c.resize(d.n);
    d.lb.assign(d.n, 0.0);
    d.ub.resize(d.n);
    for (int j = 0; j < d.n; ++j) {
      d.c[j] = rng.uniform(-5.0, 5.0);
      d.ub[j] = rng.uniform(0.5, 4.0);
    }
    const int n_le = static_cast<int>(rng.uniform_int(1, 3));
    for (int r = 0; r < n_le; ++r) {
      std::vector<double> row(d.n);
      for (double& v : row) v = rng.uniform(-1.0, 2.0);
      d.a_le.push_back(row);
      d.b_le.push_back(rng.uniform(0.5, 5.0));
    }
    if (rng.uniform01() < 0.5) {
      std::vector<double> row(d.n, 1.0);
      d.a_eq.push_back(row);
      double cap = 0.0;
      for (int j = 0; j < d.n; ++j) cap += d.ub[j];
      d.b_eq.push_back(rng.uniform(0.0, cap));
    }

    LpProblem p;
    for (int j = 0; j < d.n; ++j) p.add_variable(d.lb[j], d.ub[j], d.c[j]);
    std::vector<int> all(d.n);
    for (int j = 0; j < d.n; ++j) all[j] = j;
    for (std::size_t r = 0; r < d.a_eq.size(); ++r)
      p.add_eq_row(all, d.a_eq[r], d.b_eq[r]);
    for (std::size_t r = 0; r < d.a_le.size(); ++r)
      p.add_le_row(all, d.a_le[r], d.b_le[r]);

    const double ref = enumerate_optimum(d);
    auto s = solve(p);
    if (std::isinf(ref)) {
      CHECK(s.status == Status::infeasible);
      continue;
    }
    REQUIRE(s.status == Status::optimal);
    CHECK_THAT(s.objective, Catch::Matchers::WithinRel(ref, 1e-6) ||
                                Catch::Matchers::WithinAbs(ref, 1e-7));
    ++solved;
  }
  CHECK(solved > 10);
}

TEST_CASE("presolve and plain paths agree on triangle-patterned problems") {
  Rng rng(66);
  for (int trial = 0; trial < 30; ++trial) {
    // a miniature of the scheduling structure: pairs (x, y) with triangle
    // rows, a shared balance row, and a coupling row rewarding y
    const int pairs = static_cast<int>(rng.uniform_int(2, 5));
    LpProblem p;
    std::vector<int> xs, ys;
    std::vector<double> caps;
    for (int i = 0; i < pairs; ++i) {
      const double cap = rng.uniform(1.0, 4.0);
      caps.push_back(cap);
      xs.push_back(p.add_variable(0.0, cap, rng.uniform(5.0, 50.0)));
      ys.push_back(p.add_variable(0.0, cap / 2, -rng.uniform(0.0, 20.0)));
    }
    for (int i = 0; i < pairs; ++i) {
      const int lo[] = {ys[i], xs[i]};
      const double lov[] = {1.0, -1.0};
      p.add_le_row(lo, lov, 0.0);
      const int hi[] = {xs[i], ys[i]};
      const double hiv[] = {1.0, 1.0};
      p.add_le_row(hi, hiv, caps[i]);
    }
    double total_cap = 0.0;
    for (double c : caps) total_cap += c;
    p.add_eq_row(xs, std::vector<double>(pairs, 1.0),
                 rng.uniform01() * total_cap);
    // coupling: sum y >= need  (as -sum y <= -need)
    std::vector<double> neg(pairs, -1.0);
    p.add_le_row(ys, neg, -rng.uniform01() * total_cap / 4);

    SolveOptions with, without;
    with.presolve = true;
    without.presolve = false;
    auto a = solve(p, with);
    auto b = solve(p, without);
    REQUIRE(a.status == b.status);
    if (a.status != Status::optimal) continue;
    CHECK_THAT(a.objective, Catch::Matchers::WithinRel(b.objective, 1e-7) ||
                                Catch::Matchers::WithinAbs(b.objective, 1e-8));
  }
}

TEST_CASE("LP text dump includes variables, rows and bounds") {
  LpProblem p = two_slot_market_lp();
  std::ostringstream os;
  write_lp_format(p, os);
  const std::string text = os.str();
  CHECK(text.find("Minimize") != std::string::npos);
  CHECK(text.find("Subject To") != std::string::npos);
  CHECK(text.find("Bounds") != std::string::npos);
  CHECK(text.find("x1") != std::string::npos);
  CHECK(text.find("= 2") != std::string::npos);
  CHECK(text.find("End") != std::string::npos);
}

TEST_CASE("dimension mismatches are rejected") {
  LpProblem p;
  p.add_variable(0.0, 1.0, 1.0);
  p.eq_entries.push_back({0, 5, 1.0});  // column out of range
  p.eq_rhs.push_back(1.0);
  CHECK_THROWS_AS(solve(p), InvalidParameter);
}
