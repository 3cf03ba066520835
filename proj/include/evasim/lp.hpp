#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "evasim/errors.hpp"

namespace evasim::lp {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Status { optimal, infeasible, unbounded };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
  }
  return "?";
}

// Sparse linear program
//   minimize c'x  s.t.  A_eq x = b_eq,  A_le x <= b_le,  lower <= x <= upper.
// Rows are stored as triplets; columns are created through add_variable and
// rows through add_eq_row / add_le_row.
struct LpProblem {
  struct Entry {
    int row;
    int col;
    double value;
  };

  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> names;

  std::vector<Entry> eq_entries;
  std::vector<double> eq_rhs;
  std::vector<Entry> le_entries;
  std::vector<double> le_rhs;

  int num_vars() const { return static_cast<int>(cost.size()); }
  int num_eq_rows() const { return static_cast<int>(eq_rhs.size()); }
  int num_le_rows() const { return static_cast<int>(le_rhs.size()); }

  int add_variable(double lb, double ub, double c, std::string name = {}) {
    cost.push_back(c);
    lower.push_back(lb);
    upper.push_back(ub);
    names.push_back(std::move(name));
    return num_vars() - 1;
  }

  int add_eq_row(std::span<const int> cols, std::span<const double> vals,
                 double rhs) {
    const int r = num_eq_rows();
    for (std::size_t k = 0; k < cols.size(); ++k)
      eq_entries.push_back({r, cols[k], vals[k]});
    eq_rhs.push_back(rhs);
    return r;
  }

  int add_le_row(std::span<const int> cols, std::span<const double> vals,
                 double rhs) {
    const int r = num_le_rows();
    for (std::size_t k = 0; k < cols.size(); ++k)
      le_entries.push_back({r, cols[k], vals[k]});
    le_rhs.push_back(rhs);
    return r;
  }

  void validate() const {
    const int n = num_vars();
    for (int j = 0; j < n; ++j) {
      if (std::isnan(cost[j]) || std::isinf(cost[j]))
        throw InvalidParameter("LpProblem: non-finite cost for column " +
                               std::to_string(j));
      if (std::isnan(lower[j]) || std::isnan(upper[j]))
        throw InvalidParameter("LpProblem: NaN bound for column " +
                               std::to_string(j));
      if (lower[j] > upper[j] + 1e-12)
        throw InvalidParameter("LpProblem: lower > upper for column " +
                               std::to_string(j));
    }
    auto check = [&](const std::vector<Entry>& es, int nrows, const char* kind) {
      for (const Entry& e : es) {
        if (e.row < 0 || e.row >= nrows || e.col < 0 || e.col >= n)
          throw InvalidParameter(std::string("LpProblem: ") + kind +
                                 " entry out of range");
        if (std::isnan(e.value) || std::isinf(e.value))
          throw InvalidParameter(std::string("LpProblem: non-finite ") + kind +
                                 " coefficient");
      }
    };
    check(eq_entries, num_eq_rows(), "eq");
    check(le_entries, num_le_rows(), "le");
    for (double b : eq_rhs)
      if (std::isnan(b) || std::isinf(b))
        throw InvalidParameter("LpProblem: non-finite eq rhs");
    for (double b : le_rhs)
      if (std::isnan(b) || std::isinf(b))
        throw InvalidParameter("LpProblem: non-finite le rhs");
  }
};

struct LpSolution {
  Status status = Status::optimal;
  std::vector<double> x;
  double objective = 0.0;
  long iterations = 0;
};

struct SolveOptions {
  enum class Method { automatic, simplex };
  Method method = Method::automatic;
  bool presolve = true;
  double feas_tol = 1e-7;     // row-normalized primal feasibility
  long iteration_limit = 2'000'000;
};

// Implemented in detail/lp_solve_impl.hpp (included below).
LpSolution solve(const LpProblem& problem, const SolveOptions& options = {});

// Debug dump in the conventional LP text format.
inline void write_lp_format(const LpProblem& p, std::ostream& os) {
  auto var_name = [&](int j) {
    if (j < static_cast<int>(p.names.size()) && !p.names[j].empty()) {
      std::string s = p.names[j];
      for (char& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) c = '_';
      return s;
    }
    return "x" + std::to_string(j);
  };
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };

  os << "Minimize\n obj:";
  for (int j = 0; j < p.num_vars(); ++j)
    if (p.cost[j] != 0.0)
      os << (p.cost[j] >= 0 ? " + " : " - ") << num(std::abs(p.cost[j])) << " "
         << var_name(j);
  os << "\nSubject To\n";

  auto rows_of = [&](const std::vector<LpProblem::Entry>& es, int nrows) {
    std::vector<std::vector<const LpProblem::Entry*>> rows(nrows);
    for (const auto& e : es) rows[e.row].push_back(&e);
    return rows;
  };
  const auto eq_rows = rows_of(p.eq_entries, p.num_eq_rows());
  for (int r = 0; r < p.num_eq_rows(); ++r) {
    os << " e" << r << ":";
    for (const auto* e : eq_rows[r])
      os << (e->value >= 0 ? " + " : " - ") << num(std::abs(e->value)) << " "
         << var_name(e->col);
    os << " = " << num(p.eq_rhs[r]) << "\n";
  }
  const auto le_rows = rows_of(p.le_entries, p.num_le_rows());
  for (int r = 0; r < p.num_le_rows(); ++r) {
    os << " l" << r << ":";
    for (const auto* e : le_rows[r])
      os << (e->value >= 0 ? " + " : " - ") << num(std::abs(e->value)) << " "
         << var_name(e->col);
    os << " <= " << num(p.le_rhs[r]) << "\n";
  }

  os << "Bounds\n";
  for (int j = 0; j < p.num_vars(); ++j) {
    const double lb = p.lower[j], ub = p.upper[j];
    if (lb == -kInf && ub == kInf)
      os << " " << var_name(j) << " free\n";
    else if (lb == -kInf)
      os << " -inf <= " << var_name(j) << " <= " << num(ub) << "\n";
    else if (ub == kInf)
      os << " " << num(lb) << " <= " << var_name(j) << "\n";
    else
      os << " " << num(lb) << " <= " << var_name(j) << " <= " << num(ub) << "\n";
  }
  os << "End\n";
}

}  // namespace evasim::lp

#include "evasim/detail/lp_solve_impl.hpp"
