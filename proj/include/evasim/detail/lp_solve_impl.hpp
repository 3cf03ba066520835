#pragma once

// Implementation of evasim::lp::solve. Included at the bottom of lp.hpp.

#include <algorithm>
#include <cmath>
#include <vector>

#include "evasim/detail/lp_presolve.hpp"
#include "evasim/detail/lp_simplex.hpp"

namespace evasim::lp::detail {

inline void Presolver::load(const LpProblem& p) {
  n_original_ = p.num_vars();
  cols_.resize(n_original_);
  for (int j = 0; j < n_original_; ++j) {
    cols_[j].cost = p.cost[j];
    cols_[j].lb = p.lower[j];
    cols_[j].ub = p.upper[j];
  }
  const int n_eq = p.num_eq_rows();
  rows_.resize(n_eq + p.num_le_rows());
  for (int r = 0; r < n_eq; ++r) {
    rows_[r].is_eq = true;
    rows_[r].rhs = p.eq_rhs[r];
  }
  for (int r = 0; r < p.num_le_rows(); ++r) {
    rows_[n_eq + r].is_eq = false;
    rows_[n_eq + r].rhs = p.le_rhs[r];
  }
  for (const auto& e : p.eq_entries)
    rows_[e.row].entries.emplace_back(e.col, e.value);
  for (const auto& e : p.le_entries)
    rows_[n_eq + e.row].entries.emplace_back(e.col, e.value);

  // Coalesce duplicate (row, col) pairs and build column->row lists.
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    auto& es = rows_[r].entries;
    std::sort(es.begin(), es.end());
    std::vector<std::pair<int, double>> merged;
    for (const auto& [col, val] : es) {
      if (!merged.empty() && merged.back().first == col)
        merged.back().second += val;
      else
        merged.emplace_back(col, val);
    }
    std::erase_if(merged, [](const auto& e) { return e.second == 0.0; });
    es = std::move(merged);
    for (const auto& [col, val] : es)
      cols_[col].rows.push_back(static_cast<int>(r));
  }
}

inline void Presolver::split_pass() {
  auto coef_of = [&](int r, int j) -> double {
    for (const auto& [c, v] : rows_[r].entries)
      if (c == j) return v;
    return 0.0;
  };

  const std::size_t n0 = cols_.size();
  for (std::size_t yj = 0; yj < n0; ++yj) {
    {
      const Col& y = cols_[yj];
      if (!y.alive || y.cost > 1e-11 || std::abs(y.lb) > kFixTol) continue;
    }
    int r1 = -1, r2 = -1, xj = -1;
    double cap = 0.0;
    bool ok = true;
    std::vector<int> extra;
    for (int r : cols_[yj].rows) {
      const Row& row = rows_[r];
      if (!row.alive) continue;
      const double yc = coef_of(r, static_cast<int>(yj));
      if (yc == 0.0) continue;
      if (!row.is_eq && row.entries.size() == 2 &&
          std::abs(yc - 1.0) <= kCoefTol) {
        const auto& other = row.entries[0].first == static_cast<int>(yj)
                                ? row.entries[1]
                                : row.entries[0];
        if (other.first != static_cast<int>(yj)) {
          if (r1 < 0 && std::abs(other.second + 1.0) <= kCoefTol &&
              std::abs(row.rhs) <= 1e-9) {
            if (xj >= 0 && xj != other.first) {
              ok = false;
              break;
            }
            r1 = r;
            xj = other.first;
            continue;
          }
          if (r2 < 0 && std::abs(other.second - 1.0) <= kCoefTol &&
              row.rhs > 1e-9) {
            if (xj >= 0 && xj != other.first) {
              ok = false;
              break;
            }
            r2 = r;
            cap = row.rhs;
            xj = other.first;
            continue;
          }
        }
      }
      if (row.is_eq || yc > 1e-12) {
        ok = false;
        break;
      }
      extra.push_back(r);
    }
    if (!ok || r1 < 0 || r2 < 0 || xj < 0 || xj == static_cast<int>(yj))
      continue;
    if (!cols_[xj].alive) continue;
    if (cols_[xj].lb > kFixTol) continue;
    if (cols_[xj].ub < cap - 1e-9) continue;
    if (cols_[yj].ub < cap / 2 - 1e-9) continue;

    const double x_cost = cols_[xj].cost;
    const double y_cost = cols_[yj].cost;

    std::vector<int> affected;
    for (int r : cols_[xj].rows)
      if (rows_[r].alive && r != r1 && r != r2 &&
          coef_of(r, xj) != 0.0)
        affected.push_back(r);
    for (int r : extra)
      if (std::find(affected.begin(), affected.end(), r) == affected.end())
        affected.push_back(r);

    const int xa = static_cast<int>(cols_.size());
    cols_.push_back({x_cost + y_cost, 0.0, cap / 2.0, true, {}});
    const int xb = static_cast<int>(cols_.size());
    cols_.push_back({x_cost - y_cost, 0.0, cap / 2.0, true, {}});

    for (int r : affected) {
      Row& row = rows_[r];
      const double ax = coef_of(r, xj);
      const double gy = coef_of(r, static_cast<int>(yj));
      std::erase_if(row.entries, [&](const auto& e) {
        return e.first == xj || e.first == static_cast<int>(yj);
      });
      const double ca = ax + gy, cb = ax - gy;
      if (ca != 0.0) {
        row.entries.emplace_back(xa, ca);
        cols_[xa].rows.push_back(r);
      }
      if (cb != 0.0) {
        row.entries.emplace_back(xb, cb);
        cols_[xb].rows.push_back(r);
      }
    }

    rows_[r1].alive = false;
    rows_[r2].alive = false;
    cols_[xj].alive = false;
    cols_[yj].alive = false;
    Action act;
    act.kind = Action::split;
    act.col = xj;
    act.col_a = xa;
    act.col_b = xb;
    act.col_b2 = static_cast<int>(yj);
    act.cap = cap;
    actions_.push_back(act);
  }
}

// Direct (presolve-off) translation of an LpProblem into the working output.
inline Presolver::Output direct_output(const LpProblem& p) {
  Presolver::Output out;
  out.cost = p.cost;
  out.lb = p.lower;
  out.ub = p.upper;
  const int n_eq = p.num_eq_rows();
  out.rows.resize(n_eq + p.num_le_rows());
  for (int r = 0; r < n_eq; ++r) {
    out.rows[r].is_eq = true;
    out.rows[r].rhs = p.eq_rhs[r];
  }
  for (int r = 0; r < p.num_le_rows(); ++r) {
    out.rows[n_eq + r].is_eq = false;
    out.rows[n_eq + r].rhs = p.le_rhs[r];
  }
  for (const auto& e : p.eq_entries)
    out.rows[e.row].entries.emplace_back(e.col, e.value);
  for (const auto& e : p.le_entries)
    out.rows[n_eq + e.row].entries.emplace_back(e.col, e.value);
  return out;
}

struct Canonicalized {
  CanonicalLp lp;
  std::vector<char> slack_marker;
};

inline Canonicalized canonicalize(const Presolver::Output& red) {
  Canonicalized c;
  CanonicalLp& lp = c.lp;
  const int n_struct = red.reduced_vars();
  lp.m = static_cast<int>(red.rows.size());
  int n_slack = 0;
  for (const auto& row : red.rows)
    if (!row.is_eq) ++n_slack;
  lp.n = n_struct + n_slack;
  lp.cost.assign(lp.n, 0.0);
  lp.lb.assign(lp.n, 0.0);
  lp.ub.assign(lp.n, std::numeric_limits<double>::infinity());
  lp.b.resize(lp.m);
  c.slack_marker.assign(lp.n, 0);

  for (int j = 0; j < n_struct; ++j) {
    lp.cost[j] = red.cost[j];
    lp.lb[j] = red.lb[j];
    lp.ub[j] = red.ub[j];
  }

  // column counts (structural entries plus one slack entry per <= row)
  std::vector<int> count(lp.n, 0);
  for (const auto& row : red.rows)
    for (const auto& [col, val] : row.entries) ++count[col];
  int slack = n_struct;
  std::vector<int> slack_of_row(lp.m, -1);
  for (int r = 0; r < lp.m; ++r)
    if (!red.rows[r].is_eq) {
      slack_of_row[r] = slack;
      c.slack_marker[slack] = 1;
      count[slack] = 1;
      ++slack;
    }

  lp.col_ptr.assign(lp.n + 1, 0);
  for (int j = 0; j < lp.n; ++j) lp.col_ptr[j + 1] = lp.col_ptr[j] + count[j];
  lp.row_idx.resize(lp.col_ptr[lp.n]);
  lp.values.resize(lp.col_ptr[lp.n]);
  std::vector<int> fill(lp.col_ptr.begin(), lp.col_ptr.end() - 1);
  for (int r = 0; r < lp.m; ++r) {
    lp.b[r] = red.rows[r].rhs;
    for (const auto& [col, val] : red.rows[r].entries) {
      lp.row_idx[fill[col]] = r;
      lp.values[fill[col]] = val;
      ++fill[col];
    }
    if (slack_of_row[r] >= 0) {
      const int s = slack_of_row[r];
      lp.row_idx[fill[s]] = r;
      lp.values[fill[s]] = 1.0;
      ++fill[s];
    }
  }
  return c;
}

inline void verify_primal(const LpProblem& p, const std::vector<double>& x,
                          double feas_tol) {
  for (int j = 0; j < p.num_vars(); ++j) {
    const double slack_tol = feas_tol * (1.0 + std::abs(x[j]));
    if (x[j] < p.lower[j] - slack_tol || x[j] > p.upper[j] + slack_tol)
      throw Error("lp::solve: solution violates bound of column " +
                  std::to_string(j));
  }
  auto check_rows = [&](const std::vector<LpProblem::Entry>& es,
                        const std::vector<double>& rhs, bool is_eq) {
    std::vector<double> act(rhs.size(), 0.0);
    std::vector<double> norm(rhs.size(), 1.0);
    for (const auto& e : es) {
      act[e.row] += e.value * x[e.col];
      norm[e.row] = std::max(norm[e.row], std::abs(e.value));
    }
    for (std::size_t r = 0; r < rhs.size(); ++r) {
      const double resid = act[r] - rhs[r];
      const double tol = feas_tol * norm[r] * (1.0 + std::abs(rhs[r]));
      if (is_eq ? std::abs(resid) > tol : resid > tol)
        throw Error("lp::solve: solution violates row " + std::to_string(r));
    }
  };
  check_rows(p.eq_entries, p.eq_rhs, true);
  check_rows(p.le_entries, p.le_rhs, false);
}

}  // namespace evasim::lp::detail

namespace evasim::lp {

inline LpSolution solve(const LpProblem& problem, const SolveOptions& options) {
  problem.validate();
  LpSolution sol;

  auto finish_optimal = [&](std::vector<double> x, long iters) {
    sol.status = Status::optimal;
    sol.x = std::move(x);
    sol.iterations = iters;
    sol.objective = 0.0;
    for (int j = 0; j < problem.num_vars(); ++j)
      sol.objective += problem.cost[j] * sol.x[j];
    detail::verify_primal(problem, sol.x, options.feas_tol);
  };

  if (options.presolve) {
    detail::Presolver pre(problem);
    detail::Presolver::Output red = pre.run();
    if (red.solved) {
      if (red.infeasible) {
        sol.status = Status::infeasible;
        return sol;
      }
      if (red.unbounded) {
        sol.status = Status::unbounded;
        return sol;
      }
    }
    if (red.reduced_vars() == 0 && red.rows.empty() && !red.solved) {
      finish_optimal(pre.postsolve({}), 0);
      return sol;
    }
    auto canon = detail::canonicalize(red);
    detail::SimplexEngine engine(canon.lp, options.iteration_limit);
    engine.slack_marker_ = std::move(canon.slack_marker);
    detail::CanonResult r = engine.run();
    switch (r.status) {
      case detail::CanonStatus::optimal:
        r.x.resize(red.reduced_vars());
        finish_optimal(pre.postsolve(r.x), r.iterations);
        return sol;
      case detail::CanonStatus::infeasible:
        sol.status = Status::infeasible;
        sol.iterations = r.iterations;
        return sol;
      case detail::CanonStatus::unbounded:
        sol.status = Status::unbounded;
        sol.iterations = r.iterations;
        return sol;
      case detail::CanonStatus::iteration_limit:
        throw Error("lp::solve: simplex iteration limit reached");
    }
  }

  detail::Presolver::Output red = detail::direct_output(problem);
  auto canon = detail::canonicalize(red);
  detail::SimplexEngine engine(canon.lp, options.iteration_limit);
  engine.slack_marker_ = std::move(canon.slack_marker);
  detail::CanonResult r = engine.run();
  switch (r.status) {
    case detail::CanonStatus::optimal: {
      r.x.resize(problem.num_vars());
      finish_optimal(std::move(r.x), r.iterations);
      return sol;
    }
    case detail::CanonStatus::infeasible:
      sol.status = Status::infeasible;
      sol.iterations = r.iterations;
      return sol;
    case detail::CanonStatus::unbounded:
      sol.status = Status::unbounded;
      sol.iterations = r.iterations;
      return sol;
    case detail::CanonStatus::iteration_limit:
    default:
      throw Error("lp::solve: simplex iteration limit reached");
  }
}

}  // namespace evasim::lp
