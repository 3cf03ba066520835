#pragma once

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "evasim/errors.hpp"

namespace evasim::lp::detail {

// Canonical form consumed by the engines: all rows are equalities over
// structural-plus-slack columns, min c'x s.t. Ax = b, lb <= x <= ub.
struct CanonicalLp {
  int m = 0;
  int n = 0;
  std::vector<int> col_ptr;  // size n+1
  std::vector<int> row_idx;
  std::vector<double> values;
  std::vector<double> cost;
  std::vector<double> lb;
  std::vector<double> ub;
  std::vector<double> b;
};

enum class CanonStatus { optimal, infeasible, unbounded, iteration_limit };

struct CanonResult {
  CanonStatus status = CanonStatus::optimal;
  std::vector<double> x;
  long iterations = 0;
};

// Bounded-variable primal revised simplex, two phases, product-form eta
// updates on top of a sparse LU of the basis. Deterministic: Dantzig pricing
// with index tie-breaks, Bland's rule engaged on stalls.
class SimplexEngine {
 public:
  SimplexEngine(const CanonicalLp& lp, long iteration_limit)
      : lp_(lp),
        m_(lp.m),
        n_(lp.n),
        total_(lp.n + lp.m),
        iter_limit_(iteration_limit) {}

  CanonResult run() {
    CanonResult result;
    if (m_ == 0) {
      result.x = trivial_no_rows(result);
      return result;
    }
    init();

    // Phase 1: minimize the artificial total.
    phase1_ = true;
    const CanonStatus p1 = iterate();
    if (p1 == CanonStatus::iteration_limit) {
      result.status = p1;
      result.iterations = iterations_;
      return result;
    }
    double infeas = 0.0;
    for (int j = n_; j < total_; ++j) infeas += x_[j];
    const double b_scale = 1.0 + max_abs(lp_.b);
    if (infeas > 1e-7 * b_scale) {
      result.status = CanonStatus::infeasible;
      result.iterations = iterations_;
      return result;
    }
    // Pin artificials for phase 2.
    for (int j = n_; j < total_; ++j) {
      ub_[j] = 0.0;
      if (state_[j] != VarState::Basic) {
        state_[j] = VarState::AtLower;
        x_[j] = 0.0;
      }
    }
    phase1_ = false;
    const CanonStatus p2 = iterate();
    result.status = p2 == CanonStatus::optimal ? CanonStatus::optimal : p2;
    result.iterations = iterations_;
    result.x.assign(x_.begin(), x_.begin() + n_);
    return result;
  }

 private:
  enum class VarState : unsigned char { AtLower, AtUpper, FreeZero, Basic };

  static double max_abs(const std::vector<double>& v) {
    double r = 0.0;
    for (double e : v) r = std::max(r, std::abs(e));
    return r;
  }

  std::vector<double> trivial_no_rows(CanonResult& result) {
    std::vector<double> x(n_, 0.0);
    for (int j = 0; j < n_; ++j) {
      if (lp_.cost[j] > 0.0) {
        if (lp_.lb[j] == -kInfD) {
          result.status = CanonStatus::unbounded;
          return x;
        }
        x[j] = lp_.lb[j];
      } else if (lp_.cost[j] < 0.0) {
        if (lp_.ub[j] == kInfD) {
          result.status = CanonStatus::unbounded;
          return x;
        }
        x[j] = lp_.ub[j];
      } else {
        x[j] = lp_.lb[j] != -kInfD ? lp_.lb[j] : std::min(0.0, lp_.ub[j]);
      }
    }
    return x;
  }

  void init() {
    lb_ = lp_.lb;
    ub_ = lp_.ub;
    lb_.resize(total_, 0.0);
    ub_.resize(total_, kInfD);
    x_.assign(total_, 0.0);
    state_.assign(total_, VarState::AtLower);
    art_sign_.assign(m_, 1.0);
    basic_.assign(m_, -1);
    in_basis_.assign(total_, -1);

    for (int j = 0; j < n_; ++j) {
      if (lb_[j] != -kInfD) {
        state_[j] = VarState::AtLower;
        x_[j] = lb_[j];
      } else if (ub_[j] != kInfD) {
        state_[j] = VarState::AtUpper;
        x_[j] = ub_[j];
      } else {
        state_[j] = VarState::FreeZero;
        x_[j] = 0.0;
      }
    }

    // Residual of each row at the starting point decides its logical: a
    // nonnegative-residual slack row starts feasible on its own slack, every
    // other row gets a signed artificial carrying the residual.
    std::vector<double> resid = lp_.b;
    for (int j = 0; j < n_; ++j) {
      if (x_[j] == 0.0) continue;
      for (int k = lp_.col_ptr[j]; k < lp_.col_ptr[j + 1]; ++k)
        resid[lp_.row_idx[k]] -= lp_.values[k] * x_[j];
    }
    slack_col_of_row_.assign(m_, -1);
    for (int j = 0; j < n_; ++j) {
      // Unit slack columns are detected structurally: exactly one entry, +1,
      // zero cost, bounds [0, inf). The canonicalizer creates them that way.
      if (lp_.col_ptr[j + 1] - lp_.col_ptr[j] == 1 && lp_.cost[j] == 0.0 &&
          lp_.values[lp_.col_ptr[j]] == 1.0 && lp_.lb[j] == 0.0 &&
          lp_.ub[j] == kInfD && slack_marker_.size() > static_cast<size_t>(j) &&
          slack_marker_[j])
        slack_col_of_row_[lp_.row_idx[lp_.col_ptr[j]]] = j;
    }
    for (int i = 0; i < m_; ++i) {
      const int s = slack_col_of_row_[i];
      if (s >= 0 && resid[i] >= 0.0) {
        basic_[i] = s;
        in_basis_[s] = i;
        state_[s] = VarState::Basic;
        x_[s] = resid[i];
        // artificial pinned
        const int a = n_ + i;
        ub_[a] = 0.0;
        x_[a] = 0.0;
      } else {
        const int a = n_ + i;
        art_sign_[i] = resid[i] >= 0.0 ? 1.0 : -1.0;
        basic_[i] = a;
        in_basis_[a] = i;
        state_[a] = VarState::Basic;
        x_[a] = std::abs(resid[i]);
      }
    }
    refactorize();
  }

  template <typename Fn>
  void for_each_entry(int col, Fn&& fn) const {
    if (col < n_) {
      for (int k = lp_.col_ptr[col]; k < lp_.col_ptr[col + 1]; ++k)
        fn(lp_.row_idx[k], lp_.values[k]);
    } else {
      fn(col - n_, art_sign_[col - n_]);
    }
  }

  double col_dot(int col, const Eigen::VectorXd& y) const {
    double s = 0.0;
    for_each_entry(col, [&](int i, double v) { s += v * y[i]; });
    return s;
  }

  double current_cost(int j) const {
    if (phase1_) return j >= n_ ? 1.0 : 0.0;
    return j < n_ ? lp_.cost[j] : 0.0;
  }

  void refactorize() {
    Eigen::SparseMatrix<double> B(m_, m_);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(lp_.values.size());
    for (int i = 0; i < m_; ++i)
      for_each_entry(basic_[i], [&](int r, double v) {
        trips.emplace_back(r, i, v);
      });
    B.setFromTriplets(trips.begin(), trips.end());
    lu_.compute(B);
    if (lu_.info() != Eigen::Success)
      throw Error("simplex: basis factorization failed");
    etas_.clear();
    recompute_basic_values();
  }

  void recompute_basic_values() {
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(lp_.b.data(), m_);
    for (int j = 0; j < total_; ++j) {
      if (state_[j] == VarState::Basic || x_[j] == 0.0) continue;
      const double v = x_[j];
      for_each_entry(j, [&](int i, double a) { r[i] -= a * v; });
    }
    ftran(r);
    for (int i = 0; i < m_; ++i) x_[basic_[i]] = r[i];
  }

  struct Eta {
    int row;
    double pivot;
    std::vector<std::pair<int, double>> entries;  // excludes the pivot row
  };

  void ftran(Eigen::VectorXd& v) {
    v = lu_.solve(v);
    for (const Eta& e : etas_) {
      const double t = v[e.row] / e.pivot;
      if (t != 0.0)
        for (const auto& [i, a] : e.entries) v[i] -= a * t;
      v[e.row] = t;
    }
  }

  void btran(Eigen::VectorXd& y) {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      double dot = 0.0;
      for (const auto& [i, a] : it->entries) dot += a * y[i];
      y[it->row] = (y[it->row] - dot) / it->pivot;
    }
    y = lu_.adjoint().solve(y);
  }

  CanonStatus iterate() {
    long stall = 0;
    bool bland = false;
    double last_obj = objective();
    Eigen::VectorXd y(m_), w(m_);

    while (true) {
      if (++iterations_ > iter_limit_) return CanonStatus::iteration_limit;

      // duals
      for (int i = 0; i < m_; ++i) y[i] = current_cost(basic_[i]);
      btran(y);
      const double dtol = 1e-8 * (1.0 + y.cwiseAbs().maxCoeff());

      // pricing
      int enter = -1, dir = 0;
      double best = dtol;
      for (int j = 0; j < total_; ++j) {
        const VarState st = state_[j];
        if (st == VarState::Basic) continue;
        if (ub_[j] - lb_[j] <= 1e-12 && st != VarState::FreeZero) continue;
        const double d = current_cost(j) - col_dot(j, y);
        int cand_dir = 0;
        if (st == VarState::AtLower && d < -best)
          cand_dir = 1;
        else if (st == VarState::AtUpper && d > best)
          cand_dir = -1;
        else if (st == VarState::FreeZero && std::abs(d) > best)
          cand_dir = d < 0 ? 1 : -1;
        if (cand_dir != 0) {
          enter = j;
          dir = cand_dir;
          best = std::abs(d);
          if (bland) break;  // first eligible (smallest index)
        }
      }
      if (enter < 0) return CanonStatus::optimal;
      const double d_enter = current_cost(enter) - col_dot(enter, y);

      // entering column through the basis
      w.setZero();
      for_each_entry(enter, [&](int i, double v) { w[i] = v; });
      ftran(w);

      // ratio test, two passes for pivot stability
      const double range =
          (lb_[enter] == -kInfD || ub_[enter] == kInfD)
              ? kInfD
              : ub_[enter] - lb_[enter];
      double t_min = range;
      constexpr double piv_tol = 1e-9;
      for (int i = 0; i < m_; ++i) {
        const double wi = dir * w[i];
        if (std::abs(wi) <= piv_tol) continue;
        const int bj = basic_[i];
        double ratio;
        if (wi > 0) {
          if (lb_[bj] == -kInfD) continue;
          ratio = (x_[bj] - lb_[bj]) / wi;
        } else {
          if (ub_[bj] == kInfD) continue;
          ratio = (x_[bj] - ub_[bj]) / wi;
        }
        if (ratio < 0.0) ratio = 0.0;
        if (ratio < t_min) t_min = ratio;
      }

      if (t_min == kInfD) return CanonStatus::unbounded;

      int leave_pos = -1;
      if (t_min < range) {
        const double accept = t_min + 1e-9 * (1.0 + t_min);
        double best_piv = 0.0;
        for (int i = 0; i < m_; ++i) {
          const double wi = dir * w[i];
          if (std::abs(wi) <= piv_tol) continue;
          const int bj = basic_[i];
          double ratio;
          if (wi > 0) {
            if (lb_[bj] == -kInfD) continue;
            ratio = (x_[bj] - lb_[bj]) / wi;
          } else {
            if (ub_[bj] == kInfD) continue;
            ratio = (x_[bj] - ub_[bj]) / wi;
          }
          if (ratio < 0.0) ratio = 0.0;
          if (ratio > accept) continue;
          if (bland) {
            if (leave_pos < 0 || basic_[i] < basic_[leave_pos]) leave_pos = i;
          } else if (std::abs(w[i]) > best_piv ||
                     (std::abs(w[i]) == best_piv && leave_pos >= 0 &&
                      basic_[i] < basic_[leave_pos])) {
            best_piv = std::abs(w[i]);
            leave_pos = i;
          }
        }
        if (leave_pos < 0) return CanonStatus::unbounded;  // defensive
      }

      // apply the step
      const double step = dir * t_min;
      if (t_min > 0.0) {
        for (int i = 0; i < m_; ++i)
          if (w[i] != 0.0) x_[basic_[i]] -= step * w[i];
      }

      if (leave_pos < 0) {
        // bound flip, no basis change
        x_[enter] = dir > 0 ? ub_[enter] : lb_[enter];
        state_[enter] = dir > 0 ? VarState::AtUpper : VarState::AtLower;
      } else {
        const int leave = basic_[leave_pos];
        const double wl = dir * w[leave_pos];
        state_[leave] = wl > 0 ? VarState::AtLower : VarState::AtUpper;
        x_[leave] = wl > 0 ? lb_[leave] : ub_[leave];
        in_basis_[leave] = -1;

        x_[enter] = (state_[enter] == VarState::AtLower
                         ? lb_[enter]
                         : state_[enter] == VarState::AtUpper ? ub_[enter] : 0.0) +
                    step;
        state_[enter] = VarState::Basic;
        basic_[leave_pos] = enter;
        in_basis_[enter] = leave_pos;

        Eta eta;
        eta.row = leave_pos;
        eta.pivot = w[leave_pos];
        for (int i = 0; i < m_; ++i)
          if (i != leave_pos && w[i] != 0.0) eta.entries.emplace_back(i, w[i]);
        etas_.push_back(std::move(eta));
        if (static_cast<int>(etas_.size()) >= 100) refactorize();
      }

      // stall bookkeeping
      const double obj = last_obj + d_enter * step;
      if (obj < last_obj - 1e-10 * (1.0 + std::abs(last_obj))) {
        stall = 0;
        if (bland) bland = false;
      } else if (++stall > 2000 && !bland) {
        bland = true;
        stall = 0;
      }
      last_obj = obj;
    }
  }

  double objective() const {
    double z = 0.0;
    for (int j = 0; j < total_; ++j) z += current_cost(j) * x_[j];
    return z;
  }

 public:
  // Marks which canonical columns are row slacks; set by the canonicalizer
  // before run() so the crash basis can use them.
  std::vector<char> slack_marker_;

 private:
  static constexpr double kInfD = std::numeric_limits<double>::infinity();

  const CanonicalLp& lp_;
  const int m_, n_, total_;
  const long iter_limit_;
  bool phase1_ = true;
  long iterations_ = 0;

  std::vector<double> lb_, ub_, x_;
  std::vector<VarState> state_;
  std::vector<double> art_sign_;
  std::vector<int> basic_;
  std::vector<int> in_basis_;
  std::vector<int> slack_col_of_row_;

  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  std::vector<Eta> etas_;
};

}  // namespace evasim::lp::detail
