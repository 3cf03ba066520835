#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "evasim/errors.hpp"

namespace evasim::lp {
struct LpProblem;
}

namespace evasim::lp::detail {

// Presolve working on an editable row/column representation. Reductions:
//   - fixed columns substituted into rows,
//   - empty and singleton rows folded into bounds,
//   - dominated-regulation column split: a column y with nonpositive cost,
//     whose only binding structure is the symmetric-headroom pair
//     {y - x <= 0, x + y <= cap} plus <=-rows where raising y only relaxes
//     the row, is eliminated by splitting x into two half-range segments.
// Each reduction records a postsolve action; postsolve runs them in reverse.
class Presolver {
 public:
  struct Output {
    bool solved = false;          // decided without an engine call
    bool infeasible = false;
    bool unbounded = false;
    // reduced problem in compact column space
    std::vector<double> cost, lb, ub;
    struct Row {
      bool is_eq;
      double rhs;
      std::vector<std::pair<int, double>> entries;
    };
    std::vector<Row> rows;
    int reduced_vars() const { return static_cast<int>(cost.size()); }
  };

  explicit Presolver(const LpProblem& p) { load(p); }

  Output run() {
    Output out;
    if (!reduce_loop()) {
      out.infeasible = infeasible_;
      out.unbounded = unbounded_;
      out.solved = true;
      return out;
    }
    split_pass();
    if (!reduce_loop() || !drop_empty_columns()) {
      out.infeasible = infeasible_;
      out.unbounded = unbounded_;
      out.solved = true;
      return out;
    }
    emit(out);
    return out;
  }

  // Map a reduced solution back to the original column space.
  std::vector<double> postsolve(const std::vector<double>& reduced) const {
    std::vector<double> full(cols_.size(), 0.0);
    for (std::size_t j = 0; j < cols_.size(); ++j)
      if (compact_index_[j] >= 0) full[j] = reduced[compact_index_[j]];
    for (auto it = actions_.rbegin(); it != actions_.rend(); ++it) {
      const Action& a = *it;
      switch (a.kind) {
        case Action::fix_var:
          full[a.col] = a.value;
          break;
        case Action::split: {
          const double xa = full[a.col_a], xb = full[a.col_b];
          double x = xa + xb;
          double y = std::max(0.0, xa - xb);
          y = std::min(y, std::min(x, a.cap - x) + 1e-12);
          y = std::max(y, 0.0);
          full[a.col] = x;   // original x
          full[a.col_b2] = y;  // original y
          break;
        }
      }
    }
    full.resize(n_original_);
    return full;
  }

  int original_vars() const { return n_original_; }

 private:
  struct Col {
    double cost = 0.0, lb = 0.0, ub = 0.0;
    bool alive = true;
    std::vector<int> rows;  // row ids that may contain this column
  };
  struct Row {
    bool is_eq = false;
    double rhs = 0.0;
    bool alive = true;
    std::vector<std::pair<int, double>> entries;
  };
  struct Action {
    enum Kind { fix_var, split } kind;
    int col = -1;       // fix_var: column; split: original x
    double value = 0.0;  // fix_var value
    int col_a = -1, col_b = -1, col_b2 = -1;  // split: xa, xb, original y
    double cap = 0.0;
  };

  static constexpr double kInfD = std::numeric_limits<double>::infinity();
  static constexpr double kFixTol = 1e-11;
  static constexpr double kCoefTol = 1e-9;

  void load(const LpProblem& p);

  void fix_column(int j, double v) {
    Col& c = cols_[j];
    c.alive = false;
    actions_.push_back({Action::fix_var, j, v, -1, -1, -1, 0.0});
    for (int r : c.rows) {
      Row& row = rows_[r];
      if (!row.alive) continue;
      for (auto it = row.entries.begin(); it != row.entries.end(); ++it) {
        if (it->first == j) {
          row.rhs -= it->second * v;
          row.entries.erase(it);
          break;
        }
      }
    }
    c.rows.clear();
  }

  // Returns false on detected infeasibility.
  bool reduce_loop() {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t j = 0; j < cols_.size(); ++j) {
        Col& c = cols_[j];
        if (!c.alive) continue;
        if (c.lb > c.ub + 1e-9) {
          infeasible_ = true;
          return false;
        }
        if (c.ub - c.lb <= kFixTol) {
          fix_column(static_cast<int>(j), c.lb);
          changed = true;
        }
      }
      for (std::size_t r = 0; r < rows_.size(); ++r) {
        Row& row = rows_[r];
        if (!row.alive) continue;
        if (row.entries.empty()) {
          const double tol = 1e-7 * (1.0 + std::abs(row.rhs));
          if (row.is_eq ? std::abs(row.rhs) > tol : row.rhs < -tol) {
            infeasible_ = true;
            return false;
          }
          row.alive = false;
          changed = true;
          continue;
        }
        if (row.entries.size() == 1) {
          const auto [j, a] = row.entries.front();
          Col& c = cols_[j];
          if (std::abs(a) < 1e-12) {
            row.entries.clear();
            continue;
          }
          if (row.is_eq) {
            const double v = row.rhs / a;
            if (v < c.lb - 1e-7 || v > c.ub + 1e-7) {
              infeasible_ = true;
              return false;
            }
            c.lb = c.ub = std::clamp(v, c.lb, c.ub);
          } else if (a > 0) {
            c.ub = std::min(c.ub, row.rhs / a);
          } else {
            c.lb = std::max(c.lb, row.rhs / a);
          }
          row.alive = false;
          changed = true;
        }
      }
    }
    return true;
  }

  // Detect and apply the headroom-column split.
  void split_pass();

  bool drop_empty_columns() {
    for (std::size_t j = 0; j < cols_.size(); ++j) {
      Col& c = cols_[j];
      if (!c.alive) continue;
      bool empty = true;
      for (int r : c.rows)
        if (rows_[r].alive && row_has(r, static_cast<int>(j))) {
          empty = false;
          break;
        }
      if (!empty) continue;
      double v;
      if (c.cost > 0.0) {
        if (c.lb == -kInfD) {
          unbounded_ = true;
          return false;
        }
        v = c.lb;
      } else if (c.cost < 0.0) {
        if (c.ub == kInfD) {
          unbounded_ = true;
          return false;
        }
        v = c.ub;
      } else {
        v = c.lb != -kInfD ? c.lb : std::min(0.0, c.ub);
      }
      fix_column(static_cast<int>(j), v);
    }
    return true;
  }

  bool row_has(int r, int j) const {
    for (const auto& [col, val] : rows_[r].entries)
      if (col == j) return true;
    return false;
  }

  void emit(Output& out) {
    compact_index_.assign(cols_.size(), -1);
    for (std::size_t j = 0; j < cols_.size(); ++j) {
      if (!cols_[j].alive) continue;
      compact_index_[j] = static_cast<int>(out.cost.size());
      out.cost.push_back(cols_[j].cost);
      out.lb.push_back(cols_[j].lb);
      out.ub.push_back(cols_[j].ub);
    }
    for (const Row& row : rows_) {
      if (!row.alive) continue;
      Output::Row r;
      r.is_eq = row.is_eq;
      r.rhs = row.rhs;
      for (const auto& [col, val] : row.entries)
        if (cols_[col].alive && std::abs(val) > 0.0)
          r.entries.emplace_back(compact_index_[col], val);
      out.rows.push_back(std::move(r));
    }
  }

  std::vector<Col> cols_;
  std::vector<Row> rows_;
  std::vector<Action> actions_;
  std::vector<int> compact_index_;
  int n_original_ = 0;
  bool infeasible_ = false;
  bool unbounded_ = false;
};

}  // namespace evasim::lp::detail
