#pragma once

// Dense two-phase primal simplex with Bland's rule. Sized for the small
// polytope oracles here (tens of variables, tens of rows); deterministic by
// construction since both entering and leaving choices are index-ordered.

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "spotree/error.hpp"

namespace spotree {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { le, ge, eq };

struct LinearProgram {
  struct Row {
    std::vector<std::pair<std::size_t, double>> terms;
    Sense sense = Sense::le;
    double rhs = 0.0;
  };

  std::vector<double> objective;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Row> rows;

  std::size_t num_vars() const { return objective.size(); }

  std::size_t add_var(double cost, double lo = 0.0, double hi = kInf) {
    objective.push_back(cost);
    lower.push_back(lo);
    upper.push_back(hi);
    return objective.size() - 1;
  }

  void add_row(std::vector<std::pair<std::size_t, double>> terms, Sense sense, double rhs) {
    rows.push_back({std::move(terms), sense, rhs});
  }
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  double objective = 0.0;
  std::vector<double> x;
};

namespace detail {

class Tableau {
 public:
  Tableau(std::size_t m, std::size_t ncols) : m_(m), n_(ncols), t_(m * (ncols + 1), 0.0), basis_(m, 0) {}

  double& at(std::size_t i, std::size_t j) { return t_[i * (n_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return t_[i * (n_ + 1) + j]; }
  double& rhs(std::size_t i) { return at(i, n_); }
  double rhs(std::size_t i) const { return at(i, n_); }
  std::vector<std::size_t>& basis() { return basis_; }
  std::size_t rows() const { return m_; }
  std::size_t cols() const { return n_; }

  void pivot(std::size_t r, std::size_t s) {
    const double inv = 1.0 / at(r, s);
    for (std::size_t j = 0; j <= n_; ++j) at(r, j) *= inv;
    at(r, s) = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = at(i, s);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= n_; ++j) at(i, j) -= f * at(r, j);
      at(i, s) = 0.0;
    }
    basis_[r] = s;
  }

  // Minimizes cost^T x over the current tableau; columns with barred[j]
  // never enter. Returns false when unbounded.
  bool optimize(const std::vector<double>& cost, const std::vector<char>& barred, double tol) {
    const std::size_t max_iter = 50 * (m_ + n_) + 1000;
    std::vector<double> reduced(n_);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
      for (std::size_t j = 0; j < n_; ++j) {
        double r = cost[j];
        for (std::size_t i = 0; i < m_; ++i) r -= cost[basis_[i]] * at(i, j);
        reduced[j] = r;
      }
      std::size_t enter = n_;
      for (std::size_t j = 0; j < n_; ++j) {
        if (!barred[j] && reduced[j] < -tol) {
          enter = j;
          break;
        }
      }
      if (enter == n_) return true;
      std::size_t leave = m_;
      double best = kInf;
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = at(i, enter);
        if (a <= tol) continue;
        const double ratio = rhs(i) / a;
        if (leave == m_ || ratio < best - 1e-12 ||
            (std::abs(ratio - best) <= 1e-12 && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave == m_) return false;
      pivot(leave, enter);
    }
    throw Error(Errc::inconsistent_oracle, "simplex iteration limit reached");
  }

 private:
  std::size_t m_;
  std::size_t n_;
  std::vector<double> t_;
  std::vector<std::size_t> basis_;
};

}  // namespace detail

inline LpResult solve_lp(const LinearProgram& lp, double tol = 1e-9) {
  const std::size_t nv = lp.num_vars();
  require(lp.lower.size() == nv && lp.upper.size() == nv, Errc::invalid_argument, "LP bound arrays malformed");

  // Map every variable onto nonnegative columns: x = offset + sign * x'
  // (or x+ - x- when free). Finite upper bounds become extra rows.
  struct ColMap {
    std::size_t pos;
    std::size_t neg;  // == npos unless free
    double offset;
    double sign;
  };
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<ColMap> map(nv);
  std::size_t ns = 0;
  std::vector<LinearProgram::Row> rows = lp.rows;
  for (std::size_t v = 0; v < nv; ++v) {
    const double lo = lp.lower[v], hi = lp.upper[v];
    if (lo > hi) return {LpStatus::infeasible, 0.0, {}};
    if (std::isfinite(lo)) {
      map[v] = {ns++, npos, lo, 1.0};
    } else if (std::isfinite(hi)) {
      map[v] = {ns++, npos, hi, -1.0};
    } else {
      map[v] = {ns, ns + 1, 0.0, 1.0};
      ns += 2;
    }
  }

  struct StdRow {
    std::vector<std::pair<std::size_t, double>> terms;
    Sense sense;
    double rhs;
  };
  std::vector<StdRow> srows;
  auto translate = [&](const LinearProgram::Row& row) {
    StdRow out{{}, row.sense, row.rhs};
    for (auto [v, a] : row.terms) {
      require(v < nv, Errc::invalid_argument, "LP row references unknown variable");
      const ColMap& cm = map[v];
      out.rhs -= a * cm.offset;
      out.terms.emplace_back(cm.pos, a * cm.sign);
      if (cm.neg != npos) out.terms.emplace_back(cm.neg, -a);
    }
    return out;
  };
  for (const auto& row : rows) srows.push_back(translate(row));
  for (std::size_t v = 0; v < nv; ++v) {
    if (std::isfinite(lp.lower[v]) && std::isfinite(lp.upper[v])) {
      srows.push_back({{{map[v].pos, 1.0}}, Sense::le, lp.upper[v] - lp.lower[v]});
    }
  }
  for (auto& r : srows) {
    if (r.rhs < 0.0) {
      r.rhs = -r.rhs;
      for (auto& t : r.terms) t.second = -t.second;
      if (r.sense == Sense::le) r.sense = Sense::ge;
      else if (r.sense == Sense::ge) r.sense = Sense::le;
    }
  }

  const std::size_t m = srows.size();
  std::size_t n_slack = 0, n_art = 0;
  for (const auto& r : srows) {
    if (r.sense != Sense::eq) ++n_slack;
    if (r.sense != Sense::le) ++n_art;
  }
  const std::size_t ncols = ns + n_slack + n_art;
  detail::Tableau tab(m, ncols);
  std::vector<char> is_art(ncols, 0);
  std::size_t next_slack = ns, next_art = ns + n_slack;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& r = srows[i];
    for (auto [c, a] : r.terms) tab.at(i, c) += a;
    tab.rhs(i) = r.rhs;
    if (r.sense == Sense::le) {
      tab.at(i, next_slack) = 1.0;
      tab.basis()[i] = next_slack++;
    } else {
      if (r.sense == Sense::ge) tab.at(i, next_slack++) = -1.0;
      tab.at(i, next_art) = 1.0;
      is_art[next_art] = 1;
      tab.basis()[i] = next_art++;
    }
  }

  std::vector<char> barred(ncols, 0);
  if (n_art > 0) {
    std::vector<double> phase1(ncols, 0.0);
    for (std::size_t j = 0; j < ncols; ++j)
      if (is_art[j]) phase1[j] = 1.0;
    tab.optimize(phase1, barred, tol);
    double infeas = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (is_art[tab.basis()[i]]) infeas += tab.rhs(i);
    if (infeas > 1e-7) return {LpStatus::infeasible, 0.0, {}};
    for (std::size_t i = 0; i < m; ++i) {
      if (!is_art[tab.basis()[i]]) continue;
      for (std::size_t j = 0; j < ncols; ++j) {
        if (!is_art[j] && std::abs(tab.at(i, j)) > tol) {
          tab.pivot(i, j);
          break;
        }
      }
    }
    for (std::size_t j = 0; j < ncols; ++j) barred[j] = is_art[j];
  }

  std::vector<double> phase2(ncols, 0.0);
  for (std::size_t v = 0; v < nv; ++v) {
    const ColMap& cm = map[v];
    phase2[cm.pos] += lp.objective[v] * cm.sign;
    if (cm.neg != npos) phase2[cm.neg] -= lp.objective[v];
  }
  if (!tab.optimize(phase2, barred, tol)) return {LpStatus::unbounded, 0.0, {}};

  std::vector<double> col(ncols, 0.0);
  for (std::size_t i = 0; i < m; ++i) col[tab.basis()[i]] = tab.rhs(i);
  LpResult res;
  res.status = LpStatus::optimal;
  res.x.resize(nv);
  double obj = 0.0;
  for (std::size_t v = 0; v < nv; ++v) {
    const ColMap& cm = map[v];
    double x = cm.offset + cm.sign * col[cm.pos];
    if (cm.neg != npos) x -= col[cm.neg];
    res.x[v] = x;
    obj += lp.objective[v] * x;
  }
  res.objective = obj;
  return res;
}

}  // namespace spotree
