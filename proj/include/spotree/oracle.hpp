#pragma once

// Decision oracles: w*(c) and z*(c) = min_{w in S} c^T w for a fixed region S.
//
// Every oracle is immutable after construction and its solve calls allocate
// their own scratch, so one instance may be shared by concurrent workers.
// Ties between optimal decisions always resolve to the lowest index.

#include <algorithm>
#include <concepts>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spotree/core.hpp"
#include "spotree/lp.hpp"

namespace spotree {

inline constexpr double kFeasibilityTol = 1e-8;

// Linear (optionally integral) description of S over w, used when an oracle
// region has to be embedded into a larger MILP.
struct LinearRegion {
  struct Row {
    std::vector<double> coef;
    Sense sense = Sense::le;
    double rhs = 0.0;
  };
  std::size_t dim = 0;
  std::vector<Row> rows;
  std::vector<double> lower;
  std::vector<double> upper;
  bool integer = false;
};

template <class O>
concept DecisionOracle = requires(const O& o, std::span<const double> c) {
  { o.decision_dim() } -> std::convertible_to<std::size_t>;
  { o.solve_min(c) } -> std::same_as<Decision>;
  { o.optimal_value(c) } -> std::convertible_to<double>;
  { o.is_feasible(c) } -> std::convertible_to<bool>;
  { o.region() } -> std::same_as<LinearRegion>;
};

namespace detail {

inline bool region_contains(const LinearRegion& s, std::span<const double> w, double tol) {
  if (w.size() != s.dim) return false;
  for (std::size_t k = 0; k < s.dim; ++k) {
    if (w[k] < s.lower[k] - tol || w[k] > s.upper[k] + tol) return false;
    if (s.integer && std::abs(w[k] - std::round(w[k])) > tol) return false;
  }
  for (const auto& row : s.rows) {
    const double lhs = dot(row.coef, w);
    if (row.sense == Sense::le && lhs > row.rhs + tol) return false;
    if (row.sense == Sense::ge && lhs < row.rhs - tol) return false;
    if (row.sense == Sense::eq && std::abs(lhs - row.rhs) > tol) return false;
  }
  return true;
}

}  // namespace detail

// Choose exactly one of d alternatives (e.g. d parallel roads between two
// nodes). S = {e_1, ..., e_d}.
class ChoiceOracle {
 public:
  explicit ChoiceOracle(std::size_t d) : d_(d) {
    require(d >= 1, Errc::invalid_argument, "choice oracle needs at least one alternative");
  }

  std::size_t decision_dim() const { return d_; }

  Decision solve_min(std::span<const double> c) const {
    require_dims(c.size(), d_, "ChoiceOracle::solve_min");
    std::size_t best = 0;
    for (std::size_t k = 1; k < d_; ++k)
      if (c[k] < c[best]) best = k;
    Decision out{std::vector<double>(d_, 0.0), c[best]};
    out.w[best] = 1.0;
    return out;
  }

  double optimal_value(std::span<const double> c) const {
    require_dims(c.size(), d_, "ChoiceOracle::optimal_value");
    return *std::min_element(c.begin(), c.end());
  }

  bool is_feasible(std::span<const double> w) const { return detail::region_contains(region(), w, kFeasibilityTol); }

  LinearRegion region() const {
    LinearRegion s;
    s.dim = d_;
    s.rows.push_back({std::vector<double>(d_, 1.0), Sense::eq, 1.0});
    s.lower.assign(d_, 0.0);
    s.upper.assign(d_, 1.0);
    s.integer = true;
    return s;
  }

 private:
  std::size_t d_;
};

// Shortest southwest-to-northeast path on a width x height grid of nodes with
// edges directed east and north.
//
// Edge numbering: nodes are visited row-major from the south-west corner
// (node = row * width + col); each node contributes its east edge (if col <
// width-1) and then its north edge (if row < height-1). A 4x4 grid has 24
// edges.
class GridShortestPathOracle {
 public:
  struct Edge {
    std::size_t from;
    std::size_t to;
  };

  explicit GridShortestPathOracle(std::size_t width = 4, std::size_t height = 4) : width_(width), height_(height) {
    require(width >= 1 && height >= 1 && width * height >= 2, Errc::invalid_argument,
            "grid needs at least two nodes");
    east_.assign(width * height, npos);
    north_.assign(width * height, npos);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t col = 0; col < width; ++col) {
        const std::size_t v = r * width + col;
        if (col + 1 < width) {
          east_[v] = edges_.size();
          edges_.push_back({v, v + 1});
        }
        if (r + 1 < height) {
          north_[v] = edges_.size();
          edges_.push_back({v, v + width});
        }
      }
    }
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t decision_dim() const { return edges_.size(); }
  std::size_t path_length() const { return (width_ - 1) + (height_ - 1); }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t east_edge(std::size_t node) const { return east_[node]; }
  std::size_t north_edge(std::size_t node) const { return north_[node]; }

  Decision solve_min(std::span<const double> c) const {
    require_dims(c.size(), decision_dim(), "GridShortestPathOracle::solve_min");
    const std::size_t nn = width_ * height_;
    std::vector<double> dist(nn, kInf);
    std::vector<std::size_t> via(nn, npos);
    dist[0] = 0.0;
    // Node ids are a topological order: every edge goes to a larger id.
    for (std::size_t v = 1; v < nn; ++v) {
      const std::size_t r = v / width_, col = v % width_;
      std::size_t e_west = col > 0 ? east_[v - 1] : npos;
      std::size_t e_south = r > 0 ? north_[v - width_] : npos;
      // Try the lower-indexed incoming edge first so it wins exact ties.
      std::size_t first = e_west, second = e_south;
      if (first == npos || (second != npos && second < first)) std::swap(first, second);
      for (std::size_t e : {first, second}) {
        if (e == npos) continue;
        const double cand = dist[edges_[e].from] + c[e];
        if (cand < dist[v]) {
          dist[v] = cand;
          via[v] = e;
        }
      }
    }
    Decision out{std::vector<double>(decision_dim(), 0.0), 0.0};
    for (std::size_t v = nn - 1; v != 0;) {
      const std::size_t e = via[v];
      out.w[e] = 1.0;
      v = edges_[e].from;
    }
    out.objective_value = dot(c, out.w);
    return out;
  }

  double optimal_value(std::span<const double> c) const { return solve_min(c).objective_value; }

  bool is_feasible(std::span<const double> w) const { return detail::region_contains(region(), w, kFeasibilityTol); }

  // Unit-flow conservation from node 0 to the last node; the constraint
  // matrix is a network matrix, so integral vertices are exactly the paths.
  LinearRegion region() const {
    LinearRegion s;
    const std::size_t nn = width_ * height_, m = decision_dim();
    s.dim = m;
    for (std::size_t v = 0; v < nn; ++v) {
      LinearRegion::Row row{std::vector<double>(m, 0.0), Sense::eq, 0.0};
      for (std::size_t e = 0; e < m; ++e) {
        if (edges_[e].from == v) row.coef[e] += 1.0;
        if (edges_[e].to == v) row.coef[e] -= 1.0;
      }
      if (v == 0) row.rhs = 1.0;
      if (v == nn - 1) row.rhs = -1.0;
      s.rows.push_back(std::move(row));
    }
    s.lower.assign(m, 0.0);
    s.upper.assign(m, 1.0);
    s.integer = true;
    return s;
  }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t width_;
  std::size_t height_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> east_;
  std::vector<std::size_t> north_;
};

// One side constraint a^T w <= b of a polytope oracle.
struct HalfSpace {
  std::vector<double> a;
  double b = 0.0;
};

// S = { w >= 0, sum(w) = 1, a_m^T w <= b_m }. Solved with the dense simplex.
class PolytopeLpOracle {
 public:
  PolytopeLpOracle(std::size_t d, std::vector<HalfSpace> constraints) : d_(d), constraints_(std::move(constraints)) {
    require(d >= 1, Errc::invalid_argument, "polytope oracle needs d >= 1");
    for (const auto& h : constraints_) require_dims(h.a.size(), d_, "polytope constraint");
    std::vector<double> centre(d_, 1.0 / static_cast<double>(d_));
    require(is_feasible(centre), Errc::infeasible, "uniform point e/d violates the constraint set");
  }

  std::size_t decision_dim() const { return d_; }
  const std::vector<HalfSpace>& constraints() const { return constraints_; }

  Decision solve_min(std::span<const double> c) const {
    require_dims(c.size(), d_, "PolytopeLpOracle::solve_min");
    LinearProgram lp;
    for (std::size_t k = 0; k < d_; ++k) lp.add_var(c[k]);
    std::vector<std::pair<std::size_t, double>> simplex_row;
    for (std::size_t k = 0; k < d_; ++k) simplex_row.emplace_back(k, 1.0);
    lp.add_row(std::move(simplex_row), Sense::eq, 1.0);
    for (const auto& h : constraints_) {
      std::vector<std::pair<std::size_t, double>> row;
      for (std::size_t k = 0; k < d_; ++k)
        if (h.a[k] != 0.0) row.emplace_back(k, h.a[k]);
      lp.add_row(std::move(row), Sense::le, h.b);
    }
    LpResult res = solve_lp(lp);
    if (res.status != LpStatus::optimal) throw Error(Errc::infeasible, "polytope LP did not solve to optimality");
    for (double& v : res.x)
      if (v < 0.0 && v > -kFeasibilityTol) v = 0.0;
    return {std::move(res.x), res.objective};
  }

  // Maximization form used for click-probability vectors: argmax p^T w.
  Decision solve_max(std::span<const double> p) const {
    std::vector<double> neg(p.begin(), p.end());
    for (double& v : neg) v = -v;
    Decision dec = solve_min(neg);
    dec.objective_value = -dec.objective_value;
    return dec;
  }

  double optimal_value(std::span<const double> c) const { return solve_min(c).objective_value; }

  bool is_feasible(std::span<const double> w) const { return detail::region_contains(region(), w, kFeasibilityTol); }

  LinearRegion region() const {
    LinearRegion s;
    s.dim = d_;
    s.rows.push_back({std::vector<double>(d_, 1.0), Sense::eq, 1.0});
    for (const auto& h : constraints_) s.rows.push_back({h.a, Sense::le, h.b});
    s.lower.assign(d_, 0.0);
    s.upper.assign(d_, kInf);
    s.integer = false;
    return s;
  }

 private:
  std::size_t d_;
  std::vector<HalfSpace> constraints_;
};

// Big-M constants bounding c_i^T w over S: M1 >= c_i^T w and M2 >= -c_i^T w.
struct ValueBounds {
  double m1 = 0.0;
  double m2 = 0.0;
};

template <DecisionOracle O>
ValueBounds value_bounds(const Dataset& data, const O& oracle) {
  require(!data.empty(), Errc::empty_input, "value_bounds of an empty dataset");
  ValueBounds vb;
  std::vector<double> neg(data.decision_dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto c = data.costs(i);
    for (std::size_t k = 0; k < c.size(); ++k) neg[k] = -c[k];
    vb.m1 = std::max(vb.m1, -oracle.optimal_value(neg));
    vb.m2 = std::max(vb.m2, -oracle.optimal_value(c));
  }
  require(std::isfinite(vb.m1) && std::isfinite(vb.m2), Errc::invalid_argument,
          "value bounds are not finite (unbounded region?)");
  return vb;
}

// Constraint file: the dimension d, then one line "a_1 ... a_d b" per
// constraint. Blank lines and '#' comments are ignored.
inline std::vector<HalfSpace> parse_constraints(std::istream& in, std::size_t* dim_out = nullptr) {
  std::string line;
  std::size_t d = 0;
  bool have_dim = false;
  std::vector<HalfSpace> out;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (!ls.eof()) throw Error(Errc::parse_error, "constraints line " + std::to_string(lineno) + ": bad number");
    if (vals.empty()) continue;
    if (!have_dim) {
      require(vals.size() == 1 && vals[0] >= 1 && vals[0] == std::floor(vals[0]), Errc::parse_error,
              "constraints file must start with the dimension");
      d = static_cast<std::size_t>(vals[0]);
      have_dim = true;
      continue;
    }
    require(vals.size() == d + 1, Errc::parse_error,
            "constraints line " + std::to_string(lineno) + ": expected " + std::to_string(d + 1) + " values");
    out.push_back({std::vector<double>(vals.begin(), vals.end() - 1), vals.back()});
  }
  require(have_dim, Errc::parse_error, "constraints file has no dimension line");
  if (dim_out) *dim_out = d;
  return out;
}

inline void write_constraints(std::ostream& out, std::size_t d, const std::vector<HalfSpace>& cons) {
  out.precision(17);
  out << d << '\n';
  for (const auto& h : cons) {
    for (double a : h.a) out << a << ' ';
    out << h.b << '\n';
  }
}

inline PolytopeLpOracle load_polytope_oracle(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), Errc::io_error, "cannot open constraints file " + path);
  std::size_t d = 0;
  auto cons = parse_constraints(in, &d);
  return PolytopeLpOracle(d, std::move(cons));
}

}  // namespace spotree
