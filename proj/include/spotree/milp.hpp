#pragma once

// Solver-neutral mixed-integer linear model with an MPS writer/reader,
// a constraint checker and plain-text solution files.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>

#include "spotree/error.hpp"
#include "spotree/lp.hpp"

namespace spotree {

enum class VarKind { continuous, binary, integer };

struct MilpVariable {
  std::string name;
  VarKind kind = VarKind::continuous;
  double lower = 0.0;
  double upper = kInf;
  double cost = 0.0;
};

struct MilpConstraint {
  std::string name;
  std::vector<std::pair<std::size_t, double>> terms;  // sorted by variable index
  Sense sense = Sense::le;
  double rhs = 0.0;
};

class MilpModel {
 public:
  std::string name = "model";
  std::vector<MilpVariable> variables;
  std::vector<MilpConstraint> constraints;
  double objective_offset = 0.0;

  std::size_t add_variable(std::string var_name, VarKind kind, double lower, double upper, double cost = 0.0) {
    require(!index_.contains(var_name), Errc::invalid_argument, "duplicate variable " + var_name);
    if (kind == VarKind::binary) {
      lower = 0.0;
      upper = 1.0;
    }
    index_.emplace(var_name, variables.size());
    variables.push_back({std::move(var_name), kind, lower, upper, cost});
    return variables.size() - 1;
  }

  // Zero coefficients are dropped and repeated variables merged.
  void add_constraint(std::string con_name, std::vector<std::pair<std::size_t, double>> terms, Sense sense,
                      double rhs) {
    std::map<std::size_t, double> merged;
    for (auto [v, a] : terms) {
      require(v < variables.size(), Errc::invalid_argument, "constraint " + con_name + " references unknown variable");
      merged[v] += a;
    }
    MilpConstraint c{std::move(con_name), {}, sense, rhs};
    for (auto [v, a] : merged)
      if (a != 0.0) c.terms.emplace_back(v, a);
    constraints.push_back(std::move(c));
  }

  std::size_t index_of(const std::string& var_name) const {
    auto it = index_.find(var_name);
    require(it != index_.end(), Errc::invalid_argument, "unknown variable " + var_name);
    return it->second;
  }
  bool has_variable(const std::string& var_name) const { return index_.contains(var_name); }

  void rebuild_index() {
    index_.clear();
    for (std::size_t v = 0; v < variables.size(); ++v) index_.emplace(variables[v].name, v);
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

inline double objective_value(const MilpModel& m, std::span<const double> values) {
  require_dims(values.size(), m.variables.size(), "objective_value");
  double s = m.objective_offset;
  for (std::size_t v = 0; v < values.size(); ++v) s += m.variables[v].cost * values[v];
  return s;
}

// Names of violated constraints, followed by "bound:<var>" and
// "integrality:<var>" entries. Empty means feasible within tol.
inline std::vector<std::string> check_feasibility(const MilpModel& m, std::span<const double> values,
                                                  double tol = 1e-6) {
  require_dims(values.size(), m.variables.size(), "check_feasibility");
  std::vector<std::string> bad;
  for (const auto& c : m.constraints) {
    double lhs = 0.0;
    for (auto [v, a] : c.terms) lhs += a * values[v];
    const double scale = std::max(1.0, std::abs(c.rhs));
    const bool ok = c.sense == Sense::le   ? lhs <= c.rhs + tol * scale
                    : c.sense == Sense::ge ? lhs >= c.rhs - tol * scale
                                           : std::abs(lhs - c.rhs) <= tol * scale;
    if (!ok) bad.push_back(c.name);
  }
  for (std::size_t v = 0; v < values.size(); ++v) {
    const auto& var = m.variables[v];
    if (!std::isfinite(values[v]) || values[v] < var.lower - tol || values[v] > var.upper + tol)
      bad.push_back("bound:" + var.name);
    if (var.kind != VarKind::continuous && std::abs(values[v] - std::round(values[v])) > tol)
      bad.push_back("integrality:" + var.name);
  }
  return bad;
}

// ---- MPS ------------------------------------------------------------------
//
// Standard section layout (NAME, ROWS, COLUMNS with INTORG/INTEND markers,
// RHS, BOUNDS, ENDATA). Fields are aligned to the fixed-format columns but
// separated by whitespace, since names and 17-digit numbers do not fit the
// 8/12-character fields.

namespace detail {

inline std::string mps_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void mps_field_line(std::ostream& out, std::string_view code, std::string_view f1, std::string_view f2,
                           std::string_view f3) {
  std::string line = " ";
  line += code;
  line.resize(4, ' ');
  line += f1;
  if (!f2.empty()) {
    line += ' ';
    if (line.size() < 14) line.resize(14, ' ');
    line += f2;
  }
  if (!f3.empty()) {
    line += ' ';
    if (line.size() < 24) line.resize(24, ' ');
    line += f3;
  }
  out << line << '\n';
}

}  // namespace detail

inline void write_mps(const MilpModel& m, std::ostream& out) {
  const std::string obj = "obj";
  out << "NAME          " << m.name << '\n';
  out << "ROWS\n";
  detail::mps_field_line(out, "N", obj, "", "");
  for (const auto& c : m.constraints)
    detail::mps_field_line(out, c.sense == Sense::le ? "L" : c.sense == Sense::ge ? "G" : "E", c.name, "", "");

  std::vector<std::vector<std::pair<std::size_t, double>>> by_col(m.variables.size());
  for (std::size_t r = 0; r < m.constraints.size(); ++r)
    for (auto [v, a] : m.constraints[r].terms) by_col[v].emplace_back(r, a);

  out << "COLUMNS\n";
  bool in_int = false;
  std::size_t marker = 0;
  for (std::size_t v = 0; v < m.variables.size(); ++v) {
    const auto& var = m.variables[v];
    const bool is_int = var.kind != VarKind::continuous;
    if (is_int != in_int) {
      char mk[32];
      std::snprintf(mk, sizeof mk, "M%zu", marker++);
      detail::mps_field_line(out, "", mk, "'MARKER'", is_int ? "'INTORG'" : "'INTEND'");
      in_int = is_int;
    }
    if (var.cost != 0.0 || by_col[v].empty())
      detail::mps_field_line(out, "", var.name, obj, detail::mps_number(var.cost));
    for (auto [r, a] : by_col[v]) detail::mps_field_line(out, "", var.name, m.constraints[r].name, detail::mps_number(a));
  }
  if (in_int) {
    char mk[32];
    std::snprintf(mk, sizeof mk, "M%zu", marker++);
    detail::mps_field_line(out, "", mk, "'MARKER'", "'INTEND'");
  }

  out << "RHS\n";
  if (m.objective_offset != 0.0) detail::mps_field_line(out, "", "RHS", obj, detail::mps_number(-m.objective_offset));
  for (const auto& c : m.constraints)
    if (c.rhs != 0.0) detail::mps_field_line(out, "", "RHS", c.name, detail::mps_number(c.rhs));

  out << "BOUNDS\n";
  for (const auto& var : m.variables) {
    if (var.kind == VarKind::binary) {
      detail::mps_field_line(out, "BV", "BND", var.name, "");
      continue;
    }
    const bool lo_inf = std::isinf(var.lower), up_inf = std::isinf(var.upper);
    if (lo_inf && up_inf) {
      detail::mps_field_line(out, "FR", "BND", var.name, "");
      continue;
    }
    if (lo_inf) detail::mps_field_line(out, "MI", "BND", var.name, "");
    else if (var.lower != 0.0 || var.kind == VarKind::integer)
      detail::mps_field_line(out, "LO", "BND", var.name, detail::mps_number(var.lower));
    if (!up_inf) detail::mps_field_line(out, "UP", "BND", var.name, detail::mps_number(var.upper));
    else if (var.kind == VarKind::integer) detail::mps_field_line(out, "PL", "BND", var.name, "");
  }
  out << "ENDATA\n";
}

inline void export_model(const MilpModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(bool(out), Errc::io_error, "cannot write " + path);
  write_mps(m, out);
  require(bool(out), Errc::io_error, "write failed for " + path);
}

inline MilpModel read_mps(std::istream& in) {
  MilpModel m;
  std::string line, section, obj_row;
  std::unordered_map<std::string, std::size_t> row_index;
  bool in_int = false, ended = false;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) { throw Error(Errc::parse_error, "mps:" + std::to_string(lineno) + ": " + msg); };
  auto number = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') fail("bad number '" + s + "'");
    return v;
  };
  auto var_of = [&](const std::string& name, bool create) -> std::size_t {
    if (!m.has_variable(name)) {
      if (!create) fail("unknown column " + name);
      return m.add_variable(name, in_int ? VarKind::integer : VarKind::continuous, 0.0, kInf);
    }
    return m.index_of(name);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '*') continue;
    std::istringstream ss(line);
    std::vector<std::string> f;
    for (std::string tok; ss >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    if (line[0] != ' ') {
      section = f[0];
      if (section == "NAME") m.name = f.size() > 1 ? f[1] : "";
      if (section == "ENDATA") {
        ended = true;
        break;
      }
      continue;
    }
    if (section == "ROWS") {
      if (f.size() != 2) fail("bad ROWS line");
      if (f[0] == "N") {
        if (obj_row.empty()) obj_row = f[1];
        continue;
      }
      const Sense s = f[0] == "L" ? Sense::le : f[0] == "G" ? Sense::ge : f[0] == "E" ? Sense::eq : (fail("bad row type"), Sense::le);
      row_index.emplace(f[1], m.constraints.size());
      m.constraints.push_back({f[1], {}, s, 0.0});
    } else if (section == "COLUMNS") {
      if (f.size() >= 3 && f[1] == "'MARKER'") {
        in_int = f[2] == "'INTORG'";
        continue;
      }
      if (f.size() != 3 && f.size() != 5) fail("bad COLUMNS line");
      const std::size_t v = var_of(f[0], true);
      for (std::size_t k = 1; k + 1 < f.size(); k += 2) {
        const double a = number(f[k + 1]);
        if (f[k] == obj_row) {
          m.variables[v].cost = a;
          continue;
        }
        auto it = row_index.find(f[k]);
        if (it == row_index.end()) fail("unknown row " + f[k]);
        m.constraints[it->second].terms.emplace_back(v, a);
      }
    } else if (section == "RHS") {
      if (f.size() != 3 && f.size() != 5) fail("bad RHS line");
      for (std::size_t k = 1; k + 1 < f.size(); k += 2) {
        const double v = number(f[k + 1]);
        if (f[k] == obj_row) {
          m.objective_offset = -v;
          continue;
        }
        auto it = row_index.find(f[k]);
        if (it == row_index.end()) fail("unknown row " + f[k]);
        m.constraints[it->second].rhs = v;
      }
    } else if (section == "BOUNDS") {
      if (f.size() < 3) fail("bad BOUNDS line");
      auto& var = m.variables[var_of(f[2], false)];
      const std::string& t = f[0];
      if (t == "BV") {
        var.kind = VarKind::binary;
        var.lower = 0.0;
        var.upper = 1.0;
      } else if (t == "FR") {
        var.lower = -kInf;
        var.upper = kInf;
      } else if (t == "MI") {
        var.lower = -kInf;
      } else if (t == "PL") {
        var.upper = kInf;
      } else {
        if (f.size() != 4) fail("bound needs a value");
        const double v = number(f[3]);
        if (t == "LO") var.lower = v;
        else if (t == "UP") var.upper = v;
        else if (t == "FX") var.lower = var.upper = v;
        else fail("unsupported bound type " + t);
      }
    } else {
      fail("data outside a known section");
    }
  }
  if (!ended) fail("missing ENDATA");
  if (obj_row.empty()) fail("no objective row");
  for (auto& c : m.constraints) std::sort(c.terms.begin(), c.terms.end());
  return m;
}

inline MilpModel load_mps(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), Errc::io_error, "cannot open " + path);
  return read_mps(in);
}

// True when both models have the same variables, bounds, costs, rows and
// coefficients, compared bit for bit.
inline bool same_model(const MilpModel& a, const MilpModel& b) {
  if (a.variables.size() != b.variables.size() || a.constraints.size() != b.constraints.size()) return false;
  if (a.objective_offset != b.objective_offset) return false;
  for (std::size_t v = 0; v < a.variables.size(); ++v) {
    const auto &x = a.variables[v], &y = b.variables[v];
    if (x.name != y.name || x.kind != y.kind || x.lower != y.lower || x.upper != y.upper || x.cost != y.cost)
      return false;
  }
  for (std::size_t r = 0; r < a.constraints.size(); ++r) {
    const auto &x = a.constraints[r], &y = b.constraints[r];
    if (x.name != y.name || x.sense != y.sense || x.rhs != y.rhs || x.terms != y.terms) return false;
  }
  return true;
}

// ---- solution files: one "name value" pair per line, '#' comments --------

inline void write_solution(const MilpModel& m, std::span<const double> values, std::ostream& out) {
  require_dims(values.size(), m.variables.size(), "write_solution");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", objective_value(m, values));
  out << "# Objective value = " << buf << '\n';
  for (std::size_t v = 0; v < values.size(); ++v) {
    std::snprintf(buf, sizeof buf, "%.17g", values[v]);
    out << m.variables[v].name << ' ' << buf << '\n';
  }
}

inline std::vector<double> read_solution(const MilpModel& m, std::istream& in) {
  std::vector<double> values(m.variables.size(), 0.0);
  std::vector<char> seen(m.variables.size(), 0);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string name;
    double v = 0.0;
    if (!(ss >> name)) continue;
    require(bool(ss >> v), Errc::parse_error, "solution line without a value: " + line);
    require(m.has_variable(name), Errc::parse_error, "solution names unknown variable " + name);
    const std::size_t idx = m.index_of(name);
    values[idx] = v;
    seen[idx] = 1;
  }
  for (std::size_t k = 0; k < seen.size(); ++k)
    require(seen[k], Errc::parse_error, "solution is missing variable " + m.variables[k].name);
  return values;
}

}  // namespace spotree
