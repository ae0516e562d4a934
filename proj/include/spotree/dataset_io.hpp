#pragma once

// Delimited dataset files.
//
//   x0,x1,...,c0,c1,...,weight
//   0.12,0.5,...,3.1,2.2,...,1
//
// Feature columns are x<j> (suffix ":cat" marks a categorical feature), cost
// columns c<k>; the weight column is optional on read. Lines starting with
// '#' are comments. Numbers are written with 17 significant digits.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "spotree/core.hpp"

namespace spotree {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_dataset_csv(const Dataset& data, std::ostream& out) {
  for (std::size_t j = 0; j < data.feature_dim(); ++j)
    out << 'x' << j << (data.kind(j) == FeatureKind::categorical ? ":cat" : "") << ',';
  for (std::size_t k = 0; k < data.decision_dim(); ++k) out << 'c' << k << ',';
  out << "weight\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features(i)) out << format_double(v) << ',';
    for (double v : data.costs(i)) out << format_double(v) << ',';
    out << format_double(data.weight(i)) << '\n';
  }
}

inline void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  require(bool(out), Errc::io_error, "cannot write " + path);
  write_dataset_csv(data, out);
  require(bool(out), Errc::io_error, "write failed for " + path);
}

inline Dataset read_dataset_csv(std::istream& in, const std::string& what = "dataset") {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      return true;
    }
    return false;
  };
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  require(next_line(), Errc::parse_error, what + ": missing header");
  const auto header = split(line);
  std::size_t p = 0, d = 0;
  bool has_weight = false;
  std::vector<FeatureKind> kinds;
  for (std::size_t col = 0; col < header.size(); ++col) {
    const std::string& h = header[col];
    if (!h.empty() && h[0] == 'x') {
      require(d == 0 && !has_weight, Errc::parse_error, what + ": feature columns must come first");
      kinds.push_back(h.ends_with(":cat") ? FeatureKind::categorical : FeatureKind::numeric);
      ++p;
    } else if (!h.empty() && h[0] == 'c') {
      require(!has_weight, Errc::parse_error, what + ": cost columns must precede weight");
      ++d;
    } else if (h == "weight") {
      require(col + 1 == header.size(), Errc::parse_error, what + ": weight must be the last column");
      has_weight = true;
    } else {
      throw Error(Errc::parse_error, what + ": unrecognised column '" + h + "'");
    }
  }
  require(p >= 1 && d >= 1, Errc::parse_error, what + ": need at least one feature and one cost column");
  Dataset data(p, d);
  for (std::size_t j = 0; j < p; ++j) data.set_kind(j, kinds[j]);
  std::vector<double> x(p), c(d);
  while (next_line()) {
    const auto cells = split(line);
    require(cells.size() == header.size(), Errc::parse_error,
            what + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
    std::vector<double> vals(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      std::size_t used = 0;
      try {
        vals[k] = std::stod(cells[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used != 0 && used == cells[k].size(), Errc::parse_error,
              what + ":" + std::to_string(lineno) + ": bad number '" + cells[k] + "'");
    }
    std::copy(vals.begin(), vals.begin() + p, x.begin());
    std::copy(vals.begin() + p, vals.begin() + p + d, c.begin());
    data.add(x, c, has_weight ? vals.back() : 1.0);
  }
  return data;
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), Errc::io_error, "cannot open " + path);
  return read_dataset_csv(in, path);
}

// Sidecar "<path>.json" recording how a dataset file was produced.
inline void write_manifest(const std::string& data_path, const nlohmann::json& manifest) {
  std::ofstream out(data_path + ".json");
  require(bool(out), Errc::io_error, "cannot write manifest for " + data_path);
  out << manifest.dump(1) << '\n';
}

}  // namespace spotree
