#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qsd/errors.hpp"
#include "qsd/sub_generator.hpp"

// CSV dialect used by every artifact: comma separator, '.' decimal point,
// one header row, LF line endings.  Numbers are written with
// round-trippable shortest formatting (std::to_chars), which is
// locale-independent by construction.

namespace qsd::csv {

inline std::string fmt(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt(long v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> cells) { rows.push_back(std::move(cells)); }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i)
      out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << "\n";
    }
  }
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw ConfigError("bad numeric cell: '" + s + "'");
  return v;
}

inline Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      t.header = split_line(line);
      first = false;
    } else {
      t.rows.push_back(split_line(line));
    }
  }
  return t;
}

// Generator matrices: dense row-major, header row carries the state labels.
inline void save_generator(const SubGenerator& g, const std::filesystem::path& path) {
  Table t;
  for (int j = 0; j < g.dim(); ++j) t.header.push_back(g.label(j));
  for (int i = 0; i < g.dim(); ++i) {
    std::vector<std::string> row;
    row.reserve(g.dim());
    for (int j = 0; j < g.dim(); ++j) row.push_back(fmt(g.Q(i, j)));
    t.add_row(std::move(row));
  }
  t.write(path);
}

inline SubGenerator load_generator(const std::filesystem::path& path) {
  Table t = read(path);
  const int n = static_cast<int>(t.header.size());
  if (static_cast<int>(t.rows.size()) != n)
    throw ConfigError("generator CSV is not square: " + std::to_string(n) +
                      " labels, " + std::to_string(t.rows.size()) + " rows");
  Mat Q(n, n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(t.rows[i].size()) != n)
      throw ConfigError("generator CSV row " + std::to_string(i) + " has wrong arity");
    for (int j = 0; j < n; ++j) Q(i, j) = parse_double(t.rows[i][j]);
  }
  return make_sub_generator(std::move(Q), t.header);
}

}  // namespace qsd::csv
