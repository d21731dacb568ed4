#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tcal/core/data.hpp"
#include "tcal/core/error.hpp"

// Dataset CSV schemas (header required, '.' decimal separator):
//   experimental:  d,x1,...,xp
//   observational: y,z,x1,...,xp
// Lines starting with '#' before the header are comments and are skipped.

namespace tcal::csv {

namespace detail {

inline Error parse_error(const std::string& source, std::size_t line, std::size_t column,
                         const std::string& msg) {
  return Error(ErrorKind::parse, source + ": line " + std::to_string(line) + ", column " +
                                     std::to_string(column) + ": " + msg);
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos
                                                                   : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view field, const std::string& source, std::size_t line,
                           std::size_t column) {
  field = trim(field);
  if (field.empty()) throw parse_error(source, line, column, "missing value");
  double value = 0.0;
  const auto* first = field.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw parse_error(source, line, column, "not a number: '" + std::string(field) + "'");
  }
  if (!std::isfinite(value)) throw parse_error(source, line, column, "non-finite value");
  return value;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_of_row;
};

inline Table read_table(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = trim(line);
    if (!have_header) {
      if (view.empty() || view.front() == '#') continue;
      for (auto f : split(view)) t.header.emplace_back(trim(f));
      have_header = true;
      continue;
    }
    if (view.empty()) continue;
    const auto fields = split(view);
    if (fields.size() != t.header.size()) {
      throw parse_error(source, lineno, std::min(fields.size(), t.header.size()) + 1,
                        "expected " + std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      row.push_back(parse_number(fields[j], source, lineno, j + 1));
    }
    t.rows.push_back(std::move(row));
    t.line_of_row.push_back(lineno);
  }
  if (!have_header) throw parse_error(source, lineno, 1, "missing header");
  return t;
}

inline void check_covariate_header(const Table& t, std::size_t offset, const std::string& source) {
  if (t.header.size() <= offset) {
    throw parse_error(source, 1, offset + 1, "at least one covariate column x1 is required");
  }
  for (std::size_t j = offset; j < t.header.size(); ++j) {
    const std::string expected = "x" + std::to_string(j - offset + 1);
    if (t.header[j] != expected) {
      throw parse_error(source, 1, j + 1, "expected column '" + expected + "', found '" +
                                              t.header[j] + "'");
    }
  }
}

}  // namespace detail

inline ExperimentalData read_experimental(std::istream& in, const std::string& source = "<exp>") {
  const auto t = detail::read_table(in, source);
  if (t.header.empty() || t.header[0] != "d") {
    throw detail::parse_error(source, 1, 1, "first column must be 'd'");
  }
  detail::check_covariate_header(t, 1, source);
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  const auto p = static_cast<Eigen::Index>(t.header.size() - 1);
  Vector d(n);
  RowMatrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    d(i) = r[0];
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = r[static_cast<std::size_t>(j + 1)];
  }
  return ExperimentalData(std::move(d), std::move(x));
}

inline ObservationalData read_observational(std::istream& in,
                                            const std::string& source = "<obs>") {
  const auto t = detail::read_table(in, source);
  if (t.header.size() < 2 || t.header[0] != "y" || t.header[1] != "z") {
    throw detail::parse_error(source, 1, 1, "first columns must be 'y,z'");
  }
  detail::check_covariate_header(t, 2, source);
  const auto m = static_cast<Eigen::Index>(t.rows.size());
  const auto p = static_cast<Eigen::Index>(t.header.size() - 2);
  Vector y(m);
  Eigen::VectorXi z(m);
  RowMatrix x(m, p);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    if (r[1] != 0.0 && r[1] != 1.0) {
      throw detail::parse_error(source, t.line_of_row[static_cast<std::size_t>(i)], 2,
                                "z must be 0 or 1 (data row " + std::to_string(i + 1) + ")");
    }
    y(i) = r[0];
    z(i) = static_cast<int>(r[1]);
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = r[static_cast<std::size_t>(j + 2)];
  }
  return ObservationalData(std::move(y), std::move(z), std::move(x));
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open '" + path + "'");
  return in;
}

inline ExperimentalData read_experimental_file(const std::string& path) {
  auto in = open_input(path);
  return read_experimental(in, path);
}

inline ObservationalData read_observational_file(const std::string& path) {
  auto in = open_input(path);
  return read_observational(in, path);
}

/// Shortest round-trip formatting.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

inline void write_experimental(std::ostream& out, const ExperimentalData& exp) {
  out << "d";
  for (Eigen::Index j = 0; j < exp.dim(); ++j) out << ",x" << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < exp.d().size(); ++i) {
    out << format_double(exp.d()(i));
    for (Eigen::Index j = 0; j < exp.dim(); ++j) out << ',' << format_double(exp.x()(i, j));
    out << '\n';
  }
}

inline void write_observational(std::ostream& out, const ObservationalData& obs) {
  out << "y,z";
  for (Eigen::Index j = 0; j < obs.dim(); ++j) out << ",x" << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < obs.y().size(); ++i) {
    out << format_double(obs.y()(i)) << ',' << obs.z()(i);
    for (Eigen::Index j = 0; j < obs.dim(); ++j) out << ',' << format_double(obs.x()(i, j));
    out << '\n';
  }
}

}  // namespace tcal::csv
