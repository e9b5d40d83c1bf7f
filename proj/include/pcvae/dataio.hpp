#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcvae/error.hpp"
#include "pcvae/missingness.hpp"
#include "pcvae/rng.hpp"
#include "pcvae/tensor.hpp"

namespace pcvae {

/// Shortest-round-trip decimal formatting; the one way numbers are written
/// to CSV so that load/save cycles are stable byte for byte.
inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

/// Per-column min/max in raw units, fitted on observed training cells.
struct ScaleInfo {
  std::vector<double> col_min;
  std::vector<double> col_max;
  std::vector<std::uint8_t> constant;  // max not strictly above min

  std::size_t cols() const { return col_min.size(); }
  bool empty() const { return col_min.empty(); }

  double scale(std::size_t j, double v) const {
    if (constant[j]) return 0.5;
    double s = (v - col_min[j]) / (col_max[j] - col_min[j]);
    return s < 0.0 ? 0.0 : (s > 1.0 ? 1.0 : s);
  }

  double unscale(std::size_t j, double s) const {
    if (constant[j]) return col_min[j];
    return col_min[j] + s * (col_max[j] - col_min[j]);
  }
};

/// Row-major tabular data. `truth` optionally carries a complete copy of
/// the same table (same units) for evaluation against hidden cells.
struct Dataset {
  Tensor values;  // [n,d]; cells missing in the companion mask hold 0
  std::vector<std::string> columns;
  ScaleInfo scale;
  std::optional<Tensor> truth;

  std::size_t n() const { return values.rows(); }
  std::size_t d() const { return values.cols(); }

  Tensor row(std::size_t i) const {
    Tensor r({d()});
    for (std::size_t j = 0; j < d(); ++j) r.v[j] = values.at(i, j);
    return r;
  }

  std::string column_name(std::size_t j) const {
    return j < columns.size() ? columns[j] : "col" + std::to_string(j);
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e;
}

}  // namespace detail

struct LoadedCsv {
  Dataset data;
  MaskPattern observed;  // 1 where the file had a value
};

/// Reads a rectangular numeric CSV. Empty cells are recorded as missing;
/// lines starting with '#' are skipped. Throws ParseError with the row (and
/// column) of the offending cell.
inline LoadedCsv load_csv(const std::string& path, bool header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    if (line.empty() && in.peek() == std::ifstream::traits_type::eof()) break;
    lines.push_back(line);
  }
  if (lines.empty()) throw ParseError(path + ": empty file");

  std::vector<std::string> columns;
  std::size_t first_row = 0;
  if (header) {
    columns = detail::split_csv_line(lines[0]);
    for (std::string& c : columns) c = detail::trim(c);
    first_row = 1;
    if (lines.size() == first_row) throw ParseError(path + ": no data rows");
  }

  std::size_t d = detail::split_csv_line(lines[first_row]).size();
  std::size_t n = lines.size() - first_row;
  Tensor values({n, d});
  MaskPattern observed(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto cells = detail::split_csv_line(lines[first_row + i]);
    if (cells.size() != d)
      throw ParseError(path + ": row " + std::to_string(i + 1) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(d));
    for (std::size_t j = 0; j < d; ++j) {
      std::string cell = detail::trim(cells[j]);
      if (cell.empty()) continue;  // missing
      double v;
      if (!detail::parse_double(cell, v))
        throw ParseError(path + ": non-numeric cell at row " +
                         std::to_string(i + 1) + ", column " +
                         std::to_string(j + 1) + ": '" + cell + "'");
      values.at(i, j) = v;
      observed.set(i, j, true);
    }
  }
  LoadedCsv out;
  out.data.values = std::move(values);
  out.data.columns = std::move(columns);
  out.observed = std::move(observed);
  return out;
}

/// Writes a matrix as CSV; optional '#' comment lines go first, and cells
/// masked out (when a mask is given) are left empty.
inline void write_matrix_csv(const Tensor& matrix, const std::string& path,
                             const std::vector<std::string>& comments = {},
                             const std::vector<std::string>& columns = {},
                             const MaskPattern* present = nullptr) {
  if (matrix.rank() != 2) throw DimensionError("write_matrix_csv: matrix");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const std::string& c : comments) out << "# " << c << '\n';
  if (!columns.empty()) {
    for (std::size_t j = 0; j < columns.size(); ++j)
      out << (j ? "," : "") << columns[j];
    out << '\n';
  }
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      if (j) out << ',';
      if (!present || present->observed(i, j))
        out << format_double(matrix.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

inline void write_mask_csv(const MaskPattern& mask, const std::string& path,
                           const std::vector<std::string>& comments = {}) {
  write_matrix_csv(mask.m, path, comments);
}

/// Reads a 0/1 observation mask; anything else is a ParseError.
inline MaskPattern read_mask_csv(const std::string& path) {
  LoadedCsv raw = load_csv(path, false);
  std::size_t n = raw.data.n(), d = raw.data.d();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (!raw.observed.observed(i, j))
        throw ParseError(path + ": mask has empty cell at row " +
                         std::to_string(i + 1));
      double v = raw.data.values.at(i, j);
      if (v != 0.0 && v != 1.0)
        throw ParseError(path + ": mask cell at row " + std::to_string(i + 1) +
                         ", column " + std::to_string(j + 1) +
                         " is not 0 or 1");
    }
  return MaskPattern(raw.data.values);
}

/// Min-max scaling to [0,1] per column, statistics taken from cells observed
/// under fit_mask only. Constant columns map to 0.5 and are flagged.
inline std::pair<Dataset, ScaleInfo> minmax_scale(const Dataset& ds,
                                                  const MaskPattern& fit_mask) {
  if (!ds.values.same_shape(fit_mask.m))
    throw DimensionError("minmax_scale: mask shape mismatch");
  std::size_t n = ds.n(), d = ds.d();
  ScaleInfo info;
  info.col_min.assign(d, 0.0);
  info.col_max.assign(d, 0.0);
  info.constant.assign(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    bool any = false;
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!fit_mask.observed(i, j)) continue;
      double v = ds.values.at(i, j);
      if (!any) {
        lo = hi = v;
        any = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (!any)
      throw DataError("column " + ds.column_name(j) +
                      " has no observed cells to fit scaling");
    info.col_min[j] = lo;
    info.col_max[j] = hi;
    info.constant[j] = hi > lo ? 0 : 1;
  }
  Dataset scaled = ds;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      scaled.values.at(i, j) = info.scale(j, ds.values.at(i, j));
  if (ds.truth) {
    Tensor t = *ds.truth;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        t.at(i, j) = info.scale(j, ds.truth->at(i, j));
    scaled.truth = std::move(t);
  }
  scaled.scale = info;
  return {scaled, info};
}

/// Applies an existing scaling (e.g. from a checkpoint) without refitting.
inline Dataset apply_scale(const Dataset& ds, const ScaleInfo& info) {
  if (info.cols() != ds.d())
    throw DimensionError("apply_scale: column count mismatch");
  Dataset out = ds;
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t j = 0; j < ds.d(); ++j)
      out.values.at(i, j) = info.scale(j, ds.values.at(i, j));
  if (ds.truth) {
    Tensor t = *ds.truth;
    for (std::size_t i = 0; i < ds.n(); ++i)
      for (std::size_t j = 0; j < ds.d(); ++j)
        t.at(i, j) = info.scale(j, ds.truth->at(i, j));
    out.truth = std::move(t);
  }
  out.scale = info;
  return out;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Disjoint, exhaustive, seed-reproducible row split with
/// round(n * test_fraction) test rows.
inline SplitIndices split(std::size_t n, double test_fraction,
                          std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw ConfigError("test fraction must lie strictly between 0 and 1");
  std::size_t n_test = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * test_fraction));
  if (n_test == 0 || n_test >= n)
    throw ConfigError("split leaves an empty train or test set");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x73706c6974ULL));  // "split"
  rng.shuffle(order);
  SplitIndices out;
  out.test.assign(order.begin(), order.begin() + n_test);
  out.train.assign(order.begin() + n_test, order.end());
  return out;
}

/// Row/mask selection helpers used by the train/eval pipelines.
inline Dataset take_rows(const Dataset& ds,
                         const std::vector<std::size_t>& idx) {
  Dataset out;
  out.columns = ds.columns;
  out.scale = ds.scale;
  out.values = Tensor({idx.size(), ds.d()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < ds.d(); ++j)
      out.values.at(i, j) = ds.values.at(idx[i], j);
  if (ds.truth) {
    Tensor t({idx.size(), ds.d()});
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < ds.d(); ++j)
        t.at(i, j) = ds.truth->at(idx[i], j);
    out.truth = std::move(t);
  }
  return out;
}

inline MaskPattern take_rows(const MaskPattern& mask,
                             const std::vector<std::size_t>& idx) {
  MaskPattern out(idx.size(), mask.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < mask.cols(); ++j)
      out.set(i, j, mask.observed(idx[i], j));
  return out;
}

}  // namespace pcvae
