// Copyright 2026 The ptrb Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef PTRB_DATA_HPP
#define PTRB_DATA_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ptrb/core.hpp"

namespace ptrb {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_line(std::string_view line, char delim) {
  std::vector<std::string> cells;
  if (delim == ',') {
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      cells.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
  } else {
    std::istringstream is{std::string(line)};
    std::string cell;
    while (is >> cell) cells.push_back(cell);
  }
  return cells;
}

}  // namespace detail

/// A delimited table split into numeric features and a raw label column.
struct RawTable {
  Matrix features;
  std::vector<std::string> labels;
  std::vector<std::string> feature_names;
};

/// Parses a comma- or whitespace-delimited table.
///
/// `label_column` is a header name, a 0-based column index, or "last"/"".
/// A first line is treated as a header when it has a non-numeric cell in a
/// column that is numeric on the second line.
inline RawTable parse_table(std::istream& in, const std::string& label_column = "last",
                            const std::string& source = "<stream>") {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!detail::trim(line).empty()) lines.push_back(line);
  }
  if (lines.empty()) throw DataError(source + ": empty file");

  const char delim = lines.front().find(',') != std::string::npos ? ',' : ' ';
  std::vector<std::vector<std::string>> rows;
  rows.reserve(lines.size());
  for (const auto& l : lines) rows.push_back(detail::split_line(l, delim));

  auto numeric = [](const std::string& c) { return detail::parse_double(c).has_value(); };
  bool header = false;
  if (rows.size() == 1) {
    header = std::none_of(rows[0].begin(), rows[0].end(), numeric);
  } else {
    for (std::size_t c = 0; c < rows[0].size() && c < rows[1].size(); ++c) {
      if (!numeric(rows[0][c]) && numeric(rows[1][c])) header = true;
    }
  }

  const std::size_t width = rows.front().size();
  if (width < 2) throw DataError(source + ": need at least one feature column and a label column");

  std::size_t label_idx = width - 1;
  if (!label_column.empty() && label_column != "last") {
    std::optional<std::size_t> found;
    if (header) {
      for (std::size_t c = 0; c < width; ++c) {
        if (rows[0][c] == label_column) found = c;
      }
    }
    if (!found) {
      std::size_t idx = 0;
      const auto [ptr, ec] = std::from_chars(label_column.data(),
                                             label_column.data() + label_column.size(), idx);
      if (ec != std::errc() || ptr != label_column.data() + label_column.size() || idx >= width) {
        throw DataError(source + ": label column '" + label_column + "' not found");
      }
      found = idx;
    }
    label_idx = *found;
  }

  RawTable t;
  const std::size_t first = header ? 1 : 0;
  const std::size_t n = rows.size() - first;
  if (n == 0) throw DataError(source + ": header but no data rows");
  t.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width - 1));
  for (std::size_t c = 0; c < width; ++c) {
    if (c == label_idx) continue;
    t.feature_names.push_back(header ? rows[0][c] : "f" + std::to_string(c));
  }
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t line_no = r + 1;
    if (row.size() != width) {
      throw DataError(source + ": row " + std::to_string(line_no) + " has " +
                      std::to_string(row.size()) + " cells, expected " + std::to_string(width));
    }
    Eigen::Index out_c = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_idx) {
        if (row[c].empty()) throw DataError(source + ": row " + std::to_string(line_no) + " has an empty label");
        t.labels.push_back(row[c]);
        continue;
      }
      const auto v = detail::parse_double(row[c]);
      if (!v) {
        throw DataError(source + ": row " + std::to_string(line_no) + ", column " +
                        std::to_string(c + 1) + ": " +
                        (row[c].empty() ? std::string("missing value")
                                        : "non-numeric value '" + row[c] + "'"));
      }
      if (!std::isfinite(*v)) {
        throw DataError(source + ": row " + std::to_string(line_no) + " has a non-finite value");
      }
      t.features(static_cast<Eigen::Index>(r - first), out_c++) = *v;
    }
  }
  return t;
}

inline RawTable load_csv(const std::filesystem::path& path, const std::string& label_column = "last") {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_table(in, label_column, path.string());
}

struct LabelEncoding {
  std::vector<int> y;
  std::vector<std::string> names;  // names[i] is the raw label encoded as i
};

/// Distinct labels sorted lexicographically map to 0..C-1.
inline LabelEncoding encode_labels(const std::vector<std::string>& raw) {
  std::vector<std::string> names(raw.begin(), raw.end());
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  if (names.size() < 2) throw DataError("encode_labels: need at least two distinct labels");
  std::map<std::string, int, std::less<>> index;
  for (std::size_t i = 0; i < names.size(); ++i) index.emplace(names[i], static_cast<int>(i));
  LabelEncoding enc;
  enc.names = std::move(names);
  enc.y.reserve(raw.size());
  for (const auto& r : raw) enc.y.push_back(index.at(r));
  return enc;
}

struct TabularDataset {
  std::string name;
  Matrix x;
  std::vector<int> y;
  std::vector<std::string> label_names;
  std::vector<std::string> feature_names;

  int num_classes() const { return static_cast<int>(label_names.size()); }
  std::size_t size() const { return y.size(); }
};

inline TabularDataset load_dataset(const std::string& name, const std::filesystem::path& path,
                                   const std::string& label_column = "last") {
  RawTable t = load_csv(path, label_column);
  LabelEncoding enc = encode_labels(t.labels);
  return TabularDataset{name, std::move(t.features), std::move(enc.y), std::move(enc.names),
                        std::move(t.feature_names)};
}

/// Per-feature mean and population standard deviation of training rows.
struct StandardizerStats {
  RowVector mean;
  RowVector stddev;  // 1 where the feature is constant
};

inline constexpr double kConstantFeatureStd = 1e-12;

inline StandardizerStats fit_standardizer(const Matrix& x, const std::vector<std::size_t>& train_rows) {
  if (train_rows.empty()) throw DataError("fit_standardizer: no training rows");
  const auto n = static_cast<double>(train_rows.size());
  StandardizerStats s{RowVector::Zero(x.cols()), RowVector::Zero(x.cols())};
  for (auto r : train_rows) s.mean += x.row(static_cast<Eigen::Index>(r));
  s.mean /= n;
  for (auto r : train_rows) {
    s.stddev += (x.row(static_cast<Eigen::Index>(r)) - s.mean).array().square().matrix();
  }
  s.stddev = (s.stddev / n).cwiseSqrt();
  for (Eigen::Index c = 0; c < s.stddev.size(); ++c) {
    if (s.stddev(c) < kConstantFeatureStd) s.stddev(c) = 1.0;
  }
  return s;
}

inline Matrix apply_standardizer(const StandardizerStats& s, const Matrix& x) {
  if (x.cols() != s.mean.size()) {
    throw DimensionError("apply_standardizer: " + std::to_string(x.cols()) + " features, stats for " +
                         std::to_string(s.mean.size()));
  }
  Matrix z = x;
  z.rowwise() -= s.mean;
  z.array().rowwise() /= s.stddev.array();
  return z;
}

/// Test-row indices per fold; the folds partition 0..n-1.
struct FoldSplit {
  std::size_t fold_count = 5;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> test;

  std::vector<std::size_t> train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < test.size(); ++f) {
      if (f != fold) out.insert(out.end(), test[f].begin(), test[f].end());
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Stratified k-fold: each class's indices are shuffled and dealt round-robin.
/// The dealing position carries over between classes so fold sizes differ by
/// at most one.
inline FoldSplit stratified_kfold(const std::vector<int>& y, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified_kfold: need at least 2 folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  for (const auto& [label, idx] : by_class) {
    if (idx.size() < k) {
      throw DataError("stratified_kfold: class " + std::to_string(label) + " has " +
                      std::to_string(idx.size()) + " samples, fewer than " + std::to_string(k) +
                      " folds");
    }
  }
  FoldSplit split{k, seed, std::vector<std::vector<std::size_t>>(k)};
  Rng rng(seed);
  std::size_t next = 0;
  for (auto& [label, idx] : by_class) {
    rng.shuffle(idx);
    for (auto i : idx) {
      split.test[next].push_back(i);
      next = (next + 1) % k;
    }
  }
  for (auto& f : split.test) std::sort(f.begin(), f.end());
  return split;
}

/// One dataset entry of a manifest file.
struct ManifestEntry {
  std::string name;
  std::filesystem::path path;
  std::string label_column = "last";
  std::string task = "binary";
};

/// Manifest CSV with header `name,path,label_column,task`. Relative paths
/// resolve against the manifest's directory. Lines starting with '#' are
/// comments.
inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  bool header_seen = false;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cells = detail::split_line(t, ',');
    if (!header_seen) {
      header_seen = true;
      if (cells.size() >= 2 && cells[0] == "name" && cells[1] == "path") continue;
    }
    if (cells.size() < 2 || cells.size() > 4) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": expected name,path[,label_column[,task]]");
    }
    ManifestEntry e;
    e.name = cells[0];
    e.path = cells[1];
    if (e.path.is_relative()) e.path = path.parent_path() / e.path;
    if (cells.size() > 2 && !cells[2].empty()) e.label_column = cells[2];
    if (cells.size() > 3 && !cells[3].empty()) e.task = cells[3];
    if (e.task != "binary" && e.task != "multiclass") {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": unknown task '" +
                      e.task + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace ptrb

#endif  // PTRB_DATA_HPP
