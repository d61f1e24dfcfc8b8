#include "vistree/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vistree/errors.hpp"
#include "vistree/random.hpp"

namespace vistree {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    return "";
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    cells.push_back(trim(cell));
  }
  if (!line.empty() && line.back() == ',') {
    cells.push_back("");
  }
  return cells;
}

double parse_cell(const std::string& cell, Eigen::Index row, const std::string& column) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  double value = 0.0;
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end || cell.empty()) {
    throw DataError("unparseable numeric cell '" + cell + "' at row " + std::to_string(row) +
                    ", column '" + column + "'");
  }
  if (!std::isfinite(value)) {
    throw DataError("non-finite value at row " + std::to_string(row) + ", column '" + column +
                    "'");
  }
  return value;
}

}  // namespace

std::string format_double(double value) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

std::vector<std::string> read_schema_hints(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open schema file '" + path + "'");
  }
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    const std::string name = trim(line);
    if (name.empty() || name[0] == '#') {
      continue;
    }
    names.push_back(name);
  }
  return names;
}

Dataset load_table(const std::string& path, const std::string& target_column,
                   const std::vector<std::string>& categorical_columns) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open data file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("empty file '" + path + "'");
  }
  const std::vector<std::string> header = split_csv_line(line);
  if (header.empty()) {
    throw DataError("empty header in '" + path + "'");
  }

  Eigen::Index target_idx = -1;
  for (size_t j = 0; j < header.size(); ++j) {
    if (header[j] == target_column) {
      target_idx = static_cast<Eigen::Index>(j);
      break;
    }
  }
  if (target_idx < 0) {
    throw DataError("target column '" + target_column + "' not found in '" + path + "'");
  }

  std::vector<bool> is_categorical(header.size(), false);
  for (const std::string& name : categorical_columns) {
    bool found = false;
    for (size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) {
        is_categorical[j] = true;
        found = true;
      }
    }
    if (!found) {
      throw DataError("categorical column '" + name + "' not found in '" + path + "'");
    }
  }
  if (is_categorical[static_cast<size_t>(target_idx)]) {
    throw DataError("target column '" + target_column + "' cannot be categorical");
  }

  std::vector<std::vector<std::string>> rows;
  Eigen::Index row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) {
      continue;
    }
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row_number) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) {
    throw DataError("no data rows in '" + path + "'");
  }

  // Levels in first-appearance order per categorical column.
  std::vector<std::vector<std::string>> levels(header.size());
  for (const auto& cells : rows) {
    for (size_t j = 0; j < header.size(); ++j) {
      if (!is_categorical[j]) {
        continue;
      }
      auto& lv = levels[j];
      if (std::find(lv.begin(), lv.end(), cells[j]) == lv.end()) {
        lv.push_back(cells[j]);
      }
    }
  }

  Dataset data;
  for (size_t j = 0; j < header.size(); ++j) {
    if (static_cast<Eigen::Index>(j) == target_idx) {
      continue;
    }
    if (is_categorical[j]) {
      for (const std::string& level : levels[j]) {
        ColumnInfo info;
        info.name = header[j] + "=" + level;
        info.kind = ColumnKind::Categorical;
        info.source_name = header[j];
        info.level = level;
        data.columns.push_back(info);
      }
    } else {
      ColumnInfo info;
      info.name = header[j];
      info.source_name = header[j];
      data.columns.push_back(info);
    }
  }
  data.target_name = target_column;

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(data.columns.size());
  data.features.resize(n, p);
  data.target.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& cells = rows[static_cast<size_t>(i)];
    Eigen::Index out = 0;
    for (size_t j = 0; j < header.size(); ++j) {
      if (static_cast<Eigen::Index>(j) == target_idx) {
        data.target[i] = parse_cell(cells[j], i + 1, header[j]);
        continue;
      }
      if (is_categorical[j]) {
        for (const std::string& level : levels[j]) {
          data.features(i, out++) = cells[j] == level ? 1.0 : 0.0;
        }
      } else {
        data.features(i, out++) = parse_cell(cells[j], i + 1, header[j]);
      }
    }
  }
  return data;
}

void write_table(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  for (const auto& col : data.columns) {
    out << col.name << ',';
  }
  out << data.target_name << '\n';
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      out << format_double(data.features(i, j)) << ',';
    }
    out << format_double(data.target[i]) << '\n';
  }
  if (!out) {
    throw DataError("write failed for '" + path + "'");
  }
}

Eigen::MatrixXd load_numeric_table(const std::string& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open data file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("empty file '" + path + "'");
  }
  const std::vector<std::string> names = split_csv_line(line);
  if (names.empty()) {
    throw DataError("empty header in '" + path + "'");
  }
  std::vector<std::vector<double>> rows;
  Eigen::Index row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) {
      continue;
    }
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != names.size()) {
      throw DataError("row " + std::to_string(row_number) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(names.size()));
    }
    std::vector<double> values(cells.size());
    for (size_t j = 0; j < cells.size(); ++j) {
      values[j] = parse_cell(cells[j], row_number, names[j]);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) {
    throw DataError("no data rows in '" + path + "'");
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(names.size()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
  }
  if (header != nullptr) {
    *header = names;
  }
  return out;
}

ScalerStats fit_scaler(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.rows() == 0) {
    throw std::invalid_argument("cannot fit scaler on empty data");
  }
  ScalerStats stats;
  stats.mean = X.colwise().mean();
  const Eigen::ArrayXd var =
      (X.rowwise() - stats.mean.transpose()).array().square().colwise().mean();
  stats.std = var.sqrt();
  stats.constant.assign(static_cast<size_t>(X.cols()), 0);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (stats.std[j] == 0.0) {
      stats.std[j] = 1.0;
      stats.constant[static_cast<size_t>(j)] = 1;
    }
  }
  return stats;
}

Eigen::MatrixXd apply_scaler(const ScalerStats& stats,
                             const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() != stats.mean.size()) {
    throw std::invalid_argument("scaler dimension mismatch");
  }
  return (X.rowwise() - stats.mean.transpose()).array().rowwise() /
         stats.std.transpose().array();
}

Eigen::MatrixXd invert_scaler(const ScalerStats& stats,
                              const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() != stats.mean.size()) {
    throw std::invalid_argument("scaler dimension mismatch");
  }
  return (X.array().rowwise() * stats.std.transpose().array()).rowwise() +
         stats.mean.transpose().array();
}

ScalarStats fit_scalar(const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (y.size() == 0) {
    throw std::invalid_argument("cannot fit scaler on empty data");
  }
  ScalarStats stats;
  stats.mean = y.mean();
  stats.std = std::sqrt((y.array() - stats.mean).square().mean());
  if (stats.std == 0.0) {
    stats.std = 1.0;
    stats.constant = true;
  }
  return stats;
}

Eigen::VectorXd apply_scalar(const ScalarStats& stats,
                             const Eigen::Ref<const Eigen::VectorXd>& y) {
  return (y.array() - stats.mean) / stats.std;
}

Eigen::VectorXd invert_scalar(const ScalarStats& stats,
                              const Eigen::Ref<const Eigen::VectorXd>& y) {
  return y.array() * stats.std + stats.mean;
}

SplitPlan kfold(Eigen::Index n, Eigen::Index k, unsigned long long seed) {
  if (k < 2 || k > n) {
    throw std::invalid_argument("kfold requires 2 <= k <= n");
  }
  const std::vector<Eigen::Index> perm = RandomStream(seed, "kfold").permutation(n);
  SplitPlan plan;
  plan.folds.resize(static_cast<size_t>(k));
  const Eigen::Index base = n / k;
  const Eigen::Index extra = n % k;
  Eigen::Index pos = 0;
  for (Eigen::Index f = 0; f < k; ++f) {
    const Eigen::Index size = base + (f < extra ? 1 : 0);
    auto& fold = plan.folds[static_cast<size_t>(f)];
    fold.assign(perm.begin() + pos, perm.begin() + pos + size);
    pos += size;
  }
  return plan;
}

SplitPlan train_test_split(Eigen::Index n, double fraction, unsigned long long seed) {
  if (n < 2 || fraction <= 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("train_test_split requires n >= 2 and fraction in (0,1)");
  }
  const std::vector<Eigen::Index> perm = RandomStream(seed, "split").permutation(n);
  Eigen::Index train_count = static_cast<Eigen::Index>(std::llround(fraction * double(n)));
  train_count = std::clamp<Eigen::Index>(train_count, 1, n - 1);
  SplitPlan plan;
  plan.train_indices.assign(perm.begin(), perm.begin() + train_count);
  plan.test_indices.assign(perm.begin() + train_count, perm.end());
  return plan;
}

Dataset select_rows(const Dataset& data, const std::vector<Eigen::Index>& indices) {
  Dataset out;
  out.columns = data.columns;
  out.target_name = data.target_name;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), data.cols());
  out.target.resize(static_cast<Eigen::Index>(indices.size()));
  for (size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(indices[i]);
    out.target[static_cast<Eigen::Index>(i)] = data.target[indices[i]];
  }
  return out;
}

SynthName parse_synth_name(const std::string& name) {
  if (name == "step") return SynthName::Step;
  if (name == "gap_blobs") return SynthName::GapBlobs;
  if (name == "tail_line") return SynthName::TailLine;
  if (name == "friedman") return SynthName::Friedman;
  if (name == "linear") return SynthName::Linear;
  throw std::invalid_argument("unknown synthetic dataset '" + name + "'");
}

std::string synth_name_string(SynthName name) {
  switch (name) {
    case SynthName::Step: return "step";
    case SynthName::GapBlobs: return "gap_blobs";
    case SynthName::TailLine: return "tail_line";
    case SynthName::Friedman: return "friedman";
    case SynthName::Linear: return "linear";
  }
  throw std::invalid_argument("unknown synthetic dataset enum");
}

double friedman_formula(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != 5) {
    throw std::invalid_argument("friedman_formula expects 5 features");
  }
  constexpr double kPi = 3.14159265358979323846;
  return 10.0 * std::sin(kPi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] +
         5.0 * x[4];
}

Dataset synth(SynthName name, Eigen::Index n, double noise_std, unsigned long long seed) {
  if (n < 2) {
    throw std::invalid_argument("synthetic dataset needs n >= 2");
  }
  if (noise_std < 0.0) {
    throw std::invalid_argument("noise_std must be nonnegative");
  }
  RandomStream rng(seed, "synth/" + synth_name_string(name));
  Dataset data;
  const Eigen::Index p = name == SynthName::Friedman ? 5 : 1;
  data.features.resize(n, p);
  data.target.resize(n);
  for (Eigen::Index j = 0; j < p; ++j) {
    ColumnInfo info;
    info.name = p == 1 ? "x" : "x" + std::to_string(j + 1);
    info.source_name = info.name;
    data.columns.push_back(info);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double y = 0.0;
    switch (name) {
      case SynthName::Step: {
        const double x = rng.uniform(-1.0, 1.0);
        data.features(i, 0) = x;
        y = x > 0.0 ? 1.0 : 0.0;
        break;
      }
      case SynthName::GapBlobs: {
        const double u = rng.uniform();
        const double x = u < 0.5 ? -2.0 + 1.5 * (u / 0.5) : 0.5 + 1.5 * ((u - 0.5) / 0.5);
        data.features(i, 0) = x;
        y = std::sin(2.0 * x);
        break;
      }
      case SynthName::TailLine: {
        const double x = rng.uniform(-1.0, 1.0);
        data.features(i, 0) = x;
        y = std::sin(2.0 * x);
        break;
      }
      case SynthName::Friedman: {
        for (Eigen::Index j = 0; j < 5; ++j) {
          data.features(i, j) = rng.uniform();
        }
        y = friedman_formula(data.features.row(i).transpose());
        break;
      }
      case SynthName::Linear: {
        const double x = rng.uniform(-1.0, 1.0);
        data.features(i, 0) = x;
        y = 2.0 * x + 1.0;
        break;
      }
    }
    data.target[i] = y + (noise_std > 0.0 ? noise_std * rng.normal() : 0.0);
  }
  return data;
}

}  // namespace vistree
