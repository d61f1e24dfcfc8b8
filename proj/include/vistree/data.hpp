#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace vistree {

enum class ColumnKind { Numeric, Categorical };

// Metadata for one expanded feature column. One-hot columns produced from a
// categorical field share source_name and carry the level in `level`.
struct ColumnInfo {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::string source_name;
  std::string level;
};

struct Dataset {
  Eigen::MatrixXd features;  // n x p, finite
  Eigen::VectorXd target;    // n
  std::vector<ColumnInfo> columns;
  std::string target_name = "y";

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index cols() const { return features.cols(); }
};

// Reads a schema sidecar: one categorical column name per line, '#' comments
// and blank lines ignored.
std::vector<std::string> read_schema_hints(const std::string& path);

// Parses a comma-separated table with a header row. Columns named in
// categorical_columns are one-hot expanded, levels ordered by first
// appearance. Throws DataError naming row/column for unparseable cells.
Dataset load_table(const std::string& path, const std::string& target_column,
                   const std::vector<std::string>& categorical_columns = {});

// Writes the dataset in the same format load_table reads; numeric values use
// shortest round-trip decimal encoding.
void write_table(const std::string& path, const Dataset& data);

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double value);

// All-numeric table without a designated target; returns the values and, if
// requested, the header names.
Eigen::MatrixXd load_numeric_table(const std::string& path,
                                   std::vector<std::string>* header = nullptr);

// Per-column location/scale. Population std; columns with zero spread keep
// std 1 and are flagged constant.
struct ScalerStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  std::vector<unsigned char> constant;
};

struct ScalarStats {
  double mean = 0.0;
  double std = 1.0;
  bool constant = false;
};

ScalerStats fit_scaler(const Eigen::Ref<const Eigen::MatrixXd>& X);
Eigen::MatrixXd apply_scaler(const ScalerStats& stats, const Eigen::Ref<const Eigen::MatrixXd>& X);
Eigen::MatrixXd invert_scaler(const ScalerStats& stats,
                              const Eigen::Ref<const Eigen::MatrixXd>& X);

ScalarStats fit_scalar(const Eigen::Ref<const Eigen::VectorXd>& y);
Eigen::VectorXd apply_scalar(const ScalarStats& stats, const Eigen::Ref<const Eigen::VectorXd>& y);
Eigen::VectorXd invert_scalar(const ScalarStats& stats, const Eigen::Ref<const Eigen::VectorXd>& y);

// Deterministic index splits. Folds partition {0..n-1}; sizes differ by at
// most one.
struct SplitPlan {
  std::vector<std::vector<Eigen::Index>> folds;
  std::vector<Eigen::Index> train_indices;
  std::vector<Eigen::Index> test_indices;
};

SplitPlan kfold(Eigen::Index n, Eigen::Index k, unsigned long long seed);
SplitPlan train_test_split(Eigen::Index n, double fraction, unsigned long long seed);

Dataset select_rows(const Dataset& data, const std::vector<Eigen::Index>& indices);

enum class SynthName { Step, GapBlobs, TailLine, Friedman, Linear };

SynthName parse_synth_name(const std::string& name);
std::string synth_name_string(SynthName name);

// Synthetic regression generators, pure functions of (name, n, noise_std,
// seed):
//   step:      x ~ U[-1,1],               y = 1[x > 0] + eps
//   gap_blobs: x ~ U[-2,-0.5] u [0.5,2],  y = sin(2x) + eps
//   tail_line: x ~ U[-1,1],               y = sin(2x) + eps
//   friedman:  x ~ U[0,1]^5,              y = 10 sin(pi x1 x2) + 20 (x3-0.5)^2
//                                             + 10 x4 + 5 x5 + eps
//   linear:    x ~ U[-1,1],               y = 2x + 1 + eps
Dataset synth(SynthName name, Eigen::Index n, double noise_std, unsigned long long seed);

double friedman_formula(const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace vistree
