#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fbgpr {

struct Dataset {
  std::string name;
  Eigen::MatrixXd X;  // N x d
  Eigen::VectorXd y;
  std::vector<std::string> column_names;  // feature columns, in X order
  std::string target_name;
  std::string provenance;

  int n() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }
};

struct LoadReport {
  std::vector<int> rejected_rows;  // 1-based file line numbers (header is line 1)
};

// Reads a header CSV, takes `target_column` as y and every other column as a
// feature.  Rows with an empty, unparseable, or non-finite cell are dropped
// and reported; throws if the target column is missing, every row is
// rejected, or fewer than two rows survive.
Dataset load_csv(const std::string& path, const std::string& target_column,
                 LoadReport* report = nullptr, const std::string& name = "");

struct SplitSpec {
  enum class Kind { RandomFraction, FirstK };
  Kind kind = Kind::RandomFraction;
  double fraction = 0.5;    // RandomFraction: train share
  int k = 0;                // FirstK: train prefix length
  std::uint64_t seed = 0;   // RandomFraction permutation seed
  int train_subsample = 0;  // optional cap on training rows after the split; 0 = keep all

  bool operator==(const SplitSpec& other) const;
};

struct SplitResult {
  std::vector<int> train_rows;  // original dataset row indices, ascending
  std::vector<int> test_rows;
  Eigen::MatrixXd x_train, x_test;
  Eigen::VectorXd y_train, y_test;
};

// Random splits use a seeded permutation; first-K is the deterministic
// prefix.  Both partitions are non-empty, disjoint, and exhaustive (before
// any train subsampling, which only removes training rows).
SplitResult split_dataset(const Dataset& data, const SplitSpec& spec);

// Column-wise location/scale transform fitted on training data only.
// Constant columns keep scale 1 so the transform stays invertible.
struct Standardizer {
  Eigen::VectorXd x_mean, x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;

  static Standardizer fit(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train);

  Eigen::MatrixXd apply_x(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd apply_y(const Eigen::VectorXd& y) const;
  double invert_mean(double standardized_mean) const { return standardized_mean * y_scale + y_mean; }
  double invert_variance(double standardized_var) const { return standardized_var * y_scale * y_scale; }
};

}  // namespace fbgpr
