#include "fbgpr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fbgpr/io.hpp"
#include "fbgpr/rng.hpp"

namespace fbgpr {

namespace {

bool parse_cell(const std::string& text, double* out) {
  if (text.empty()) return false;
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t') ++end;
  if (*end != '\0') return false;
  if (!std::isfinite(v)) return false;
  *out = v;
  return true;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target_column, LoadReport* report,
                 const std::string& name) {
  const CsvTable table = read_csv_file(path);
  const int target = table.column(target_column);
  if (target < 0) {
    std::ostringstream msg;
    msg << "target column '" << target_column << "' not found in " << path;
    throw std::runtime_error(msg.str());
  }
  const int n_cols = static_cast<int>(table.header.size());

  Dataset data;
  data.name = name.empty() ? path : name;
  data.target_name = target_column;
  for (int c = 0; c < n_cols; ++c)
    if (c != target) data.column_names.push_back(table.header[static_cast<std::size_t>(c)]);
  data.provenance = "loaded from " + path;

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> targets;
  std::vector<int> rejected;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const int file_line = static_cast<int>(r) + 2;  // header occupies line 1
    if (static_cast<int>(cells.size()) != n_cols) {
      rejected.push_back(file_line);
      continue;
    }
    Eigen::VectorXd x(n_cols - 1);
    double yv = 0.0;
    bool ok = true;
    int xi = 0;
    for (int c = 0; c < n_cols && ok; ++c) {
      double v = 0.0;
      ok = parse_cell(cells[static_cast<std::size_t>(c)], &v);
      if (!ok) break;
      if (c == target)
        yv = v;
      else
        x[xi++] = v;
    }
    if (!ok) {
      rejected.push_back(file_line);
      continue;
    }
    rows.push_back(std::move(x));
    targets.push_back(yv);
  }
  if (report) report->rejected_rows = rejected;

  if (rows.empty()) {
    std::ostringstream msg;
    msg << "no usable rows in " << path << " (" << rejected.size() << " rejected)";
    throw std::runtime_error(msg.str());
  }
  if (rows.size() < 2) throw std::runtime_error("dataset needs at least 2 rows: " + path);

  const int n = static_cast<int>(rows.size());
  data.X.resize(n, n_cols - 1);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.X.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    data.y[i] = targets[static_cast<std::size_t>(i)];
  }
  return data;
}

bool SplitSpec::operator==(const SplitSpec& other) const {
  if (kind != other.kind || train_subsample != other.train_subsample) return false;
  if (kind == Kind::RandomFraction) return fraction == other.fraction && seed == other.seed;
  return k == other.k;
}

SplitResult split_dataset(const Dataset& data, const SplitSpec& spec) {
  const int n = data.n();
  std::vector<int> train_rows, test_rows;
  if (spec.kind == SplitSpec::Kind::RandomFraction) {
    if (!(spec.fraction > 0.0 && spec.fraction < 1.0))
      throw std::invalid_argument("split fraction must lie in (0, 1)");
    int n_train = static_cast<int>(std::llround(spec.fraction * n));
    n_train = std::clamp(n_train, 1, n - 1);
    const std::vector<int> perm = Rng(spec.seed).permutation(n);
    train_rows.assign(perm.begin(), perm.begin() + n_train);
    test_rows.assign(perm.begin() + n_train, perm.end());
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
  } else {
    if (spec.k < 1) throw std::invalid_argument("first-K split needs K >= 1");
    if (spec.k >= n) throw std::invalid_argument("first-K split needs K < N");
    train_rows.resize(static_cast<std::size_t>(spec.k));
    std::iota(train_rows.begin(), train_rows.end(), 0);
    test_rows.resize(static_cast<std::size_t>(n - spec.k));
    std::iota(test_rows.begin(), test_rows.end(), spec.k);
  }

  if (spec.train_subsample < 0) throw std::invalid_argument("train_subsample must be >= 0");
  if (spec.train_subsample > 0 &&
      spec.train_subsample < static_cast<int>(train_rows.size())) {
    Rng rng(Rng::derive(spec.seed, 1));
    const std::vector<int> pick = rng.permutation(static_cast<int>(train_rows.size()));
    std::vector<int> kept;
    kept.reserve(static_cast<std::size_t>(spec.train_subsample));
    for (int i = 0; i < spec.train_subsample; ++i)
      kept.push_back(train_rows[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])]);
    std::sort(kept.begin(), kept.end());
    train_rows = std::move(kept);
  }

  SplitResult out;
  out.train_rows = std::move(train_rows);
  out.test_rows = std::move(test_rows);
  const auto gather = [&data](const std::vector<int>& idx, Eigen::MatrixXd* x,
                              Eigen::VectorXd* y) {
    x->resize(static_cast<int>(idx.size()), data.dim());
    y->resize(static_cast<int>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      x->row(static_cast<int>(i)) = data.X.row(idx[i]);
      (*y)[static_cast<int>(i)] = data.y[idx[i]];
    }
  };
  gather(out.train_rows, &out.x_train, &out.y_train);
  gather(out.test_rows, &out.x_test, &out.y_test);
  return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train) {
  const int n = static_cast<int>(x_train.rows());
  if (n < 2) throw std::invalid_argument("standardizer needs at least 2 training rows");
  Standardizer s;
  s.x_mean = x_train.colwise().mean().transpose();
  s.x_scale.resize(x_train.cols());
  for (int c = 0; c < x_train.cols(); ++c) {
    const double var = (x_train.col(c).array() - s.x_mean[c]).square().sum() / (n - 1);
    const double sd = std::sqrt(var);
    s.x_scale[c] = sd > 0.0 ? sd : 1.0;
  }
  s.y_mean = y_train.mean();
  const double y_var = (y_train.array() - s.y_mean).square().sum() / (n - 1);
  const double y_sd = std::sqrt(y_var);
  s.y_scale = y_sd > 0.0 ? y_sd : 1.0;
  return s;
}

Eigen::MatrixXd Standardizer::apply_x(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - x_mean.transpose()).array().rowwise() /
         x_scale.transpose().array();
}

Eigen::VectorXd Standardizer::apply_y(const Eigen::VectorXd& y) const {
  return (y.array() - y_mean) / y_scale;
}

}  // namespace fbgpr
