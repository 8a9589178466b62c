#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "fbgpr/dataset.hpp"

using namespace fbgpr;

namespace {

struct TempCsv {
  std::string path;
  explicit TempCsv(const std::string& content) {
    static int counter = 0;
    path = "fbgpr_test_ds_" + std::to_string(counter++) + ".csv";
    std::ofstream out(path, std::ios::binary);
    out << content;
  }
  ~TempCsv() { std::remove(path.c_str()); }
};

Dataset ramp_dataset(int n) {
  Dataset d;
  d.name = "ramp";
  d.X.resize(n, 1);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = i;
    d.y[i] = 2.0 * i;
  }
  d.column_names = {"x"};
  d.target_name = "y";
  return d;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("load_csv basic shape and column bookkeeping") {
  TempCsv f("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
  const Dataset d = load_csv(f.path, "y", nullptr, "toy");
  CHECK(d.n() == 3);
  CHECK(d.dim() == 2);
  CHECK(d.name == "toy");
  CHECK(d.target_name == "y");
  REQUIRE(d.column_names.size() == 2);
  CHECK(d.column_names[0] == "a");
  CHECK(d.column_names[1] == "b");
  CHECK(d.X(1, 0) == 4.0);
  CHECK(d.y[2] == 9.0);
}

TEST_CASE("target column can sit anywhere") {
  TempCsv f("y,a\n10,1\n20,2\n");
  const Dataset d = load_csv(f.path, "y");
  CHECK(d.dim() == 1);
  CHECK(d.y[0] == 10.0);
  CHECK(d.X(1, 0) == 2.0);
}

TEST_CASE("bad rows are rejected with their file line numbers") {
  // line 3 has a gap, line 5 text, line 6 a non-finite value
  TempCsv f("x,y\n1,1\n,2\n3,3\ntext,4\n5,inf\n6,6\n");
  LoadReport report;
  const Dataset d = load_csv(f.path, "y", &report);
  CHECK(d.n() == 3);
  REQUIRE(report.rejected_rows.size() == 3);
  CHECK(report.rejected_rows[0] == 3);
  CHECK(report.rejected_rows[1] == 5);
  CHECK(report.rejected_rows[2] == 6);
}

TEST_CASE("load failures throw") {
  CHECK_THROWS_AS(load_csv("definitely_missing_file.csv", "y"), std::runtime_error);

  TempCsv no_target("a,b\n1,2\n3,4\n");
  CHECK_THROWS(load_csv(no_target.path, "y"));

  TempCsv all_bad("x,y\noops,1\nworse,2\n");
  CHECK_THROWS(load_csv(all_bad.path, "y"));

  TempCsv one_row("x,y\n1,2\n");
  CHECK_THROWS(load_csv(one_row.path, "y"));
}

TEST_CASE("first-k split is the deterministic prefix") {
  const Dataset d = ramp_dataset(10);
  SplitSpec spec;
  spec.kind = SplitSpec::Kind::FirstK;
  spec.k = 7;
  const SplitResult s = split_dataset(d, spec);
  REQUIRE(s.train_rows.size() == 7);
  REQUIRE(s.test_rows.size() == 3);
  for (int i = 0; i < 7; ++i) CHECK(s.train_rows[static_cast<std::size_t>(i)] == i);
  CHECK(s.test_rows[0] == 7);
  CHECK(s.x_train(6, 0) == 6.0);
  CHECK(s.y_test[2] == 18.0);
}

TEST_CASE("random split is a seeded partition") {
  const Dataset d = ramp_dataset(101);
  SplitSpec spec;
  spec.kind = SplitSpec::Kind::RandomFraction;
  spec.fraction = 0.5;
  spec.seed = 33;

  const SplitResult a = split_dataset(d, spec);
  const SplitResult b = split_dataset(d, spec);
  CHECK(a.train_rows == b.train_rows);
  CHECK(a.test_rows == b.test_rows);

  // disjoint and exhaustive
  std::set<int> seen;
  for (int r : a.train_rows) seen.insert(r);
  for (int r : a.test_rows) seen.insert(r);
  CHECK(seen.size() == 101);
  // 50.5 rounds half away from zero
  CHECK(a.train_rows.size() == 51);
  CHECK(a.test_rows.size() == 50);

  // indices ascending so x rows align with the original ordering
  CHECK(std::is_sorted(a.train_rows.begin(), a.train_rows.end()));
  CHECK(std::is_sorted(a.test_rows.begin(), a.test_rows.end()));
  for (std::size_t i = 0; i < a.train_rows.size(); ++i)
    CHECK(a.x_train(static_cast<int>(i), 0) == static_cast<double>(a.train_rows[i]));

  SplitSpec other = spec;
  other.seed = 34;
  const SplitResult c = split_dataset(d, other);
  CHECK(c.train_rows != a.train_rows);
}

TEST_CASE("train subsample caps training rows and leaves the test side alone") {
  const Dataset d = ramp_dataset(40);
  SplitSpec spec;
  spec.kind = SplitSpec::Kind::RandomFraction;
  spec.fraction = 0.5;
  spec.seed = 2;
  spec.train_subsample = 8;
  const SplitResult s = split_dataset(d, spec);
  CHECK(s.train_rows.size() == 8);
  CHECK(s.test_rows.size() == 20);
  CHECK(s.x_train.rows() == 8);

  // subsampled rows are still a subset of the uncapped training half
  SplitSpec uncapped = spec;
  uncapped.train_subsample = 0;
  const SplitResult full = split_dataset(d, uncapped);
  for (int r : s.train_rows)
    CHECK(std::find(full.train_rows.begin(), full.train_rows.end(), r) != full.train_rows.end());

  // a cap wider than the split is a no-op
  uncapped.train_subsample = 500;
  const SplitResult wide = split_dataset(d, uncapped);
  CHECK(wide.train_rows.size() == 20);
}

TEST_CASE("split validation") {
  const Dataset d = ramp_dataset(5);
  SplitSpec spec;
  spec.kind = SplitSpec::Kind::FirstK;
  spec.k = 5;
  CHECK_THROWS(split_dataset(d, spec));  // empty test side
  spec.k = 0;
  CHECK_THROWS(split_dataset(d, spec));
  spec.kind = SplitSpec::Kind::RandomFraction;
  spec.fraction = 0.0;
  CHECK_THROWS(split_dataset(d, spec));
  spec.fraction = 1.0;
  CHECK_THROWS(split_dataset(d, spec));
}

TEST_CASE("split spec equality") {
  SplitSpec a, b;
  a.kind = b.kind = SplitSpec::Kind::RandomFraction;
  a.fraction = b.fraction = 0.5;
  a.seed = b.seed = 7;
  CHECK(a == b);
  b.seed = 8;
  CHECK_FALSE(a == b);
  b = a;
  b.train_subsample = 100;
  CHECK_FALSE(a == b);
}

TEST_CASE("standardizer round trip and moments") {
  Eigen::MatrixXd x(4, 2);
  x << 1.0, 5.0,
       2.0, 5.0,
       3.0, 5.0,
       4.0, 5.0;
  Eigen::VectorXd y(4);
  y << 10.0, 20.0, 30.0, 40.0;

  const Standardizer st = Standardizer::fit(x, y);
  const Eigen::MatrixXd xs = st.apply_x(x);
  const Eigen::VectorXd ys = st.apply_y(y);

  CHECK(std::abs(xs.col(0).mean()) < 1e-12);
  const double sd0 = std::sqrt((xs.col(0).array() - xs.col(0).mean()).square().sum() / 3.0);
  CHECK(sd0 == doctest::Approx(1.0));

  // constant column: scale pinned to 1 so the transform stays invertible
  CHECK(st.x_scale[1] == 1.0);
  CHECK(xs.col(1).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(std::abs(ys.mean()) < 1e-12);
  for (int i = 0; i < 4; ++i)
    CHECK(st.invert_mean(ys[i]) == doctest::Approx(y[i]));
  // variance transport: var_orig = var_std * scale^2
  CHECK(st.invert_variance(1.0) == doctest::Approx(st.y_scale * st.y_scale));
}

}
