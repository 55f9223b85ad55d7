#include <random>

#include "activeseg/forest.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace activeseg;

namespace {

// Two Gaussian blobs pushed apart along x so that a margin of 1 separates them.
struct Blobs {
  FeatureMatrix x;
  std::vector<int> y;
};

Blobs separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Blobs b;
  b.x.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    double x0 = std::abs(g(rng)) + 0.5;
    b.x(static_cast<Eigen::Index>(i), 0) = c == 0 ? -x0 : x0;
    b.x(static_cast<Eigen::Index>(i), 1) = g(rng);
    b.y.push_back(c);
  }
  return b;
}

}  // namespace

TEST_CASE("separable set: the fixture is separable and the ensemble fits it") {
  const auto b = separable(100, 2);
  // oracle: nearest class centroid classifies every training point correctly
  Eigen::RowVector2d mu[2] = {Eigen::RowVector2d::Zero(), Eigen::RowVector2d::Zero()};
  int count[2] = {0, 0};
  for (std::size_t i = 0; i < 100; ++i) {
    mu[b.y[i]] += b.x.row(static_cast<Eigen::Index>(i));
    ++count[b.y[i]];
  }
  mu[0] /= count[0];
  mu[1] /= count[1];
  for (std::size_t i = 0; i < 100; ++i) {
    const auto r = b.x.row(static_cast<Eigen::Index>(i));
    const int nearest = (r - mu[0]).squaredNorm() <= (r - mu[1]).squaredNorm() ? 0 : 1;
    REQUIRE(nearest == b.y[i]);
  }

  const auto model = EnsembleModel::train(b.x, b.y, 2, ForestConfig{});
  const auto p = model.predict_proba(b.x);
  for (std::size_t i = 0; i < 100; ++i) {
    Eigen::Index arg;
    p.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    CHECK(arg == b.y[i]);
  }
  // a point deep inside class 1
  double deep[2] = {6.0, 0.0}, out[2];
  model.predict_row(deep, out);
  CHECK(out[1] > out[0]);
}

TEST_CASE("single-class training set predicts that class with confidence 1") {
  FeatureMatrix x(3, 2);
  x << 0, 1, 2, 3, 4, 5;
  const std::vector<int> y{2, 2, 2};
  const auto model = EnsembleModel::train(x, y, 4, ForestConfig{10, 1, 0, 2});
  FeatureMatrix q(2, 2);
  q << -100, 7, 100, 0.5;
  const auto p = model.predict_proba(q);
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(p(i, 2) == 1.0);
    CHECK(p.row(i).sum() == 1.0);
  }
}

TEST_CASE("determinism and probability rows") {
  const auto b = separable(80, 4);
  const auto m1 = EnsembleModel::train(b.x, b.y, 2, ForestConfig{20, 7, 0, 2});
  const auto m2 = EnsembleModel::train(b.x, b.y, 2, ForestConfig{20, 7, 0, 2});
  CHECK(m1 == m2);
  const auto p = m1.predict_proba(b.x);
  CHECK(p == m2.predict_proba(b.x));
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
}

TEST_CASE("one tree with pure leaves gives one-hot outputs") {
  const auto b = separable(60, 8);
  const auto model = EnsembleModel::train(b.x, b.y, 2, ForestConfig{1, 3, 0, 2});
  const auto p = model.predict_proba(b.x);
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK((p(i, 0) == 1.0 || p(i, 1) == 1.0));
}

TEST_CASE("training and prediction errors") {
  FeatureMatrix empty(0, 2);
  CHECK_THROWS_AS(EnsembleModel::train(empty, std::vector<int>{}, 2, ForestConfig{}), std::invalid_argument);
  FeatureMatrix x(2, 2);
  x << 0, 0, 1, 1;
  CHECK_THROWS_AS(EnsembleModel::train(x, std::vector<int>{0, 5}, 2, ForestConfig{}), std::invalid_argument);
  const auto model = EnsembleModel::train(x, std::vector<int>{0, 1}, 2, ForestConfig{3, 1, 0, 2});
  FeatureMatrix wrong(1, 3);
  wrong.setZero();
  CHECK_THROWS_AS(model.predict_proba(wrong), std::invalid_argument);
}

TEST_CASE("serialisation round trip, file and bytes") {
  testing::TempDir tmp("forest");
  const auto b = separable(50, 5);
  const auto model = EnsembleModel::train(b.x, b.y, 2, ForestConfig{15, 3, 0, 2});
  model.save(tmp.path / "m.bin");
  const auto back = EnsembleModel::load(tmp.path / "m.bin");
  CHECK(back == model);
  CHECK(back.predict_proba(b.x) == model.predict_proba(b.x));
  CHECK(std::filesystem::exists(tmp.path / "m.bin.json"));
  CHECK(EnsembleModel::deserialize(model.serialize()) == model);
  CHECK_THROWS_AS(EnsembleModel::deserialize("garbage"), std::invalid_argument);
  auto bytes = model.serialize();
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(EnsembleModel::deserialize(bytes), std::invalid_argument);
}

TEST_CASE("depth limit is honoured") {
  const auto moons = testing::make_moons(200, 0.05, 1);
  const auto stump = EnsembleModel::train(moons.x, moons.y, 2, ForestConfig{1, 1, 1, 2});
  // a depth-1 tree has at most two distinct outputs
  const auto p = stump.predict_proba(moons.x);
  std::set<double> values;
  for (Eigen::Index i = 0; i < p.rows(); ++i) values.insert(p(i, 0));
  CHECK(values.size() <= 2);
}
