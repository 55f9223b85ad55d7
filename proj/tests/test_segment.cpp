#include <random>

#include "activeseg/agglomerate.hpp"
#include "activeseg/boundary_learning.hpp"
#include "activeseg/oversegment.hpp"
#include "activeseg/rag.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace activeseg;

namespace {

// Membrane probability per voxel; the rest goes to cytoplasm.
ProbabilityField membrane_field(Dims d, const std::vector<double>& pm) {
  std::vector<double> v;
  for (double p : pm) v.insert(v.end(), {1.0 - p, p, 0.0, 0.0});
  return ProbabilityField(d, kClassCount, v);
}

// One-hot field from a class per voxel.
ProbabilityField class_field(Dims d, const std::vector<int>& cls) {
  std::vector<double> v(cls.size() * kClassCount, 0.0);
  for (std::size_t i = 0; i < cls.size(); ++i) v[i * kClassCount + static_cast<std::size_t>(cls[i])] = 1.0;
  return ProbabilityField(d, kClassCount, v);
}

// Vertical strips of the given width, numbered left to right.
SegmentationMap strips(Dims d, std::size_t width) {
  std::vector<std::uint32_t> ids(d.voxel_count());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(d.coords(i)[0] / width);
  return SegmentationMap(d, ids);
}

BoundaryScorer constant_scorer(double p) {
  return [p](const RegionAdjacencyGraph&, std::uint32_t) { return p; };
}

std::uint32_t boundary_between(const RegionAdjacencyGraph& rag, std::uint32_t a, std::uint32_t b) {
  return rag.region(a).neighbors.at(b);
}

}  // namespace

TEST_CASE("seed extraction examples") {
  // 7x3: blob A (5 voxels) | wall | blob B (5 voxels) | wall | 2-voxel blob
  const Dims d{7, 3, 1};
  const std::vector<double> pm{
      0, 0, 1, 0, 0, 1, 0,  //
      0, 0, 1, 0, 0, 1, 0,  //
      0, 1, 1, 0, 1, 1, 1,  //
  };
  const auto seeds = extract_seeds(membrane_field(d, pm), kMembrane);
  CHECK(seeds.seed_count == 2);
  CHECK(seeds.ids[0] == 1);
  CHECK(seeds.ids[3] == 2);
  CHECK(seeds.ids[6] == 0);
  SeedConfig keep;
  keep.keep_small = true;
  CHECK(extract_seeds(membrane_field(d, pm), kMembrane, keep).seed_count == 3);

  CHECK(extract_seeds(membrane_field(d, std::vector<double>(21, 0.0)), kMembrane).seed_count == 1);
  CHECK_THROWS_AS(extract_seeds(membrane_field(d, std::vector<double>(21, 1.0)), kMembrane), NoSeedsError);
}

TEST_CASE("watershed: single seed floods everything, ridge separates basins") {
  const Dims d{11, 1, 1};
  const std::vector<double> flat(11, 0.0);
  const auto one = seeded_watershed(membrane_field(d, flat), kMembrane, extract_seeds(membrane_field(d, flat), kMembrane));
  CHECK(one.region_count() == 1);

  const std::vector<double> ridge{0, 0, 0, 0, 0.5, 0.9, 0.5, 0, 0, 0, 0};
  const auto field = membrane_field(d, ridge);
  const auto seg = seeded_watershed(field, kMembrane, extract_seeds(field, kMembrane));
  REQUIRE(seg.region_count() == 2);
  for (std::size_t i = 0; i <= 4; ++i) CHECK(seg.at(i) == 0);
  for (std::size_t i = 6; i < 11; ++i) CHECK(seg.at(i) == 1);
}

TEST_CASE("watershed on random fields agrees with a flood-fill oracle") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const Dims d{12, 10, t % 2 ? 3u : 1u};
    std::vector<double> pm(d.voxel_count());
    for (auto& p : pm) p = u(rng) < 0.5 ? 0.0 : u(rng);
    const auto field = membrane_field(d, pm);
    std::vector<bool> low(pm.size());
    for (std::size_t i = 0; i < pm.size(); ++i) low[i] = pm[i] < 0.01;
    std::size_t expected = 0;
    for (const auto& comp : testing::components(d, low)) expected += comp.size() > 3;
    if (expected == 0) continue;

    const auto seeds = extract_seeds(field, kMembrane);
    CHECK(seeds.seed_count == expected);
    const auto seg = seeded_watershed(field, kMembrane, seeds);
    CHECK(seg.region_count() == seeds.seed_count);
    for (std::size_t i = 0; i < pm.size(); ++i) {
      if (seeds.ids[i] != 0) CHECK(seg.at(i) == seeds.ids[i] - 1);
    }
    CHECK(seeded_watershed(field, kMembrane, seeds) == seg);
  }
}

TEST_CASE("region adjacency: checkerboard, halves, single") {
  const Dims d{4, 4, 1};
  std::vector<std::uint32_t> quad(16);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto c = d.coords(i);
    quad[i] = static_cast<std::uint32_t>((c[0] / 2) + 2 * (c[1] / 2));
  }
  const auto field = membrane_field(d, std::vector<double>(16, 0.2));
  const auto rag = RegionAdjacencyGraph::build(SegmentationMap(d, quad), field);
  CHECK(rag.alive_boundaries().size() == 4);
  CHECK(rag.region(0).neighbors.count(3) == 0);  // diagonal only

  CHECK(RegionAdjacencyGraph::build(strips(d, 2), field).alive_boundaries().size() == 1);
  CHECK(RegionAdjacencyGraph::build(SegmentationMap(d, std::vector<std::uint32_t>(16, 0)), field)
            .alive_boundaries()
            .empty());

  // boundary voxel sets are disjoint
  std::set<std::size_t> seen;
  for (auto b : rag.alive_boundaries()) {
    for (auto v : rag.boundary(b).voxels) CHECK(seen.insert(v).second);
  }
}

TEST_CASE("boundary features: constant channel, identical sides, size") {
  const Dims d{6, 4, 1};
  const auto rag = RegionAdjacencyGraph::build(strips(d, 3), class_field(d, std::vector<int>(24, kMembrane)));
  const auto f = boundary_features(rag, 0);
  REQUIRE(f.size() == boundary_feature_count(kClassCount));
  REQUIRE(boundary_feature_names(kClassCount).size() == f.size());
  const std::size_t block = 4 * kSummaryPerChannel;
  CHECK(f[kMembrane * block + 0] == 1.0);  // boundary mean
  CHECK(f[kMembrane * block + 1] == 0.0);  // boundary std
  for (int c = 0; c < kClassCount; ++c) {
    for (int s = 0; s < kSummaryPerChannel; ++s) CHECK(f[c * block + 3 * kSummaryPerChannel + s] == 0.0);
  }
  CHECK(f[kClassCount * block] == 8.0);  // both columns next to the cut
}

TEST_CASE("histogram median tracks the exact median") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    ChannelStats s;
    std::vector<double> v(100);
    for (auto& x : v) {
      x = u(rng);
      s.add(x);
    }
    std::sort(v.begin(), v.end());
    CHECK(std::abs(s.quantile(0.5) - 0.5 * (v[49] + v[50])) <= 0.1);
    CHECK(std::abs(s.quantile(0.25) - v[24]) <= 0.1);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= 100.0;
    CHECK(s.mean() == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("boundary truth rules") {
  // strips: cytoplasm | mitochondria | cytoplasm | cytoplasm, bodies 0 0 1 1
  const Dims d{8, 4, 1};
  const auto seg = strips(d, 2);
  std::vector<int> cls(32);
  std::vector<std::uint32_t> body(32);
  LabelVolume labels{d, std::vector<ClassLabel>(32)};
  for (std::size_t i = 0; i < 32; ++i) {
    const auto strip = d.coords(i)[0] / 2;
    cls[i] = strip == 1 ? kMitochondria : 0;
    labels.labels[i] = class_from_index(cls[i]);
    body[i] = strip < 2 ? 0 : 1;
  }
  const auto rag = RegionAdjacencyGraph::build(seg, class_field(d, cls));
  const auto truth = derive_boundary_truth(rag, SegmentationMap(d, body), labels);
  REQUIRE(truth.boundary_ids.size() == 3);
  auto label_of = [&](std::uint32_t a, std::uint32_t b) {
    const auto id = boundary_between(rag, a, b);
    for (std::size_t i = 0; i < truth.boundary_ids.size(); ++i) {
      if (truth.boundary_ids[i] == id) return truth.labels[i];
    }
    return -1;
  };
  CHECK(label_of(0, 1) == kTrueBoundary);   // mito vs cytoplasm, same cell
  CHECK(label_of(1, 2) == kTrueBoundary);   // different cells
  CHECK(label_of(2, 3) == kFalseBoundary);  // two cytoplasm fragments
  CHECK(truth.tied_regions.empty());
}

TEST_CASE("k-means initial subset") {
  FeatureMatrix x(20, 2);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 0.1);
  for (Eigen::Index i = 0; i < 20; ++i) {
    x(i, 0) = (i < 10 ? 0.0 : 10.0) + g(rng);
    x(i, 1) = g(rng);
  }
  const auto two = kmeans_representatives(x, 2, 1);
  REQUIRE(two.size() == 2);
  CHECK(two[0] < 10);
  CHECK(two[1] >= 10);
  CHECK(kmeans_representatives(x, 2, 1) == two);
  CHECK(kmeans_representatives(x, 20, 1).size() == 20);
  CHECK(init_boundary_subset(x, 0.1, 1).size() == 2);
  CHECK_THROWS_AS(kmeans_representatives(x, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(kmeans_representatives(x, 21, 1), std::invalid_argument);
}

TEST_CASE("boundary disagreement") {
  CHECK(sp_disagreement(0.8, 0.3) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(sp_disagreement(0.4, 0.4) == 0.0);
  CHECK(sp_disagreement(1.0, 0.0) == 1.0);
}

TEST_CASE("boundary loop: noise stops at the budget, zero budget keeps the init set") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  FeatureMatrix x(200, 4);
  std::vector<int> y(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    for (Eigen::Index c = 0; c < 4; ++c) x(i, c) = g(rng);
    y[static_cast<std::size_t>(i)] = coin(rng);
  }
  BoundaryLoopConfig cfg;
  cfg.forest.tree_count = 20;
  cfg.graph.target_density = 0.05;
  OracleLabelSource oracle(y);
  const auto noisy = run_boundary_loop(x, oracle, cfg);
  CHECK(noisy.budget == 30);
  CHECK(noisy.labeled == 30);
  CHECK(noisy.stop_reason == StopReason::budget);

  cfg.budget_fraction = cfg.init_fraction;
  const auto init_only = run_boundary_loop(x, oracle, cfg);
  CHECK(init_only.labeled == 7);
  CHECK(init_only.history.empty());
  CHECK(init_only.model.tree_count() == 20);
}

TEST_CASE("boundary loop: separable features stop on the zero-error window") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.3);
  FeatureMatrix x(1000, 3);
  std::vector<int> y(1000);
  for (Eigen::Index i = 0; i < 1000; ++i) {
    const int c = static_cast<int>(i % 2);
    x(i, 0) = (c ? 4.0 : -4.0) + g(rng);
    x(i, 1) = g(rng);
    x(i, 2) = g(rng);
    y[static_cast<std::size_t>(i)] = c;
  }
  BoundaryLoopConfig cfg;
  cfg.forest.tree_count = 20;
  cfg.graph.target_density = 0.05;
  OracleLabelSource oracle(y);
  const auto r = run_boundary_loop(x, oracle, cfg);
  CHECK(r.stop_reason == StopReason::zero_error_window);
  CHECK(r.labeled < r.budget);
  REQUIRE(r.history.size() >= 5);
  for (std::size_t i = r.history.size() - 5; i < r.history.size(); ++i) {
    CHECK(r.history[i].classifier_errors == 0);
    CHECK(r.history[i].propagation_errors == 0);
  }
}

TEST_CASE("agglomeration: thresholds and the mitochondria delay") {
  const Dims d{8, 4, 1};
  const auto seg = strips(d, 2);
  const auto rag = RegionAdjacencyGraph::build(seg, class_field(d, std::vector<int>(32, 0)));

  auto copy = rag;
  CHECK(agglomerate_cytoplasm(copy, constant_scorer(0.1), 0.0) == 0);
  CHECK(copy.segmentation() == seg);

  const Dims d2{4, 4, 1};
  auto two = RegionAdjacencyGraph::build(strips(d2, 2), class_field(d2, std::vector<int>(16, 0)));
  CHECK(agglomerate_cytoplasm(two, constant_scorer(0.1), 0.3) == 1);
  CHECK(two.segmentation().region_count() == 1);
  auto kept = RegionAdjacencyGraph::build(strips(d2, 2), class_field(d2, std::vector<int>(16, 0)));
  CHECK(agglomerate_cytoplasm(kept, constant_scorer(0.4), 0.3) == 0);

  // right half is mitochondria: nothing merges in phase 1 even at theta 1
  std::vector<int> cls(16, 0);
  for (std::size_t i = 0; i < 16; ++i) {
    if (d2.coords(i)[0] >= 2) cls[i] = kMitochondria;
  }
  auto mito = RegionAdjacencyGraph::build(strips(d2, 2), class_field(d2, cls));
  CHECK(mito.region(1).mito);
  CHECK(agglomerate_cytoplasm(mito, constant_scorer(0.1), 1.0) == 0);
}

TEST_CASE("mitochondria absorption") {
  // 5x5: a 3x3 mitochondrion enclosed by one region
  const Dims d{5, 5, 1};
  std::vector<std::uint32_t> ids(25, 0);
  std::vector<int> cls(25, 0);
  for (std::size_t i = 0; i < 25; ++i) {
    const auto c = d.coords(i);
    if (c[0] >= 1 && c[0] <= 3 && c[1] >= 1 && c[1] <= 3) {
      ids[i] = 1;
      cls[i] = kMitochondria;
    }
  }
  auto enclosed = RegionAdjacencyGraph::build(SegmentationMap(d, ids), class_field(d, cls));
  CHECK(absorb_mitochondria(enclosed, 1.0) == 1);
  CHECK(enclosed.segmentation().region_count() == 1);
  CHECK_FALSE(enclosed.region(0).mito);

  // 6x4: cytoplasm | mitochondrion | cytoplasm, shared 50/50
  const Dims d2{6, 4, 1};
  std::vector<int> cls2(24, 0);
  for (std::size_t i = 0; i < 24; ++i) {
    if (d2.coords(i)[0] / 2 == 1) cls2[i] = kMitochondria;
  }
  auto straddle = RegionAdjacencyGraph::build(strips(d2, 2), class_field(d2, cls2));
  REQUIRE(straddle.boundary(boundary_between(straddle, 0, 1)).voxels.size() ==
          straddle.boundary(boundary_between(straddle, 1, 2)).voxels.size());
  auto strict = straddle;
  CHECK(absorb_mitochondria(strict, 0.6) == 0);
  CHECK(strict.segmentation().region_count() == 3);
  CHECK(absorb_mitochondria(straddle, 0.0) == 1);
  CHECK(straddle.segmentation().region_count() == 2);
}

TEST_CASE("threshold sweep") {
  const Dims d{8, 4, 1};
  const auto seg = strips(d, 2);
  const auto rag = RegionAdjacencyGraph::build(seg, class_field(d, std::vector<int>(32, 0)));
  // scores grow with the boundary id so merging is gradual
  BoundaryScorer scorer = [](const RegionAdjacencyGraph& g, std::uint32_t b) {
    return 0.2 + 0.2 * static_cast<double>(g.boundary(b).a);
  };
  const std::vector<double> zero{0.0};
  CHECK(sweep_thresholds(rag, scorer, zero, 0.5).front().second == seg);
  const std::vector<double> thetas{0.0, 0.3, 0.5, 1.0};
  const auto out = sweep_thresholds(rag, scorer, thetas, 0.5);
  REQUIRE(out.size() == 4);
  for (std::size_t i = 1; i < out.size(); ++i) {
    CHECK(out[i].second.region_count() <= out[i - 1].second.region_count());
  }
  CHECK(out.back().second.region_count() == 1);
  const std::vector<double> unsorted{0.5, 0.1};
  CHECK_THROWS_AS(sweep_thresholds(rag, scorer, unsorted, 0.5), std::invalid_argument);
}

TEST_CASE("merging keeps stats equal to a recomputation") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Dims d{12, 12, 1};
  std::vector<double> pm(144);
  for (auto& p : pm) p = u(rng);
  const auto field = membrane_field(d, pm);
  const auto rag0 = RegionAdjacencyGraph::build(strips(d, 2), field);
  auto rag = rag0;
  agglomerate_cytoplasm(rag, constant_scorer(0.1), 0.5, [&](const RegionAdjacencyGraph& g, std::uint32_t s, std::uint32_t) {
    const auto voxels = g.region_voxels(s);
    const auto fresh = MergeableStats::over(field, voxels);
    const auto& merged = g.region(s).stats;
    for (int c = 0; c < kClassCount; ++c) {
      CHECK(merged.channels[c].mean() == doctest::Approx(fresh.channels[c].mean()).epsilon(1e-9));
      CHECK(std::abs(merged.channels[c].stddev() - fresh.channels[c].stddev()) <= 1e-9);
    }
  });
  CHECK(rag.alive_region_count() == 1);
}
