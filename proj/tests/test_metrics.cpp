#include <random>

#include "activeseg/metrics.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace activeseg;

namespace {

SegmentationMap line(std::vector<std::uint32_t> ids) {
  const Dims d{ids.size(), 1, 1};
  return SegmentationMap::relabel_sequential(d, ids);
}

std::vector<std::uint32_t> random_ids(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> k(1, 4);
  std::uniform_int_distribution<std::uint32_t> id(0, k(rng) - 1);
  std::vector<std::uint32_t> out(n);
  for (auto& v : out) v = id(rng);
  return out;
}

}  // namespace

TEST_CASE("identical partitions score zero") {
  const auto a = line({0, 0, 1, 1, 2, 2, 2});
  const auto vi = split_vi(a, a);
  CHECK(vi.over_seg == 0.0);
  CHECK(vi.under_seg == 0.0);
  const auto re = split_rand(a, a);
  CHECK(re.over_seg == 0.0);
  CHECK(re.under_seg == 0.0);
  CHECK(rand_f_score(a, a) == 1.0);
}

TEST_CASE("two groundtruth halves inside one segment") {
  const auto gt = line({0, 0, 0, 0, 1, 1, 1, 1});
  const auto sg = line(std::vector<std::uint32_t>(8, 0));
  const auto vi = split_vi(gt, sg);
  CHECK(vi.under_seg == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(vi.over_seg == 0.0);
}

TEST_CASE("four voxel rand example") {
  const auto gt = line({0, 0, 1, 1});
  const auto sg = line({0, 0, 0, 0});
  const auto re = split_rand(gt, sg);
  CHECK(re.over_seg == 0.0);
  CHECK(re.under_seg == 4.0 / 6.0);
  // 2 same-GT pairs, 6 same-SG pairs, 2 shared
  const auto t = testing::enumerate_pairs(testing::to_vec(gt.ids()), testing::to_vec(sg.ids()));
  CHECK(rand_f_score(gt, sg) == 2.0 * t.same_both / (2.0 * t.same_both + t.same_gt_only + t.same_seg_only));
  CHECK(rand_f_score(gt, sg) == doctest::Approx(0.5));
}

TEST_CASE("random maps against the pair and entropy oracles") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = t % 2 ? 8 : 6;
    const auto g = random_ids(n, rng), s = random_ids(n, rng);
    const auto gt = line(g), sg = line(s);
    const auto pairs = testing::enumerate_pairs(g, s);
    const auto re = split_rand(gt, sg);
    CHECK(re.over_seg == static_cast<double>(pairs.same_gt_only) / static_cast<double>(pairs.total));
    CHECK(re.under_seg == static_cast<double>(pairs.same_seg_only) / static_cast<double>(pairs.total));
    const double denom = 2.0 * pairs.same_both + pairs.same_gt_only + pairs.same_seg_only;
    CHECK(rand_f_score(gt, sg) == (denom == 0.0 ? 1.0 : 2.0 * pairs.same_both / denom));

    const auto vi = split_vi(gt, sg);
    CHECK(std::abs(vi.under_seg - testing::entropy_given(g, s)) <= 1e-12);
    CHECK(std::abs(vi.over_seg - testing::entropy_given(s, g)) <= 1e-12);

    // swapping the roles swaps the two errors
    const auto back = split_vi(sg, gt);
    CHECK(back.over_seg == doctest::Approx(vi.under_seg).epsilon(1e-12));
    const auto re_back = split_rand(sg, gt);
    CHECK(re_back.over_seg == re.under_seg);
  }
}

TEST_CASE("merge and split of the same sizes cost the same") {
  // GT {A|B|C}, SG merges A and B  vs  GT {AB|C}, SG splits AB into A and B
  for (std::size_t a : {1u, 3u, 5u}) {
    for (std::size_t b : {2u, 4u}) {
      std::vector<std::uint32_t> three, two;
      for (std::size_t i = 0; i < a; ++i) three.push_back(0), two.push_back(0);
      for (std::size_t i = 0; i < b; ++i) three.push_back(1), two.push_back(0);
      for (std::size_t i = 0; i < 3; ++i) three.push_back(2), two.push_back(1);
      const auto merged = split_rand(line(three), line(two));
      const auto split = split_rand(line(two), line(three));
      CHECK(merged.over_seg + merged.under_seg == split.over_seg + split.under_seg);
      CHECK(merged.under_seg == split.over_seg);
      CHECK(merged.over_seg == 0.0);
      const auto vm = split_vi(line(three), line(two));
      const auto vs = split_vi(line(two), line(three));
      CHECK(vm.over_seg + vm.under_seg == doctest::Approx(vs.over_seg + vs.under_seg).epsilon(1e-15));
    }
  }
}

TEST_CASE("relabelling and refinement") {
  const auto gt = line({0, 0, 1, 1, 2, 2, 3, 3});
  const auto sg = line({5, 5, 5, 9, 9, 9, 7, 7});
  const auto sg2 = line({1, 1, 1, 0, 0, 0, 2, 2});
  CHECK(split_vi(gt, sg).under_seg == split_vi(gt, sg2).under_seg);
  CHECK(split_rand(gt, sg).over_seg == split_rand(gt, sg2).over_seg);
  // splitting every segment further never increases false merges
  const auto fine = line({0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(split_rand(gt, fine).under_seg <= split_rand(gt, sg).under_seg);
}

TEST_CASE("metric input errors") {
  const auto one = line({0});
  CHECK_THROWS_AS(split_rand(one, one), std::invalid_argument);
  CHECK_THROWS_AS(rand_f_score(one, one), std::invalid_argument);
  const auto a = line({0, 1, 1});
  const auto b = line({0, 1});
  CHECK_THROWS_AS(split_vi(a, b), std::invalid_argument);
  CHECK_THROWS_AS(split_rand(a, b), std::invalid_argument);
  const SegmentationMap empty;
  CHECK_THROWS_AS(split_vi(empty, empty), std::invalid_argument);
}
