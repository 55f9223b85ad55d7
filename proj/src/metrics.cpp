#include "activeseg/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace activeseg {
namespace {

double pairs(std::uint64_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - (n > 0 ? 1 : 0)); }

struct PairCounts {
  double both = 0.0;  // same GT and same SG
  double same_gt = 0.0;
  double same_seg = 0.0;
  double all = 0.0;
};

PairCounts pair_counts(const ContingencyTable& t) {
  if (t.total < 2) throw std::invalid_argument("pair metrics need at least two voxels");
  PairCounts p;
  for (const auto& [key, n] : t.counts) p.both += pairs(n);
  for (const auto& [id, n] : t.gt_sizes) p.same_gt += pairs(n);
  for (const auto& [id, n] : t.seg_sizes) p.same_seg += pairs(n);
  p.all = pairs(t.total);
  return p;
}

}  // namespace

ContingencyTable contingency(const SegmentationMap& gt, const SegmentationMap& seg) {
  if (!(gt.dims() == seg.dims())) throw std::invalid_argument("segmentation dims differ");
  if (gt.ids().empty()) throw std::invalid_argument("empty volume");
  ContingencyTable t;
  for (std::size_t i = 0; i < gt.ids().size(); ++i) {
    ++t.counts[{gt.at(i), seg.at(i)}];
    ++t.gt_sizes[gt.at(i)];
    ++t.seg_sizes[seg.at(i)];
  }
  t.total = gt.ids().size();
  return t;
}

double conditional_entropy(const ContingencyTable& t, bool gt_given_seg) {
  const double n = static_cast<double>(t.total);
  double h = 0.0;
  for (const auto& [key, count] : t.counts) {
    const double joint = static_cast<double>(count) / n;
    const double given = static_cast<double>(gt_given_seg ? t.seg_sizes.at(key.second) : t.gt_sizes.at(key.first)) / n;
    h -= joint * std::log2(joint / given);
  }
  return std::max(h, 0.0);
}

SplitScore split_vi(const SegmentationMap& gt, const SegmentationMap& seg) {
  const auto t = contingency(gt, seg);
  return {conditional_entropy(t, false), conditional_entropy(t, true)};
}

SplitScore split_rand(const SegmentationMap& gt, const SegmentationMap& seg) {
  const auto p = pair_counts(contingency(gt, seg));
  return {(p.same_gt - p.both) / p.all, (p.same_seg - p.both) / p.all};
}

double rand_f_score(const SegmentationMap& gt, const SegmentationMap& seg) {
  const auto p = pair_counts(contingency(gt, seg));
  if (p.same_gt + p.same_seg == 0.0) return 1.0;
  return 2.0 * p.both / (p.same_gt + p.same_seg);
}

}  // namespace activeseg
