#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "activeseg/grid.hpp"

namespace activeseg {

/// Voxel overlap counts between groundtruth (a) and segmentation (b) regions.
struct ContingencyTable {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;
  std::map<std::uint32_t, std::uint64_t> gt_sizes;
  std::map<std::uint32_t, std::uint64_t> seg_sizes;
  std::uint64_t total = 0;
};

/// Throws std::invalid_argument when dims differ or the volume is empty.
ContingencyTable contingency(const SegmentationMap& gt, const SegmentationMap& seg);

/// under_seg counts false merges (pairs or entropy of distinct groundtruth
/// bodies inside one segment), over_seg false splits.
struct SplitScore {
  double over_seg = 0.0;
  double under_seg = 0.0;
};

/// H(GT|SG) in bits when gt_given_seg, otherwise H(SG|GT).
double conditional_entropy(const ContingencyTable& t, bool gt_given_seg);

/// under_seg = H(GT|SG), over_seg = H(SG|GT), in bits.
SplitScore split_vi(const SegmentationMap& gt, const SegmentationMap& seg);

/// Pair fractions over C(n,2): over_seg = same GT / different SG,
/// under_seg = different GT / same SG. Throws for n < 2.
SplitScore split_rand(const SegmentationMap& gt, const SegmentationMap& seg);

/// Harmonic mean of pair precision and recall over same-segment pairs.
/// Returns 1 when neither map has any same-region pair. Throws for n < 2.
double rand_f_score(const SegmentationMap& gt, const SegmentationMap& seg);

}  // namespace activeseg
