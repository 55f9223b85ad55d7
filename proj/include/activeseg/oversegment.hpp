#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "activeseg/grid.hpp"

namespace activeseg {

/// Raised when no voxel component qualifies as a seed.
class NoSeedsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-voxel seed id: 0 = no seed, otherwise 1..seed_count.
struct SeedMask {
  Dims dims;
  std::vector<std::uint32_t> ids;
  std::uint32_t seed_count = 0;
};

struct SeedConfig {
  double threshold = 0.01;
  /// Components with at most this many voxels are dropped...
  std::size_t min_size = 3;
  /// ...unless this is set, in which case every component becomes a seed.
  bool keep_small = false;
};

/// Face-connected components of {p^m < threshold}, numbered in scan order of
/// their first voxel. Throws NoSeedsError when none survive.
SeedMask extract_seeds(const ProbabilityField& field, int membrane, const SeedConfig& cfg = {});

/// Priority flood from the seeds in increasing p^m, FIFO among equal
/// priorities. Region r holds seed r+1.
SegmentationMap seeded_watershed(const ProbabilityField& field, int membrane, const SeedMask& seeds);

}  // namespace activeseg
