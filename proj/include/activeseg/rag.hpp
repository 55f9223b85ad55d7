#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "activeseg/grid.hpp"

namespace activeseg {

inline constexpr int kHistogramBins = 10;

/// Moments, extrema and a fixed 10-bin histogram over [0, 1] of one
/// probability channel. Merging is O(bins).
struct ChannelStats {
  std::uint64_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::array<std::uint64_t, kHistogramBins> histogram{};

  void add(double v);
  void merge(const ChannelStats& other);
  double mean() const;
  /// Population standard deviation.
  double stddev() const;
  /// Histogram quantile with linear interpolation inside the bin that holds
  /// the ceil(q*count)-th value, clamped to [min, max].
  double quantile(double q) const;
};

/// One ChannelStats per class channel.
struct MergeableStats {
  std::vector<ChannelStats> channels;

  static MergeableStats over(const ProbabilityField& field, std::span<const std::size_t> voxels);
  void add_voxel(const ProbabilityField& field, std::size_t voxel);
  void merge(const MergeableStats& other);
  std::uint64_t count() const { return channels.empty() ? 0 : channels.front().count; }
  /// Index of the channel with the largest mean (lowest index on ties).
  int argmax_mean() const;
};

/// Per channel: mean, std, min, q25, median, q75.
inline constexpr int kSummaryPerChannel = 6;

/// Regions and boundaries of an over-segmentation with mergeable stats.
/// Region and boundary ids stay stable across merges; merged-away entries
/// are marked dead.
class RegionAdjacencyGraph {
 public:
  struct Region {
    std::size_t size = 0;
    MergeableStats stats;
    std::vector<std::uint32_t> members;  // original over-segmentation ids
    std::uint64_t version = 0;
    bool mito = false;
    bool alive = true;
    std::map<std::uint32_t, std::uint32_t> neighbors;  // region -> boundary
  };
  struct Boundary {
    std::uint32_t a = 0;  // a < b
    std::uint32_t b = 0;
    std::vector<std::size_t> voxels;
    MergeableStats stats;
    bool alive = true;
  };

  RegionAdjacencyGraph() = default;

  /// Every voxel next to a different region joins exactly one boundary: the
  /// one towards its lowest-id foreign neighbour, so voxel lists are
  /// disjoint. mito_channel < 0 disables mitochondria tagging.
  static RegionAdjacencyGraph build(const SegmentationMap& seg, const ProbabilityField& field,
                                    int mito_channel = kMitochondria);

  const Dims& dims() const { return seg_.dims(); }
  const SegmentationMap& oversegmentation() const { return seg_; }
  const std::vector<Region>& regions() const { return regions_; }
  const std::vector<Boundary>& boundaries() const { return boundaries_; }
  const Region& region(std::uint32_t r) const { return regions_.at(r); }
  const Boundary& boundary(std::uint32_t b) const { return boundaries_.at(b); }
  std::vector<std::uint32_t> alive_boundaries() const;
  std::size_t alive_region_count() const;
  int class_count() const { return class_count_; }
  int mito_channel() const { return mito_channel_; }

  /// Merges the two regions; the lower id survives. Returns the survivor.
  std::uint32_t merge(std::uint32_t r1, std::uint32_t r2);
  void set_mito(std::uint32_t r, bool mito) { regions_.at(r).mito = mito; }

  /// Current partition with regions renumbered 0..alive-1 in id order.
  SegmentationMap segmentation() const;
  /// Original voxels of a region (walks its members).
  std::vector<std::size_t> region_voxels(std::uint32_t r) const;

  /// Region pairs and summary stats as JSON text.
  std::string to_json() const;

 private:
  void retag(std::uint32_t r);

  SegmentationMap seg_;
  std::vector<std::vector<std::size_t>> member_voxels_;  // by original id
  std::vector<Region> regions_;
  std::vector<Boundary> boundaries_;
  int class_count_ = 0;
  int mito_channel_ = -1;
};

/// Boundary descriptor: per channel the boundary summary, both region
/// summaries (smaller region first) and their absolute difference, then the
/// boundary size and the two region sizes.
std::vector<double> boundary_features(const RegionAdjacencyGraph& rag, std::uint32_t boundary);
std::size_t boundary_feature_count(int class_count);
std::vector<std::string> boundary_feature_names(int class_count);

struct BoundaryTruth {
  std::vector<std::uint32_t> boundary_ids;
  std::vector<int> labels;  // 1 = TRUE boundary, 0 = FALSE
  std::vector<std::uint32_t> tied_regions;  // regions whose body majority was a tie
};

inline constexpr int kFalseBoundary = 0;
inline constexpr int kTrueBoundary = 1;

/// TRUE when the regions' majority groundtruth bodies differ, or when one is
/// mitochondria-like (mitochondria + border voxels form a strict majority)
/// and the other is not. Covers every alive boundary in id order.
BoundaryTruth derive_boundary_truth(const RegionAdjacencyGraph& rag, const SegmentationMap& bodies,
                                    const LabelVolume& labels);

}  // namespace activeseg
