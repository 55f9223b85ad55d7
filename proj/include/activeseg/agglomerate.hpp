#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "activeseg/forest.hpp"
#include "activeseg/rag.hpp"

namespace activeseg {

struct AgglomerationConfig {
  double merge_threshold = 0.3;
  double inclusion_threshold = 0.5;

  void validate() const;
};

/// Probability that a boundary is a TRUE boundary.
using BoundaryScorer = std::function<double(const RegionAdjacencyGraph&, std::uint32_t boundary)>;

/// Scores boundaries with a 2-class ensemble (column kTrueBoundary).
BoundaryScorer model_scorer(const EnsembleModel& model);

/// Called after every merge with the survivor and the absorbed region.
using MergeObserver = std::function<void(const RegionAdjacencyGraph&, std::uint32_t survivor, std::uint32_t absorbed)>;

/// Phase 1: repeatedly merges across the lowest-scoring boundary while its
/// score is below theta, skipping boundaries that touch a
/// mitochondria-tagged region. Mutates rag; returns the number of merges.
std::size_t agglomerate_cytoplasm(RegionAdjacencyGraph& rag, const BoundaryScorer& scorer, double theta,
                                  const MergeObserver& observer = {});

/// Phase 2: each mitochondria-tagged region joins the non-mitochondria
/// neighbour holding the largest share of its boundary voxels, if that share
/// is at least inclusion_threshold. Mutates rag; returns the number absorbed.
std::size_t absorb_mitochondria(RegionAdjacencyGraph& rag, double inclusion_threshold,
                                const MergeObserver& observer = {});

/// Both phases on a copy of rag.
SegmentationMap agglomerate(RegionAdjacencyGraph rag, const BoundaryScorer& scorer, const AgglomerationConfig& cfg);

/// One segmentation per theta (ascending).
std::vector<std::pair<double, SegmentationMap>> sweep_thresholds(const RegionAdjacencyGraph& rag,
                                                                 const BoundaryScorer& scorer,
                                                                 std::span<const double> thetas,
                                                                 double inclusion_threshold);

}  // namespace activeseg
