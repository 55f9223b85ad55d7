#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "activeseg/active_loop.hpp"
#include "activeseg/affinity.hpp"
#include "activeseg/grid.hpp"

namespace activeseg {

/// Margin of a class-confidence vector relative to the membrane class m:
/// zero except at a = argmax (ties to the lowest class), where it is p^m if
/// a == m and p^a - p^m otherwise.
std::vector<double> margin_wrt_membrane(std::span<const double> p, int membrane = kMembrane);

/// Squared Euclidean distance between two margin vectors.
double pixel_disagreement(std::span<const double> g, std::span<const double> p);

/// Disagreement of a classifier row and a propagation row via their margins.
double pixel_row_disagreement(std::span<const double> classifier, std::span<const double> propagation,
                              int membrane = kMembrane);

/// Greedy membrane-biased subset of a labeled pool. Every membrane sample is
/// kept; the samples of each other class are taken in descending order of
/// their total affinity to the membrane set and the class stops as soon as
/// the next sample would push its volume (sum of degrees) above the
/// membrane volume. Returns graph node indices in pool order.
/// Throws std::invalid_argument when the pool holds no membrane sample.
std::vector<std::size_t> select_initial_subset(const AffinityGraph& graph, std::span<const LabeledSample> pool,
                                               int membrane = kMembrane);

/// Convenience overload for a pool that covers every graph node.
std::vector<std::size_t> select_initial_subset(const AffinityGraph& graph, std::span<const int> node_labels,
                                               int membrane = kMembrane);

/// Volume (sum of degrees) of the given nodes.
double graph_volume(const AffinityGraph& graph, std::span<const std::size_t> nodes);

struct PixelLoopConfig {
  /// Voxels in the affinity subsample (the brushed pool is always included).
  std::size_t subsample_size = 2000;
  GraphConfig graph;
  SolverConfig solver;
  ForestConfig forest{kPixelTreeCount, 1, 0, 2};
  std::size_t batch_size = 10;
  std::size_t budget_batches = 800;
  std::uint64_t seed = 1;
};

/// A voxel with a user- or oracle-supplied class.
struct VoxelLabel {
  std::size_t voxel;
  int label;
};

/// Everything fixed for the lifetime of a pixel session: the subsample,
/// its graph and the initial labeled sets.
struct PixelProblem {
  std::vector<std::size_t> nodes;  // node -> voxel, ascending
  FeatureMatrix node_features;
  AffinityGraph graph;
  std::vector<LabeledSample> pool;      // node-indexed brushed pool
  std::vector<LabeledSample> selected;  // greedy membrane-biased subset of the pool
};

/// Builds the subsample (pool voxels plus uniformly drawn voxels), its
/// affinity graph and the initial selection. Throws std::invalid_argument
/// for an empty pool, out-of-range voxels, conflicting labels or a pool
/// without membrane.
PixelProblem prepare_pixel_problem(const FeatureBank& bank, std::span<const VoxelLabel> pool,
                                   const PixelLoopConfig& cfg);

ActiveLearner make_pixel_learner(const PixelProblem& problem, const PixelLoopConfig& cfg);

/// Oracle labels for every subsample node from a groundtruth label volume.
std::vector<int> node_truth(const PixelProblem& problem, const LabelVolume& truth);

/// Oracle stand-in for the brushing step: up to per_class voxels of each
/// class, drawn uniformly with the given seed.
std::vector<VoxelLabel> sample_brush_pool(const LabelVolume& truth, std::size_t per_class, std::uint64_t seed);

/// Applies an ensemble to every row of a bank.
ProbabilityField predict_field(const EnsembleModel& model, const FeatureBank& bank, const Dims& dims);

struct PixelLoopResult {
  EnsembleModel model;
  std::vector<LabeledSample> training_set;  // node-indexed
  std::vector<std::size_t> queried;         // node-indexed
  std::size_t batches = 0;
};

/// Runs the pixel loop until its batch budget is spent. source answers
/// node indices of problem.
PixelLoopResult run_pixel_loop(const PixelProblem& problem, LabelSource& source, const PixelLoopConfig& cfg,
                               const std::function<void(const ActiveLearner&)>& observer = {});

}  // namespace activeseg
