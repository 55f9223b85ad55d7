#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "activeseg/active_loop.hpp"
#include "activeseg/affinity.hpp"
#include "activeseg/rag.hpp"

namespace activeseg {

/// k-means (k-means++ seeding, Lloyd iterations) on z-scored features with
/// k = round(fraction * count); returns the sorted indices of the samples
/// nearest to each centre (each sample used at most once).
/// Throws std::invalid_argument when k < 1 or k > count.
std::vector<std::size_t> init_boundary_subset(const FeatureMatrix& features, double fraction, std::uint64_t seed);
std::vector<std::size_t> kmeans_representatives(const FeatureMatrix& features, std::size_t k, std::uint64_t seed);

/// (q - h)^2 for the TRUE-boundary confidences of the classifier (q) and of
/// label propagation (h).
double sp_disagreement(double q, double h);

struct BoundaryLoopConfig {
  double init_fraction = 0.035;
  /// Total labeled boundaries (initial set included) as a fraction of all.
  double budget_fraction = 0.15;
  std::size_t batch_size = 10;
  int zero_error_window = 5;
  GraphConfig graph;
  SolverConfig solver;
  ForestConfig forest{kBoundaryTreeCount, 1, 0, 2};
  std::uint64_t seed = 1;
};

/// Boundary features as a matrix, one row per alive boundary in id order.
struct BoundarySet {
  std::vector<std::uint32_t> boundary_ids;
  FeatureMatrix features;
};
BoundarySet collect_boundary_features(const RegionAdjacencyGraph& rag);

/// Fixed inputs of a boundary session: features, graph and initial set.
struct BoundaryProblem {
  FeatureMatrix features;
  AffinityGraph graph;
  std::vector<std::size_t> initial;
};

BoundaryProblem prepare_boundary_problem(FeatureMatrix features, const BoundaryLoopConfig& cfg);

/// llround(budget_fraction * count).
std::size_t boundary_label_budget(std::size_t count, double budget_fraction);

/// Two-stage boundary loop: the first pending batch is the k-means initial
/// set; once it is answered the disagreement loop takes over.
class BoundaryActiveLearner {
 public:
  BoundaryActiveLearner(std::shared_ptr<const BoundaryProblem> problem, BoundaryLoopConfig cfg);

  const QueryBatch& pending() const;
  void ingest(std::span<const int> labels);
  bool done() const;
  LoopStatus status() const;
  StopReason stop_reason() const;
  bool in_initial_stage() const { return !learner_.has_value(); }
  std::size_t labeled_count() const;
  std::size_t total_budget() const { return total_budget_; }
  const std::vector<BatchRecord>& history() const;
  const EnsembleModel& model() const;
  const ActiveLearner* learner() const { return learner_ ? &*learner_ : nullptr; }

  void save(const std::filesystem::path& dir) const;
  void restore(const std::filesystem::path& dir);

 private:
  void begin_loop(std::vector<LabeledSample> initial);

  std::shared_ptr<const BoundaryProblem> problem_;
  BoundaryLoopConfig cfg_;
  std::size_t total_budget_ = 0;
  QueryBatch initial_batch_;
  std::optional<ActiveLearner> learner_;
};

struct BoundaryLoopResult {
  EnsembleModel model;
  StopReason stop_reason = StopReason::none;
  std::size_t labeled = 0;
  std::size_t budget = 0;
  std::vector<BatchRecord> history;
};

/// Oracle-mode boundary loop. source answers row indices of the feature matrix.
BoundaryLoopResult run_boundary_loop(const FeatureMatrix& features, LabelSource& source,
                                     const BoundaryLoopConfig& cfg);

}  // namespace activeseg
