#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "activeseg/features.hpp"
#include "activeseg/forest.hpp"
#include "activeseg/labelprop.hpp"

namespace activeseg {

/// Ordered query indices with their disagreement scores (non-increasing).
struct QueryBatch {
  std::vector<std::size_t> indices;
  std::vector<double> scores;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

/// Top-batch_size unlabeled indices by score, ties to the lowest index.
/// Throws std::invalid_argument when fewer than batch_size unlabeled samples remain.
QueryBatch select_top_queries(std::span<const double> scores, const std::vector<bool>& labeled,
                              std::size_t batch_size);

/// Supplies labels for query indices (groundtruth oracle or a human channel).
class LabelSource {
 public:
  virtual ~LabelSource() = default;
  virtual std::vector<int> answer(std::span<const std::size_t> indices) = 0;
};

class OracleLabelSource : public LabelSource {
 public:
  explicit OracleLabelSource(std::vector<int> truth) : truth_(std::move(truth)) {}
  std::vector<int> answer(std::span<const std::size_t> indices) override;

 private:
  std::vector<int> truth_;
};

/// disagreement(classifier_row, propagation_row) -> delta >= 0
using DisagreementFn = std::function<double(std::span<const double>, std::span<const double>)>;

struct ActiveLoopConfig {
  int class_count = 2;
  std::size_t batch_size = 10;
  /// Total number of query labels the loop may request.
  std::size_t label_budget = 0;
  /// Stop once this many consecutive batches had zero errors from both
  /// predictors. 0 disables the rule.
  int zero_error_window = 0;
  ForestConfig forest;
  SolverConfig solver;
};

enum class LoopStatus { idle, awaiting_labels, done };
enum class StopReason { none, budget, zero_error_window, pool_exhausted };

const char* to_string(LoopStatus s);
const char* to_string(StopReason r);

/// Per-batch error counts of the two predictors on the queried samples.
struct BatchRecord {
  std::size_t batch = 0;
  std::size_t size = 0;
  std::size_t classifier_errors = 0;
  std::size_t propagation_errors = 0;
};

/// The classifier / label-propagation disagreement loop over a fixed node
/// set. Nodes carry features (for the ensemble) and a smoother (for
/// propagation). Two labeled sets are kept: the propagation seeds and the
/// ensemble's training set; every answered query joins both.
class ActiveLearner {
 public:
  ActiveLearner(FeatureMatrix node_features, Smoother smoother, DisagreementFn disagreement, ActiveLoopConfig cfg,
                std::vector<LabeledSample> training, std::vector<LabeledSample> propagation_seeds);

  /// Trains, propagates and emits the first batch (or finishes at once when
  /// the budget is zero).
  void start();
  /// Labels must match the pending batch one-to-one, in order. Throws
  /// std::invalid_argument otherwise and leaves the state untouched.
  void ingest(std::span<const int> labels);

  LoopStatus status() const { return status_; }
  bool done() const { return status_ == LoopStatus::done; }
  StopReason stop_reason() const { return stop_reason_; }
  const QueryBatch& pending() const { return pending_; }
  const EnsembleModel& model() const { return model_; }
  const LabelDistribution& distribution() const { return distribution_; }
  const Eigen::MatrixXd& classifier_predictions() const { return predictions_; }
  const std::vector<LabeledSample>& training_set() const { return training_; }
  const std::vector<LabeledSample>& propagation_seeds() const { return seeds_; }
  const std::vector<std::size_t>& queried() const { return queried_; }
  const std::vector<BatchRecord>& history() const { return history_; }
  std::size_t batches_done() const { return history_.size(); }
  std::size_t labels_remaining() const { return cfg_.label_budget - queried_.size(); }
  std::size_t node_count() const { return static_cast<std::size_t>(features_.rows()); }
  const ActiveLoopConfig& config() const { return cfg_; }
  /// Status of the most recent propagation solve.
  SolveStatus last_solve() const { return last_solve_; }

  /// Writes state.json, F (float64) and the current model into dir.
  void save(const std::filesystem::path& dir) const;
  /// Restores a learner saved by save(); features, smoother and config must
  /// be rebuilt identically by the caller.
  void restore(const std::filesystem::path& dir);

 private:
  void refit();
  void next_batch_or_finish();
  bool zero_error_window_reached() const;

  FeatureMatrix features_;
  Smoother smoother_;
  DisagreementFn disagreement_;
  ActiveLoopConfig cfg_;

  std::vector<LabeledSample> training_;
  std::vector<LabeledSample> seeds_;
  std::vector<std::size_t> queried_;
  std::vector<bool> labeled_;  // union of training and seeds
  std::vector<BatchRecord> history_;

  EnsembleModel model_;
  Eigen::MatrixXd predictions_;
  LabelDistribution distribution_;
  bool have_distribution_ = false;
  SolveStatus last_solve_ = SolveStatus::converged;
  QueryBatch pending_;
  LoopStatus status_ = LoopStatus::idle;
  StopReason stop_reason_ = StopReason::none;
};

/// Drives a learner to completion against a label source. observer (if
/// set) runs after start and after every ingested batch.
void run_to_completion(ActiveLearner& learner, LabelSource& source,
                       const std::function<void(const ActiveLearner&)>& observer = {});

}  // namespace activeseg
