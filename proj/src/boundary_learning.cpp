#include "activeseg/boundary_learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace activeseg {
namespace {

FeatureMatrix zscore(const FeatureMatrix& x) {
  FeatureMatrix z = x;
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).sum() / n;
    const double var = (x.col(c).array() - mean).square().sum() / n;
    const double sd = var > 1e-24 ? std::sqrt(var) : 1.0;
    z.col(c) = (x.col(c).array() - mean) / sd;
  }
  return z;
}

std::size_t nearest(const Eigen::MatrixXd& centers, const Eigen::RowVectorXd& x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  return best;
}

}  // namespace

std::vector<std::size_t> kmeans_representatives(const FeatureMatrix& features, std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (k < 1) throw std::invalid_argument("k-means needs k >= 1");
  if (k > n) throw std::invalid_argument("fewer samples than k-means centres");
  const FeatureMatrix z = zscore(features);
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), z.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> used(n, false);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  centers.row(0) = z.row(static_cast<Eigen::Index>(first));
  used[first] = true;
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (z.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        if (r < d2[i]) break;
        r -= d2[i];
      }
    }
    if (pick == n) pick = static_cast<std::size_t>(std::find(used.begin(), used.end(), false) - used.begin());
    used[pick] = true;
    centers.row(static_cast<Eigen::Index>(c)) = z.row(static_cast<Eigen::Index>(pick));
  }

  std::vector<std::size_t> assign(n, k);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(centers, z.row(static_cast<Eigen::Index>(i)));
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(assign[i])) += z.row(static_cast<Eigen::Index>(i));
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    }
  }

  std::vector<bool> taken(n, false);
  std::vector<std::size_t> reps;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d = (z.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    taken[best] = true;
    reps.push_back(best);
  }
  std::sort(reps.begin(), reps.end());
  return reps;
}

std::vector<std::size_t> init_boundary_subset(const FeatureMatrix& features, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw std::invalid_argument("initial fraction must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(features.rows())));
  return kmeans_representatives(features, k, seed);
}

double sp_disagreement(double q, double h) { return (q - h) * (q - h); }

BoundarySet collect_boundary_features(const RegionAdjacencyGraph& rag) {
  BoundarySet set;
  set.boundary_ids = rag.alive_boundaries();
  set.features.resize(static_cast<Eigen::Index>(set.boundary_ids.size()),
                      static_cast<Eigen::Index>(boundary_feature_count(rag.class_count())));
  for (std::size_t r = 0; r < set.boundary_ids.size(); ++r) {
    const auto f = boundary_features(rag, set.boundary_ids[r]);
    for (std::size_t c = 0; c < f.size(); ++c) set.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f[c];
  }
  return set;
}

std::size_t boundary_label_budget(std::size_t count, double budget_fraction) {
  return static_cast<std::size_t>(std::llround(budget_fraction * static_cast<double>(count)));
}

BoundaryProblem prepare_boundary_problem(FeatureMatrix features, const BoundaryLoopConfig& cfg) {
  BoundaryProblem p;
  p.graph = build_affinity_graph(features, cfg.graph);
  p.initial = init_boundary_subset(features, cfg.init_fraction, cfg.seed);
  p.features = std::move(features);
  return p;
}

BoundaryActiveLearner::BoundaryActiveLearner(std::shared_ptr<const BoundaryProblem> problem, BoundaryLoopConfig cfg)
    : problem_(std::move(problem)), cfg_(std::move(cfg)) {
  if (!problem_) throw std::invalid_argument("null boundary problem");
  total_budget_ = boundary_label_budget(static_cast<std::size_t>(problem_->features.rows()), cfg_.budget_fraction);
  initial_batch_.indices = problem_->initial;
  initial_batch_.scores.assign(problem_->initial.size(), 0.0);
}

void BoundaryActiveLearner::begin_loop(std::vector<LabeledSample> initial) {
  ActiveLoopConfig loop;
  loop.class_count = 2;
  loop.batch_size = cfg_.batch_size;
  loop.label_budget = total_budget_ > initial.size() ? total_budget_ - initial.size() : 0;
  loop.zero_error_window = cfg_.zero_error_window;
  loop.forest = cfg_.forest;
  loop.solver = cfg_.solver;
  auto disagreement = [](std::span<const double> q, std::span<const double> h) {
    return sp_disagreement(q[kTrueBoundary], h[kTrueBoundary]);
  };
  learner_.emplace(problem_->features, normalized_smoother(problem_->graph, cfg_.solver.perturbation), disagreement,
                   loop, initial, initial);
}

const QueryBatch& BoundaryActiveLearner::pending() const {
  static const QueryBatch empty;
  if (!learner_) return initial_batch_;
  return learner_->status() == LoopStatus::awaiting_labels ? learner_->pending() : empty;
}

void BoundaryActiveLearner::ingest(std::span<const int> labels) {
  if (learner_) {
    learner_->ingest(labels);
    return;
  }
  if (labels.size() != initial_batch_.size()) {
    throw std::invalid_argument("expected " + std::to_string(initial_batch_.size()) + " labels for the initial set");
  }
  std::vector<LabeledSample> initial;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kFalseBoundary && labels[i] != kTrueBoundary) throw std::invalid_argument("boundary label must be 0 or 1");
    initial.push_back({initial_batch_.indices[i], labels[i]});
  }
  begin_loop(std::move(initial));
  learner_->start();
}

bool BoundaryActiveLearner::done() const { return learner_ && learner_->done(); }

LoopStatus BoundaryActiveLearner::status() const {
  return learner_ ? learner_->status() : LoopStatus::awaiting_labels;
}

StopReason BoundaryActiveLearner::stop_reason() const { return learner_ ? learner_->stop_reason() : StopReason::none; }

std::size_t BoundaryActiveLearner::labeled_count() const {
  return learner_ ? learner_->training_set().size() : 0;
}

const std::vector<BatchRecord>& BoundaryActiveLearner::history() const {
  static const std::vector<BatchRecord> none;
  return learner_ ? learner_->history() : none;
}

const EnsembleModel& BoundaryActiveLearner::model() const {
  if (!learner_) throw std::logic_error("no boundary model before the initial set is labeled");
  return learner_->model();
}

void BoundaryActiveLearner::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json state = {{"v", 1}, {"stage", learner_ ? "loop" : "initial"}, {"initial", problem_->initial}};
  if (learner_) {
    nlohmann::json initial = nlohmann::json::array();
    for (std::size_t i = 0; i < problem_->initial.size(); ++i) {
      initial.push_back({learner_->training_set()[i].index, learner_->training_set()[i].label});
    }
    state["initial_labels"] = initial;
    learner_->save(dir / "loop");
  }
  std::ofstream out(dir / "boundary.json");
  if (!out) throw std::runtime_error("cannot write boundary state in " + dir.string());
  out << state.dump() << '\n';
}

void BoundaryActiveLearner::restore(const std::filesystem::path& dir) {
  std::ifstream in(dir / "boundary.json");
  if (!in) throw std::runtime_error("no saved boundary state in " + dir.string());
  const auto state = nlohmann::json::parse(in);
  if (state.at("v").get<int>() != 1) throw std::invalid_argument("unsupported boundary state version");
  if (state.at("initial").get<std::vector<std::size_t>>() != problem_->initial) {
    throw std::invalid_argument("saved initial set does not match the rebuilt problem");
  }
  learner_.reset();
  if (state.at("stage").get<std::string>() == "loop") {
    std::vector<LabeledSample> initial;
    for (const auto& item : state.at("initial_labels")) {
      initial.push_back({item.at(0).get<std::size_t>(), item.at(1).get<int>()});
    }
    begin_loop(std::move(initial));
    learner_->restore(dir / "loop");
  }
}

BoundaryLoopResult run_boundary_loop(const FeatureMatrix& features, LabelSource& source,
                                     const BoundaryLoopConfig& cfg) {
  auto problem = std::make_shared<const BoundaryProblem>(prepare_boundary_problem(features, cfg));
  BoundaryActiveLearner learner(problem, cfg);
  while (!learner.done()) {
    const auto labels = source.answer(learner.pending().indices);
    learner.ingest(labels);
  }
  return {learner.model(), learner.stop_reason(), learner.labeled_count(), learner.total_budget(), learner.history()};
}

}  // namespace activeseg
