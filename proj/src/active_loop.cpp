#include "activeseg/active_loop.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "activeseg/grid_io.hpp"
#include "json.hpp"

namespace activeseg {
namespace {

using nlohmann::json;

int row_argmax(const Eigen::MatrixXd& m, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    if (m(row, c) > m(row, best)) best = static_cast<int>(c);
  }
  return best;
}

json samples_to_json(const std::vector<LabeledSample>& samples) {
  json out = json::array();
  for (const auto& s : samples) out.push_back({s.index, s.label});
  return out;
}

std::vector<LabeledSample> samples_from_json(const json& j) {
  std::vector<LabeledSample> out;
  for (const auto& item : j) out.push_back({item.at(0).get<std::size_t>(), item.at(1).get<int>()});
  return out;
}

StopReason stop_reason_from(const std::string& s) {
  for (auto r : {StopReason::none, StopReason::budget, StopReason::zero_error_window, StopReason::pool_exhausted}) {
    if (s == to_string(r)) return r;
  }
  throw std::invalid_argument("unknown stop reason '" + s + "'");
}

LoopStatus status_from(const std::string& s) {
  for (auto r : {LoopStatus::idle, LoopStatus::awaiting_labels, LoopStatus::done}) {
    if (s == to_string(r)) return r;
  }
  throw std::invalid_argument("unknown loop status '" + s + "'");
}

}  // namespace

const char* to_string(LoopStatus s) {
  switch (s) {
    case LoopStatus::idle: return "idle";
    case LoopStatus::awaiting_labels: return "awaiting_labels";
    case LoopStatus::done: return "done";
  }
  return "?";
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::none: return "none";
    case StopReason::budget: return "budget";
    case StopReason::zero_error_window: return "zero_error_window";
    case StopReason::pool_exhausted: return "pool_exhausted";
  }
  return "?";
}

QueryBatch select_top_queries(std::span<const double> scores, const std::vector<bool>& labeled,
                              std::size_t batch_size) {
  if (labeled.size() != scores.size()) throw std::invalid_argument("score and labeled-mask sizes differ");
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labeled[i]) candidates.push_back(i);
  }
  if (candidates.size() < batch_size) throw std::invalid_argument("unlabeled pool exhausted");
  auto before = [&](std::size_t a, std::size_t b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(batch_size),
                    candidates.end(), before);
  QueryBatch batch;
  batch.indices.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(batch_size));
  for (auto i : batch.indices) batch.scores.push_back(scores[i]);
  return batch;
}

std::vector<int> OracleLabelSource::answer(std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= truth_.size()) throw std::out_of_range("oracle has no label for index " + std::to_string(i));
    out.push_back(truth_[i]);
  }
  return out;
}

ActiveLearner::ActiveLearner(FeatureMatrix node_features, Smoother smoother, DisagreementFn disagreement,
                             ActiveLoopConfig cfg, std::vector<LabeledSample> training,
                             std::vector<LabeledSample> propagation_seeds)
    : features_(std::move(node_features)),
      smoother_(std::move(smoother)),
      disagreement_(std::move(disagreement)),
      cfg_(std::move(cfg)),
      training_(std::move(training)),
      seeds_(std::move(propagation_seeds)) {
  const std::size_t n = node_count();
  if (smoother_.node_count() != n) throw std::invalid_argument("smoother size does not match node features");
  if (cfg_.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (training_.empty()) throw std::invalid_argument("active loop needs a nonempty initial training set");
  if (seeds_.empty()) throw std::invalid_argument("active loop needs at least one propagation seed");
  labeled_.assign(n, false);
  for (const auto* set : {&training_, &seeds_}) {
    for (const auto& s : *set) {
      if (s.index >= n) throw std::invalid_argument("labeled index out of range");
      if (s.label < 0 || s.label >= cfg_.class_count) throw std::invalid_argument("label out of range");
      labeled_[s.index] = true;
    }
  }
}

void ActiveLearner::refit() {
  FeatureMatrix rows(static_cast<Eigen::Index>(training_.size()), features_.cols());
  std::vector<int> labels;
  labels.reserve(training_.size());
  for (std::size_t r = 0; r < training_.size(); ++r) {
    rows.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(training_[r].index));
    labels.push_back(training_[r].label);
  }
  model_ = EnsembleModel::train(rows, labels, cfg_.class_count, cfg_.forest);
  predictions_ = model_.predict_proba(features_);

  auto result = propagate(smoother_, seeds_, cfg_.class_count, have_distribution_ ? &distribution_ : nullptr,
                          cfg_.solver);
  distribution_ = std::move(result.distribution);
  have_distribution_ = true;
  last_solve_ = result.status;
}

bool ActiveLearner::zero_error_window_reached() const {
  const auto window = static_cast<std::size_t>(std::max(cfg_.zero_error_window, 0));
  if (window == 0 || history_.size() < window) return false;
  return std::all_of(history_.end() - static_cast<std::ptrdiff_t>(window), history_.end(), [](const BatchRecord& b) {
    return b.classifier_errors == 0 && b.propagation_errors == 0;
  });
}

void ActiveLearner::next_batch_or_finish() {
  pending_ = {};
  auto finish = [&](StopReason why) {
    status_ = LoopStatus::done;
    stop_reason_ = why;
  };
  if (zero_error_window_reached()) return finish(StopReason::zero_error_window);
  const std::size_t remaining = labels_remaining();
  if (remaining == 0) return finish(StopReason::budget);
  const auto unlabeled = static_cast<std::size_t>(std::count(labeled_.begin(), labeled_.end(), false));
  if (unlabeled == 0) return finish(StopReason::pool_exhausted);

  const std::size_t n = node_count();
  const auto k = static_cast<std::size_t>(cfg_.class_count);
  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labeled_[i]) continue;
    const Eigen::RowVectorXd p = predictions_.row(static_cast<Eigen::Index>(i));
    const Eigen::RowVectorXd g = distribution_.F.row(static_cast<Eigen::Index>(i));
    scores[i] = disagreement_({p.data(), k}, {g.data(), k});
  }
  pending_ = select_top_queries(scores, labeled_, std::min({cfg_.batch_size, remaining, unlabeled}));
  status_ = LoopStatus::awaiting_labels;
}

void ActiveLearner::start() {
  if (status_ != LoopStatus::idle) throw std::logic_error("active loop already started");
  if (cfg_.label_budget < queried_.size()) throw std::invalid_argument("label budget already exceeded");
  refit();
  next_batch_or_finish();
}

void ActiveLearner::ingest(std::span<const int> labels) {
  if (status_ != LoopStatus::awaiting_labels) throw std::logic_error("no pending query batch");
  if (labels.size() != pending_.size()) {
    throw std::invalid_argument("expected " + std::to_string(pending_.size()) + " labels, got " +
                                std::to_string(labels.size()));
  }
  for (int y : labels) {
    if (y < 0 || y >= cfg_.class_count) throw std::invalid_argument("label out of range");
  }

  BatchRecord record;
  record.batch = history_.size();
  record.size = labels.size();
  for (std::size_t q = 0; q < labels.size(); ++q) {
    const auto row = static_cast<Eigen::Index>(pending_.indices[q]);
    if (row_argmax(predictions_, row) != labels[q]) ++record.classifier_errors;
    if (row_argmax(distribution_.F, row) != labels[q]) ++record.propagation_errors;
  }
  for (std::size_t q = 0; q < labels.size(); ++q) {
    const std::size_t idx = pending_.indices[q];
    training_.push_back({idx, labels[q]});
    seeds_.push_back({idx, labels[q]});
    queried_.push_back(idx);
    labeled_[idx] = true;
  }
  history_.push_back(record);
  refit();
  next_batch_or_finish();
}

void ActiveLearner::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json history = json::array();
  for (const auto& h : history_) {
    history.push_back({{"batch", h.batch},
                       {"size", h.size},
                       {"classifier_errors", h.classifier_errors},
                       {"propagation_errors", h.propagation_errors}});
  }
  json state = {{"v", 1},
                {"status", to_string(status_)},
                {"stop_reason", to_string(stop_reason_)},
                {"training", samples_to_json(training_)},
                {"seeds", samples_to_json(seeds_)},
                {"queried", queried_},
                {"history", history},
                {"pending", {{"indices", pending_.indices}, {"scores", pending_.scores}}},
                {"have_distribution", have_distribution_},
                {"last_solve", last_solve_ == SolveStatus::converged ? "converged" : "max_iterations"}};
  if (have_distribution_) {
    MatrixFile f;
    f.rows = distribution_.rows();
    f.cols = static_cast<std::size_t>(distribution_.class_count());
    f.values.resize(f.rows * f.cols);
    for (std::size_t r = 0; r < f.rows; ++r) {
      for (std::size_t c = 0; c < f.cols; ++c) {
        f.values[r * f.cols + c] = distribution_.F(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      }
    }
    write_matrix_file(dir / "F.f64", f, StorageType::float64);
  }
  if (model_.tree_count() > 0) model_.save(dir / "model.bin");

  // state.json last, via rename, so a crash never leaves a half-written state.
  const auto tmp = dir / "state.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << state.dump() << '\n';
  }
  std::filesystem::rename(tmp, dir / "state.json");
}

void ActiveLearner::restore(const std::filesystem::path& dir) {
  std::ifstream in(dir / "state.json");
  if (!in) throw std::runtime_error("no saved active-loop state in " + dir.string());
  const json state = json::parse(in);
  if (state.at("v").get<int>() != 1) throw std::invalid_argument("unsupported active-loop state version");

  training_ = samples_from_json(state.at("training"));
  seeds_ = samples_from_json(state.at("seeds"));
  queried_ = state.at("queried").get<std::vector<std::size_t>>();
  history_.clear();
  for (const auto& h : state.at("history")) {
    history_.push_back({h.at("batch").get<std::size_t>(), h.at("size").get<std::size_t>(),
                        h.at("classifier_errors").get<std::size_t>(), h.at("propagation_errors").get<std::size_t>()});
  }
  pending_.indices = state.at("pending").at("indices").get<std::vector<std::size_t>>();
  pending_.scores = state.at("pending").at("scores").get<std::vector<double>>();
  status_ = status_from(state.at("status").get<std::string>());
  stop_reason_ = stop_reason_from(state.at("stop_reason").get<std::string>());
  last_solve_ = state.value("last_solve", "converged") == "converged" ? SolveStatus::converged
                                                                         : SolveStatus::max_iterations;

  const std::size_t n = node_count();
  labeled_.assign(n, false);
  for (const auto* set : {&training_, &seeds_}) {
    for (const auto& s : *set) {
      if (s.index >= n) throw std::invalid_argument("saved state does not match the node set");
      labeled_[s.index] = true;
    }
  }

  have_distribution_ = state.at("have_distribution").get<bool>();
  if (have_distribution_) {
    const MatrixFile f = read_matrix_file(dir / "F.f64");
    if (f.rows != n || f.cols != static_cast<std::size_t>(cfg_.class_count)) {
      throw std::invalid_argument("saved label distribution does not match the node set");
    }
    distribution_.F.resize(static_cast<Eigen::Index>(f.rows), static_cast<Eigen::Index>(f.cols));
    for (std::size_t r = 0; r < f.rows; ++r) {
      for (std::size_t c = 0; c < f.cols; ++c) {
        distribution_.F(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f.values[r * f.cols + c];
      }
    }
    distribution_.known.assign(n, false);
    for (const auto& s : seeds_) distribution_.known[s.index] = true;
  }
  if (status_ != LoopStatus::idle) {
    model_ = EnsembleModel::load(dir / "model.bin");
    predictions_ = model_.predict_proba(features_);
  }
}

void run_to_completion(ActiveLearner& learner, LabelSource& source,
                       const std::function<void(const ActiveLearner&)>& observer) {
  if (learner.status() == LoopStatus::idle) {
    learner.start();
    if (observer) observer(learner);
  }
  while (!learner.done()) {
    const auto labels = source.answer(learner.pending().indices);
    learner.ingest(labels);
    if (observer) observer(learner);
  }
}

}  // namespace activeseg
