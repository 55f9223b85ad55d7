#include "activeseg/active_pixel.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace activeseg {

std::vector<double> margin_wrt_membrane(std::span<const double> p, int membrane) {
  if (p.empty()) throw std::invalid_argument("empty confidence vector");
  if (membrane < 0 || static_cast<std::size_t>(membrane) >= p.size()) {
    throw std::invalid_argument("membrane class out of range");
  }
  std::size_t a = 0;
  for (std::size_t c = 1; c < p.size(); ++c) {
    if (p[c] > p[a]) a = c;
  }
  const auto m = static_cast<std::size_t>(membrane);
  std::vector<double> margin(p.size(), 0.0);
  margin[a] = a == m ? p[m] : p[a] - p[m];
  return margin;
}

double pixel_disagreement(std::span<const double> g, std::span<const double> p) {
  if (g.size() != p.size()) throw std::invalid_argument("margin vectors differ in length");
  double delta = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) delta += (g[c] - p[c]) * (g[c] - p[c]);
  return delta;
}

double pixel_row_disagreement(std::span<const double> classifier, std::span<const double> propagation, int membrane) {
  return pixel_disagreement(margin_wrt_membrane(propagation, membrane), margin_wrt_membrane(classifier, membrane));
}

double graph_volume(const AffinityGraph& graph, std::span<const std::size_t> nodes) {
  double vol = 0.0;
  for (auto i : nodes) vol += graph.degrees()(static_cast<Eigen::Index>(i));
  return vol;
}

std::vector<std::size_t> select_initial_subset(const AffinityGraph& graph, std::span<const LabeledSample> pool,
                                               int membrane) {
  const std::size_t n = graph.node_count();
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> membrane_nodes;
  int max_label = membrane;
  for (const auto& s : pool) {
    if (s.index >= n) throw std::invalid_argument("pool node out of range");
    if (s.label < 0) throw std::invalid_argument("negative pool label");
    if (seen[s.index]) throw std::invalid_argument("duplicate pool node " + std::to_string(s.index));
    seen[s.index] = true;
    if (s.label == membrane) membrane_nodes.push_back(s.index);
    max_label = std::max(max_label, s.label);
  }
  if (membrane_nodes.empty()) throw std::invalid_argument("initial pool has no membrane samples");

  const double membrane_volume = graph_volume(graph, membrane_nodes);
  std::vector<double> cut(n, 0.0);
  const auto& w = graph.weights();
  for (auto j : membrane_nodes) {
    for (SparseMatrix::InnerIterator it(w, static_cast<Eigen::Index>(j)); it; ++it) {
      cut[static_cast<std::size_t>(it.col())] += it.value();
    }
  }

  std::vector<bool> keep(n, false);
  for (auto j : membrane_nodes) keep[j] = true;
  for (int o = 0; o <= max_label; ++o) {
    if (o == membrane) continue;
    std::vector<std::size_t> candidates;
    for (const auto& s : pool) {
      if (s.label == o) candidates.push_back(s.index);
    }
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
      return cut[a] != cut[b] ? cut[a] > cut[b] : a < b;
    });
    double volume = 0.0;
    for (auto i : candidates) {
      const double next = volume + graph.degrees()(static_cast<Eigen::Index>(i));
      if (next > membrane_volume) break;
      volume = next;
      keep[i] = true;
    }
  }

  std::vector<std::size_t> out;
  for (const auto& s : pool) {
    if (keep[s.index]) out.push_back(s.index);
  }
  return out;
}

std::vector<std::size_t> select_initial_subset(const AffinityGraph& graph, std::span<const int> node_labels,
                                               int membrane) {
  if (node_labels.size() != graph.node_count()) throw std::invalid_argument("one label per graph node expected");
  std::vector<LabeledSample> pool;
  for (std::size_t i = 0; i < node_labels.size(); ++i) pool.push_back({i, node_labels[i]});
  return select_initial_subset(graph, pool, membrane);
}

PixelProblem prepare_pixel_problem(const FeatureBank& bank, std::span<const VoxelLabel> pool,
                                   const PixelLoopConfig& cfg) {
  const std::size_t n = bank.sample_count();
  if (pool.empty()) throw std::invalid_argument("brushed pool is empty");
  std::vector<int> pool_label(n, -1);
  for (const auto& v : pool) {
    if (v.voxel >= n) throw std::invalid_argument("brushed voxel outside the volume");
    if (v.label < 0 || v.label >= kClassCount) throw std::invalid_argument("brushed label out of range");
    if (pool_label[v.voxel] >= 0 && pool_label[v.voxel] != v.label) {
      throw std::invalid_argument("conflicting labels for voxel " + std::to_string(v.voxel));
    }
    pool_label[v.voxel] = v.label;
  }

  std::vector<std::size_t> nodes;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i) (pool_label[i] >= 0 ? nodes : rest).push_back(i);
  const std::size_t extra = cfg.subsample_size > nodes.size() ? std::min(cfg.subsample_size - nodes.size(), rest.size()) : 0;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = 0; i < extra; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, rest.size() - 1);
    std::swap(rest[i], rest[pick(rng)]);
    nodes.push_back(rest[i]);
  }
  std::sort(nodes.begin(), nodes.end());

  PixelProblem problem;
  problem.nodes = nodes;
  problem.node_features.resize(static_cast<Eigen::Index>(nodes.size()), bank.values.cols());
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    problem.node_features.row(static_cast<Eigen::Index>(r)) = bank.values.row(static_cast<Eigen::Index>(nodes[r]));
    if (pool_label[nodes[r]] >= 0) problem.pool.push_back({r, pool_label[nodes[r]]});
  }
  problem.graph = build_affinity_graph(problem.node_features, cfg.graph);
  const auto chosen = select_initial_subset(problem.graph, problem.pool, kMembrane);
  std::vector<bool> is_chosen(nodes.size(), false);
  for (auto c : chosen) is_chosen[c] = true;
  for (const auto& s : problem.pool) {
    if (is_chosen[s.index]) problem.selected.push_back(s);
  }
  return problem;
}

ActiveLearner make_pixel_learner(const PixelProblem& problem, const PixelLoopConfig& cfg) {
  ActiveLoopConfig loop;
  loop.class_count = kClassCount;
  loop.batch_size = cfg.batch_size;
  loop.label_budget = cfg.batch_size * cfg.budget_batches;
  loop.forest = cfg.forest;
  loop.solver = cfg.solver;
  auto disagreement = [](std::span<const double> p, std::span<const double> g) {
    return pixel_row_disagreement(p, g, kMembrane);
  };
  return ActiveLearner(problem.node_features, normalized_smoother(problem.graph, cfg.solver.perturbation),
                       disagreement, loop, problem.selected, problem.pool);
}

std::vector<int> node_truth(const PixelProblem& problem, const LabelVolume& truth) {
  std::vector<int> out;
  out.reserve(problem.nodes.size());
  for (auto v : problem.nodes) {
    if (v >= truth.labels.size()) throw std::invalid_argument("groundtruth smaller than the feature bank");
    out.push_back(static_cast<int>(truth.labels[v]));
  }
  return out;
}

std::vector<VoxelLabel> sample_brush_pool(const LabelVolume& truth, std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<VoxelLabel> pool;
  for (int c = 0; c < kClassCount; ++c) {
    std::vector<std::size_t> voxels;
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
      if (static_cast<int>(truth.labels[i]) == c) voxels.push_back(i);
    }
    const std::size_t take = std::min(per_class, voxels.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, voxels.size() - 1);
      std::swap(voxels[i], voxels[pick(rng)]);
    }
    voxels.resize(take);
    std::sort(voxels.begin(), voxels.end());
    for (auto v : voxels) pool.push_back({v, c});
  }
  return pool;
}

ProbabilityField predict_field(const EnsembleModel& model, const FeatureBank& bank, const Dims& dims) {
  if (bank.sample_count() != dims.voxel_count()) throw std::invalid_argument("feature bank does not cover the volume");
  const Eigen::MatrixXd p = model.predict_proba(bank.values);
  std::vector<double> values(static_cast<std::size_t>(p.size()));
  const auto k = static_cast<std::size_t>(p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) values[static_cast<std::size_t>(i) * k + static_cast<std::size_t>(c)] = p(i, c);
  }
  return ProbabilityField(dims, static_cast<int>(k), std::move(values));
}

PixelLoopResult run_pixel_loop(const PixelProblem& problem, LabelSource& source, const PixelLoopConfig& cfg,
                               const std::function<void(const ActiveLearner&)>& observer) {
  ActiveLearner learner = make_pixel_learner(problem, cfg);
  run_to_completion(learner, source, observer);
  return {learner.model(), learner.training_set(), learner.queried(), learner.batches_done()};
}

}  // namespace activeseg
