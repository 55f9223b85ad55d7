#include "activeseg/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace activeseg {

AffinityGraph AffinityGraph::from_edges(std::size_t node_count, const std::vector<Edge>& edges) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * edges.size());
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  keys.reserve(edges.size());
  for (const auto& e : edges) {
    if (e.a >= node_count || e.b >= node_count) throw std::invalid_argument("edge endpoint out of range");
    if (e.a == e.b) throw std::invalid_argument("affinity graph must have a zero diagonal");
    if (!(e.weight > 0.0) || e.weight > 1.0) throw std::invalid_argument("edge weight must lie in (0, 1]");
    keys.emplace_back(std::min(e.a, e.b), std::max(e.a, e.b));
    triplets.emplace_back(static_cast<Eigen::Index>(e.a), static_cast<Eigen::Index>(e.b), e.weight);
    triplets.emplace_back(static_cast<Eigen::Index>(e.b), static_cast<Eigen::Index>(e.a), e.weight);
  }
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    throw std::invalid_argument("duplicate edge in affinity graph");
  }

  AffinityGraph g;
  const auto n = static_cast<Eigen::Index>(node_count);
  g.weights_.resize(n, n);
  g.weights_.setFromTriplets(triplets.begin(), triplets.end());
  g.weights_.makeCompressed();
  g.degrees_ = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (SparseMatrix::InnerIterator it(g.weights_, i); it; ++it) g.degrees_(i) += it.value();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(g.degrees_(i) > 0.0)) {
      throw IsolatedNodeError(static_cast<std::size_t>(i),
                              "node " + std::to_string(i) + " has no edge above the similarity floor");
    }
  }
  return g;
}

AffinityGraph build_affinity_graph(const FeatureMatrix& features, const GraphConfig& cfg) {
  return build_affinity_graph(features, CovarianceModel::fit(features), cfg);
}

AffinityGraph build_affinity_graph(const FeatureMatrix& features, const CovarianceModel& cov, const GraphConfig& cfg) {
  if (!(cfg.target_density > 0.0) || cfg.target_density > 1.0) {
    throw std::invalid_argument("target_density must lie in (0, 1]");
  }
  const std::size_t n = static_cast<std::size_t>(features.rows());
  const std::size_t d = static_cast<std::size_t>(features.cols());
  if (n < 2) throw std::invalid_argument("affinity graph needs at least two samples");
  if (d != cov.dimension()) throw std::invalid_argument("covariance dimension does not match features");

  const double target_nnz = cfg.target_density * static_cast<double>(n) * static_cast<double>(n);
  const std::size_t k_max =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(target_nnz / static_cast<double>(n))), 1, n - 1);

  // Strongest k_max neighbours per node, ordered by weight then index.
  using Candidate = std::pair<double, std::size_t>;
  std::vector<std::vector<Candidate>> ranked(n);
  std::vector<Candidate> row;
  row.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    const std::span<const double> fi(features.data() + i * d, d);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      row.emplace_back(gaussian_affinity(fi, {features.data() + j * d, d}, cov), j);
    }
    auto stronger = [](const Candidate& a, const Candidate& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    };
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k_max), row.end(), stronger);
    ranked[i].assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k_max));
  }

  auto union_edges = [&](std::size_t k) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < k; ++r) {
        const std::size_t j = ranked[i][r].second;
        pairs.emplace_back(std::min(i, j), std::max(i, j));
      }
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
  };

  // Smallest k whose symmetrised nonzero count reaches the target, or its
  // predecessor if that is closer.
  std::size_t lo = 1, hi = k_max;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (2.0 * static_cast<double>(union_edges(mid).size()) >= target_nnz) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  std::size_t k = lo;
  if (k > 1) {
    const double above = std::abs(2.0 * static_cast<double>(union_edges(k).size()) - target_nnz);
    const double below = std::abs(2.0 * static_cast<double>(union_edges(k - 1).size()) - target_nnz);
    if (below < above) --k;
  }

  std::vector<AffinityGraph::Edge> edges;
  for (const auto& [a, b] : union_edges(k)) {
    const double w = gaussian_affinity({features.data() + a * d, d}, {features.data() + b * d, d}, cov);
    if (w > cfg.similarity_floor) edges.push_back({a, b, w});
  }
  return AffinityGraph::from_edges(n, edges);
}

}  // namespace activeseg
