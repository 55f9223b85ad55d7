#pragma once

#include <Eigen/Sparse>
#include <stdexcept>
#include <vector>

#include "activeseg/features.hpp"

namespace activeseg {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Raised when a node ends up with no retained edges.
class IsolatedNodeError : public std::runtime_error {
 public:
  IsolatedNodeError(std::size_t node, const std::string& what) : std::runtime_error(what), node_(node) {}
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

/// Sparse symmetric similarity graph with zero diagonal and positive degrees.
class AffinityGraph {
 public:
  struct Edge {
    std::size_t a;
    std::size_t b;
    double weight;
  };

  AffinityGraph() = default;
  /// Each undirected edge is listed once. Throws std::invalid_argument on
  /// self loops, weights outside (0, 1] or duplicates, and IsolatedNodeError
  /// if a node has no edge.
  static AffinityGraph from_edges(std::size_t node_count, const std::vector<Edge>& edges);

  std::size_t node_count() const { return static_cast<std::size_t>(weights_.rows()); }
  const SparseMatrix& weights() const { return weights_; }
  const Eigen::VectorXd& degrees() const { return degrees_; }
  std::size_t nonzero_count() const { return static_cast<std::size_t>(weights_.nonZeros()); }
  double density() const {
    const double n = static_cast<double>(node_count());
    return n > 0 ? static_cast<double>(nonzero_count()) / (n * n) : 0.0;
  }
  double weight(std::size_t i, std::size_t j) const {
    return weights_.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  SparseMatrix weights_;
  Eigen::VectorXd degrees_;
};

struct GraphConfig {
  /// Fraction of the n^2 matrix entries that should be nonzero.
  double target_density = 0.005;
  /// Edges with weight <= floor are dropped.
  double similarity_floor = 0.0;
};

/// Keeps each node's strongest neighbours (one shared k chosen so that the
/// union-symmetrised graph lands as close as possible to target_density),
/// then drops edges at or below the similarity floor. Uses the bank's
/// diagonal covariance.
AffinityGraph build_affinity_graph(const FeatureMatrix& features, const GraphConfig& cfg);
AffinityGraph build_affinity_graph(const FeatureMatrix& features, const CovarianceModel& cov, const GraphConfig& cfg);

}  // namespace activeseg
