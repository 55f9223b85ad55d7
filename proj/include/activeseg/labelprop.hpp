#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "activeseg/affinity.hpp"

namespace activeseg {

struct SolverConfig {
  double tolerance = 1e-6;  ///< max-abs entry change between iterates
  int max_iterations = 2000;
  double perturbation = 1e-3;  ///< epsilon in (1 - epsilon) D^-1/2 W D^-1/2
  bool warm_start = true;
};

/// S = (1 - epsilon) D^-1/2 W D^-1/2. Symmetric with spectral radius at most
/// 1 - epsilon.
struct Smoother {
  SparseMatrix matrix;
  double epsilon = 0.0;

  std::size_t node_count() const { return static_cast<std::size_t>(matrix.rows()); }
};

Smoother normalized_smoother(const AffinityGraph& graph, double epsilon);

struct LabeledSample {
  std::size_t index;
  int label;
};

/// Label distribution F (rows on the simplex) plus which rows are clamped.
struct LabelDistribution {
  Eigen::MatrixXd F;
  std::vector<bool> known;

  std::size_t rows() const { return static_cast<std::size_t>(F.rows()); }
  int class_count() const { return static_cast<int>(F.cols()); }
  int argmax(std::size_t row) const;
};

enum class SolveStatus { converged, max_iterations };

struct PropagationResult {
  LabelDistribution distribution;
  SolveStatus status = SolveStatus::converged;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
};

/// Clamp known rows, multiply by S, project rows onto the simplex; repeat
/// until the max-abs change drops below tolerance. Non-convergence is
/// reported through status with the last iterate. initial (when given and
/// cfg.warm_start) seeds the iteration.
PropagationResult propagate(const Smoother& smoother, std::span<const LabeledSample> known, int class_count,
                            const LabelDistribution* initial, const SolverConfig& cfg);

/// 2 Tr{F F^T (I - D^-1/2 W D^-1/2)}.
double label_cost(const Eigen::MatrixXd& F, const AffinityGraph& graph);

/// Euclidean projection of v onto {x >= 0, sum x = 1}, in place.
void project_to_simplex(std::span<double> v);

}  // namespace activeseg
