#include "activeseg/labelprop.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace activeseg {
namespace {

SparseMatrix normalized_weights(const AffinityGraph& graph, double scale) {
  const auto& d = graph.degrees();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d(i) > 0.0)) throw IsolatedNodeError(static_cast<std::size_t>(i), "zero-degree node in affinity graph");
  }
  SparseMatrix s = graph.weights();
  for (Eigen::Index i = 0; i < s.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(s, i); it; ++it) {
      it.valueRef() = scale * it.value() / std::sqrt(d(it.row()) * d(it.col()));
    }
  }
  return s;
}

}  // namespace

int LabelDistribution::argmax(std::size_t row) const {
  Eigen::Index best = 0;
  F.row(static_cast<Eigen::Index>(row)).maxCoeff(&best);
  return static_cast<int>(best);
}

Smoother normalized_smoother(const AffinityGraph& graph, double epsilon) {
  if (!(epsilon >= 0.0) || epsilon >= 1.0) throw std::invalid_argument("perturbation must lie in [0, 1)");
  return Smoother{normalized_weights(graph, 1.0 - epsilon), epsilon};
}

void project_to_simplex(std::span<double> v) {
  if (v.empty()) return;
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) tau = candidate;
  }
  for (auto& x : v) x = std::max(x - tau, 0.0);
}

PropagationResult propagate(const Smoother& smoother, std::span<const LabeledSample> known, int class_count,
                            const LabelDistribution* initial, const SolverConfig& cfg) {
  const std::size_t n = smoother.node_count();
  if (class_count < 1) throw std::invalid_argument("class_count must be >= 1");
  if (known.empty()) throw std::invalid_argument("label propagation needs at least one known row");
  if (!(cfg.tolerance > 0.0)) throw std::invalid_argument("solver tolerance must be > 0");
  if (cfg.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");

  std::vector<int> clamp_label(n, -1);
  for (const auto& s : known) {
    if (s.index >= n) throw std::invalid_argument("known index out of range");
    if (s.label < 0 || s.label >= class_count) throw std::invalid_argument("known label out of range");
    if (clamp_label[s.index] >= 0 && clamp_label[s.index] != s.label) {
      throw std::invalid_argument("conflicting labels for row " + std::to_string(s.index));
    }
    clamp_label[s.index] = s.label;
  }

  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd F;
  if (initial != nullptr && cfg.warm_start) {
    if (initial->F.rows() != rows || initial->F.cols() != class_count) {
      throw std::invalid_argument("warm-start matrix dimensions do not match");
    }
    F = initial->F;
  } else {
    F = Eigen::MatrixXd::Constant(rows, class_count, 1.0 / class_count);
  }

  auto clamp = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (clamp_label[static_cast<std::size_t>(i)] < 0) continue;
      m.row(i).setZero();
      m(i, clamp_label[static_cast<std::size_t>(i)]) = 1.0;
    }
  };
  clamp(F);

  PropagationResult result;
  result.status = SolveStatus::max_iterations;
  Eigen::MatrixXd next(rows, class_count);
  std::vector<double> buffer(static_cast<std::size_t>(class_count));
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    next.noalias() = smoother.matrix * F;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (int c = 0; c < class_count; ++c) buffer[static_cast<std::size_t>(c)] = next(i, c);
      project_to_simplex(buffer);
      for (int c = 0; c < class_count; ++c) next(i, c) = buffer[static_cast<std::size_t>(c)];
    }
    clamp(next);
    const double residual = (next - F).cwiseAbs().maxCoeff();
    F.swap(next);
    result.iterations = it;
    result.residual = residual;
    result.residual_history.push_back(residual);
    if (residual < cfg.tolerance) {
      result.status = SolveStatus::converged;
      break;
    }
  }

  result.distribution.F = std::move(F);
  result.distribution.known.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.distribution.known[i] = clamp_label[i] >= 0;
  return result;
}

double label_cost(const Eigen::MatrixXd& F, const AffinityGraph& graph) {
  if (static_cast<std::size_t>(F.rows()) != graph.node_count()) {
    throw std::invalid_argument("label matrix rows do not match graph nodes");
  }
  const SparseMatrix normalized = normalized_weights(graph, 1.0);
  const Eigen::MatrixXd smoothed = normalized * F;
  return 2.0 * (F.squaredNorm() - F.cwiseProduct(smoothed).sum());
}

}  // namespace activeseg
