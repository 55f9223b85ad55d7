#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "activeseg/features.hpp"

namespace activeseg {

struct ForestConfig {
  int tree_count = 100;
  std::uint64_t seed = 1;
  /// 0 grows trees until leaves are pure or hold fewer than min_samples_split.
  int max_depth = 0;
  int min_samples_split = 2;
};

inline constexpr int kPixelTreeCount = 100;
inline constexpr int kBoundaryTreeCount = 255;

/// Bagged ensemble of randomised Gini trees (sqrt(d) candidate features per
/// split). Immutable once trained.
class EnsembleModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  EnsembleModel() = default;

  /// Throws std::invalid_argument for an empty training set, mismatched
  /// label count or labels outside [0, class_count).
  static EnsembleModel train(const FeatureMatrix& features, std::span<const int> labels, int class_count,
                             const ForestConfig& cfg);

  /// n x class_count, each row on the simplex.
  Eigen::MatrixXd predict_proba(const FeatureMatrix& features) const;
  void predict_row(std::span<const double> features, std::span<double> out) const;

  int tree_count() const { return static_cast<int>(trees_.size()); }
  int class_count() const { return class_count_; }
  int feature_count() const { return feature_count_; }
  std::uint64_t seed() const { return seed_; }

  /// Versioned binary at path plus a JSON sidecar at "<path>.json".
  void save(const std::filesystem::path& path) const;
  static EnsembleModel load(const std::filesystem::path& path);
  std::string serialize() const;
  static EnsembleModel deserialize(const std::string& bytes);

  bool operator==(const EnsembleModel&) const = default;

 private:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t histogram = -1;  // offset of the leaf's class counts

    bool operator==(const Node&) const = default;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<std::uint32_t> counts;

    bool operator==(const Tree&) const = default;
  };

  static Tree grow_tree(const FeatureMatrix& features, std::span<const int> labels, int class_count,
                        const ForestConfig& cfg, int tree_index);
  const Node& leaf_for(const Tree& tree, std::span<const double> x) const;

  std::vector<Tree> trees_;
  int class_count_ = 0;
  int feature_count_ = 0;
  std::uint64_t seed_ = 0;
};

}  // namespace activeseg
