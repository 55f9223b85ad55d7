#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "activeseg/grid.hpp"

namespace activeseg {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n samples x d real-valued features with per-column names.
struct FeatureBank {
  FeatureMatrix values;
  std::vector<std::string> names;

  std::size_t sample_count() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t feature_count() const { return static_cast<std::size_t>(values.cols()); }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * feature_count(), feature_count()};
  }

  /// Throws std::invalid_argument on NaN/Inf or a names/column mismatch.
  void validate() const;
  FeatureBank select_rows(std::span<const std::size_t> rows) const;

  void save(const std::filesystem::path& path) const;
  static FeatureBank load(const std::filesystem::path& path);
};

inline constexpr int kFeaturesPerScale = 9;
inline const std::vector<double> kDefaultScales{1.0, 2.0, 4.0};

/// Per voxel and per scale: Gaussian-smoothed intensity, gradient magnitude,
/// Laplacian of Gaussian, the three Hessian eigenvalues and the three
/// structure-tensor eigenvalues (eigenvalues sorted descending). Singleton
/// axes (z for 2D data) contribute zero derivatives, so d is always
/// 9 * scales.size().
///
/// Throws std::invalid_argument for an empty scale list, a non-positive
/// scale, or a scale larger than half the smallest non-singleton extent.
FeatureBank compute_pixel_features(const RasterVolume& volume, std::span<const double> scales = kDefaultScales);

/// Diagonal covariance of a feature bank, with a variance floor so that the
/// inverse always exists.
class CovarianceModel {
 public:
  static constexpr double kVarianceFloor = 1e-8;

  CovarianceModel() = default;
  explicit CovarianceModel(std::vector<double> variances);
  static CovarianceModel fit(const FeatureMatrix& values);

  const std::vector<double>& variances() const { return variances_; }
  const std::vector<double>& inverse_variances() const { return inverse_; }
  std::size_t dimension() const { return variances_.size(); }

 private:
  std::vector<double> variances_;
  std::vector<double> inverse_;
};

/// exp(-1/2 (a-b)^T Sigma^-1 (a-b)) for a diagonal Sigma.
double gaussian_affinity(std::span<const double> a, std::span<const double> b, const CovarianceModel& cov);

}  // namespace activeseg
