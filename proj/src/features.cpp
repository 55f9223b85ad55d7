#include "activeseg/features.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "activeseg/grid_io.hpp"

namespace activeseg {
namespace {

// Correlation kernel stored for offsets 0..radius; the negative side is
// mirrored (symmetric) or negated (antisymmetric).
struct Kernel1D {
  std::vector<double> taps;
  bool antisymmetric = false;
  int radius() const { return static_cast<int>(taps.size()) - 1; }
};

Kernel1D smoothing_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  Kernel1D k;
  k.taps.resize(r + 1);
  double total = 0.0;
  for (int i = 0; i <= r; ++i) {
    k.taps[i] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += i == 0 ? k.taps[i] : 2.0 * k.taps[i];
  }
  for (auto& t : k.taps) t /= total;
  return k;
}

// Normalised so that a unit ramp yields 1.
Kernel1D first_derivative_kernel(double sigma) {
  Kernel1D k = smoothing_kernel(sigma);
  k.antisymmetric = true;
  double moment = 0.0;
  for (int i = 0; i <= k.radius(); ++i) {
    k.taps[i] *= i;
    moment += 2.0 * i * k.taps[i];
  }
  for (auto& t : k.taps) t /= moment;
  return k;
}

// Zero-sum, normalised so that x^2 yields 2.
Kernel1D second_derivative_kernel(double sigma) {
  const Kernel1D g = smoothing_kernel(sigma);
  Kernel1D k = g;
  const double s2 = sigma * sigma;
  double sum = 0.0;
  for (int i = 0; i <= k.radius(); ++i) {
    k.taps[i] = (i * i / s2 - 1.0) * g.taps[i] / s2;
    sum += i == 0 ? k.taps[i] : 2.0 * k.taps[i];
  }
  for (int i = 0; i <= k.radius(); ++i) k.taps[i] -= sum * g.taps[i];
  double moment = 0.0;
  for (int i = 1; i <= k.radius(); ++i) moment += 2.0 * i * i * k.taps[i];
  for (auto& t : k.taps) t *= 2.0 / moment;
  return k;
}

// Edge-replicating correlation along one axis. Singleton axes are exact:
// smoothing is the identity, derivatives vanish.
std::vector<double> filter_axis(const std::vector<double>& in, const Dims& d, int axis, const Kernel1D& k) {
  const std::size_t extent = d.extent(axis);
  if (extent == 1) {
    if (k.antisymmetric) return std::vector<double>(in.size(), 0.0);
    // Second-derivative kernels sum to zero; smoothing kernels to one.
    double total = k.taps[0];
    for (int i = 1; i <= k.radius(); ++i) total += 2.0 * k.taps[i];
    if (std::abs(total) < 1e-9) return std::vector<double>(in.size(), 0.0);
    return in;
  }
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? d.x : d.x * d.y);
  std::vector<double> out(in.size());
  const long last = static_cast<long>(extent) - 1;
  const int r = k.radius();
  for (std::size_t base = 0; base < in.size(); ++base) {
    const std::size_t pos = (base / stride) % extent;
    const std::size_t line_start = base - pos * stride;
    double acc = k.antisymmetric ? 0.0 : k.taps[0] * in[base];
    for (int i = 1; i <= r; ++i) {
      const long hi = std::min<long>(static_cast<long>(pos) + i, last);
      const long lo = std::max<long>(static_cast<long>(pos) - i, 0);
      const double a = in[line_start + static_cast<std::size_t>(hi) * stride];
      const double b = in[line_start + static_cast<std::size_t>(lo) * stride];
      acc += k.taps[i] * (k.antisymmetric ? a - b : a + b);
    }
    out[base] = acc;
  }
  return out;
}

std::vector<double> separable(const std::vector<double>& in, const Dims& d, const Kernel1D& kx, const Kernel1D& ky,
                              const Kernel1D& kz) {
  return filter_axis(filter_axis(filter_axis(in, d, 0, kx), d, 1, ky), d, 2, kz);
}

std::string scale_tag(double s) {
  std::ostringstream os;
  os << "s" << s << "_";
  return os.str();
}

}  // namespace

void FeatureBank::validate() const {
  if (names.size() != feature_count()) throw std::invalid_argument("feature name count does not match columns");
  if (!values.allFinite()) throw std::invalid_argument("feature bank contains NaN or Inf");
}

FeatureBank FeatureBank::select_rows(std::span<const std::size_t> rows) const {
  FeatureBank out;
  out.names = names;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= sample_count()) throw std::out_of_range("feature row index out of range");
    out.values.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

void FeatureBank::save(const std::filesystem::path& path) const {
  MatrixFile m;
  m.rows = sample_count();
  m.cols = feature_count();
  m.names = names;
  m.values.assign(values.data(), values.data() + values.size());
  write_matrix_file(path, m);
}

FeatureBank FeatureBank::load(const std::filesystem::path& path) {
  MatrixFile m = read_matrix_file(path);
  FeatureBank bank;
  bank.names = m.names;
  bank.values = Eigen::Map<const FeatureMatrix>(m.values.data(), static_cast<Eigen::Index>(m.rows),
                                                static_cast<Eigen::Index>(m.cols));
  bank.validate();
  return bank;
}

FeatureBank compute_pixel_features(const RasterVolume& volume, std::span<const double> scales) {
  if (scales.empty()) throw std::invalid_argument("at least one feature scale is required");
  const Dims& d = volume.dims();
  std::size_t smallest = 0;
  for (int a = 0; a < 3; ++a) {
    if (d.extent(a) > 1 && (smallest == 0 || d.extent(a) < smallest)) smallest = d.extent(a);
  }
  for (double s : scales) {
    if (!(s > 0.0)) throw std::invalid_argument("feature scales must be > 0");
    if (smallest > 0 && s > 0.5 * static_cast<double>(smallest)) {
      throw std::invalid_argument("feature scale larger than half the smallest volume extent");
    }
  }

  const std::size_t n = d.voxel_count();
  const std::vector<double> raw(volume.voxels().begin(), volume.voxels().end());

  FeatureBank bank;
  bank.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kFeaturesPerScale * scales.size()));
  for (std::size_t si = 0; si < scales.size(); ++si) {
    const double sigma = scales[si];
    const Kernel1D g = smoothing_kernel(sigma);
    const Kernel1D d1 = first_derivative_kernel(sigma);
    const Kernel1D d2 = second_derivative_kernel(sigma);

    const auto smooth = separable(raw, d, g, g, g);
    const auto gx = separable(raw, d, d1, g, g);
    const auto gy = separable(raw, d, g, d1, g);
    const auto gz = separable(raw, d, g, g, d1);
    const auto hxx = separable(raw, d, d2, g, g);
    const auto hyy = separable(raw, d, g, d2, g);
    const auto hzz = separable(raw, d, g, g, d2);
    const auto hxy = separable(raw, d, d1, d1, g);
    const auto hxz = separable(raw, d, d1, g, d1);
    const auto hyz = separable(raw, d, g, d1, d1);

    std::vector<double> pxx(n), pyy(n), pzz(n), pxy(n), pxz(n), pyz(n);
    for (std::size_t v = 0; v < n; ++v) {
      pxx[v] = gx[v] * gx[v];
      pyy[v] = gy[v] * gy[v];
      pzz[v] = gz[v] * gz[v];
      pxy[v] = gx[v] * gy[v];
      pxz[v] = gx[v] * gz[v];
      pyz[v] = gy[v] * gz[v];
    }
    const auto sxx = separable(pxx, d, g, g, g);
    const auto syy = separable(pyy, d, g, g, g);
    const auto szz = separable(pzz, d, g, g, g);
    const auto sxy = separable(pxy, d, g, g, g);
    const auto sxz = separable(pxz, d, g, g, g);
    const auto syz = separable(pyz, d, g, g, g);

    const Eigen::Index col = static_cast<Eigen::Index>(si * kFeaturesPerScale);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
    for (std::size_t v = 0; v < n; ++v) {
      const auto row = static_cast<Eigen::Index>(v);
      bank.values(row, col + 0) = smooth[v];
      bank.values(row, col + 1) = std::sqrt(gx[v] * gx[v] + gy[v] * gy[v] + gz[v] * gz[v]);
      bank.values(row, col + 2) = hxx[v] + hyy[v] + hzz[v];

      Eigen::Matrix3d h;
      h << hxx[v], hxy[v], hxz[v], hxy[v], hyy[v], hyz[v], hxz[v], hyz[v], hzz[v];
      solver.computeDirect(h, Eigen::EigenvaluesOnly);
      for (int e = 0; e < 3; ++e) bank.values(row, col + 3 + e) = solver.eigenvalues()(2 - e);

      Eigen::Matrix3d st;
      st << sxx[v], sxy[v], sxz[v], sxy[v], syy[v], syz[v], sxz[v], syz[v], szz[v];
      solver.computeDirect(st, Eigen::EigenvaluesOnly);
      for (int e = 0; e < 3; ++e) bank.values(row, col + 6 + e) = solver.eigenvalues()(2 - e);
    }

    const std::string tag = scale_tag(sigma);
    for (const char* name : {"smooth", "gradient_magnitude", "laplacian", "hessian_ev0", "hessian_ev1", "hessian_ev2",
                             "structure_ev0", "structure_ev1", "structure_ev2"}) {
      bank.names.push_back(tag + name);
    }
  }
  bank.validate();
  return bank;
}

CovarianceModel::CovarianceModel(std::vector<double> variances) : variances_(std::move(variances)) {
  inverse_.resize(variances_.size());
  for (std::size_t i = 0; i < variances_.size(); ++i) {
    if (!std::isfinite(variances_[i])) throw std::invalid_argument("variance must be finite");
    variances_[i] = std::max(variances_[i], kVarianceFloor);
    inverse_[i] = 1.0 / variances_[i];
  }
}

CovarianceModel CovarianceModel::fit(const FeatureMatrix& values) {
  const Eigen::Index n = values.rows();
  std::vector<double> var(static_cast<std::size_t>(values.cols()), 0.0);
  if (n > 1) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double mean = values.col(c).mean();
      var[static_cast<std::size_t>(c)] = (values.col(c).array() - mean).square().sum() / static_cast<double>(n - 1);
    }
  }
  return CovarianceModel(std::move(var));
}

double gaussian_affinity(std::span<const double> a, std::span<const double> b, const CovarianceModel& cov) {
  if (a.size() != b.size() || a.size() != cov.dimension()) {
    throw std::invalid_argument("gaussian_affinity dimension mismatch");
  }
  const auto& inv = cov.inverse_variances();
  double q = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    q += diff * diff * inv[i];
  }
  return std::exp(-0.5 * q);
}

}  // namespace activeseg
