#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace activeseg {

/// Pixel class taxonomy. The order is fixed; membrane is always index 1.
enum class ClassLabel : std::uint8_t {
  cytoplasm = 0,
  membrane = 1,
  mitochondria = 2,
  mitochondria_border = 3,
};

inline constexpr int kClassCount = 4;
inline constexpr int kMembrane = static_cast<int>(ClassLabel::membrane);
inline constexpr int kMitochondria = static_cast<int>(ClassLabel::mitochondria);

std::string_view class_name(ClassLabel label);
ClassLabel class_from_index(int index);

/// Voxel extents. 2D data is a volume with z == 1.
struct Dims {
  std::size_t x = 1;
  std::size_t y = 1;
  std::size_t z = 1;

  std::size_t voxel_count() const { return x * y * z; }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (k * y + j) * x + i; }
  std::array<std::size_t, 3> coords(std::size_t idx) const {
    return {idx % x, (idx / x) % y, idx / (x * y)};
  }
  std::size_t extent(int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  bool valid() const { return x >= 1 && y >= 1 && z >= 1; }

  bool operator==(const Dims&) const = default;
};

/// Calls fn(neighbor_index) for every face-connected neighbour of idx
/// (4-neighbourhood in 2D, 6-neighbourhood in 3D).
template <class Fn>
void for_each_face_neighbor(const Dims& d, std::size_t idx, Fn&& fn) {
  const std::size_t i = idx % d.x;
  const std::size_t j = (idx / d.x) % d.y;
  const std::size_t k = idx / (d.x * d.y);
  const std::size_t plane = d.x * d.y;
  if (i > 0) fn(idx - 1);
  if (i + 1 < d.x) fn(idx + 1);
  if (j > 0) fn(idx - d.x);
  if (j + 1 < d.y) fn(idx + d.x);
  if (k > 0) fn(idx - plane);
  if (k + 1 < d.z) fn(idx + plane);
}

/// Like for_each_face_neighbor but only the +x, +y, +z neighbours, so each
/// face-adjacent pair is visited once.
template <class Fn>
void for_each_forward_neighbor(const Dims& d, std::size_t idx, Fn&& fn) {
  const std::size_t i = idx % d.x;
  const std::size_t j = (idx / d.x) % d.y;
  const std::size_t k = idx / (d.x * d.y);
  if (i + 1 < d.x) fn(idx + 1);
  if (j + 1 < d.y) fn(idx + d.x);
  if (k + 1 < d.z) fn(idx + d.x * d.y);
}

/// 8-bit grayscale voxel grid. Immutable after construction.
class RasterVolume {
 public:
  RasterVolume() = default;
  RasterVolume(Dims dims, std::vector<std::uint8_t> voxels, bool anisotropic = false);

  const Dims& dims() const { return dims_; }
  std::span<const std::uint8_t> voxels() const { return voxels_; }
  std::uint8_t at(std::size_t i, std::size_t j, std::size_t k) const { return voxels_[dims_.index(i, j, k)]; }
  bool anisotropic() const { return anisotropic_; }

  bool operator==(const RasterVolume&) const = default;

 private:
  Dims dims_;
  std::vector<std::uint8_t> voxels_;
  bool anisotropic_ = false;
};

/// Per-voxel class labels (groundtruth or brushed).
struct LabelVolume {
  Dims dims;
  std::vector<ClassLabel> labels;

  bool operator==(const LabelVolume&) const = default;
};

/// Partition of a volume into regions numbered 0..region_count-1.
class SegmentationMap {
 public:
  SegmentationMap() = default;
  /// Validates that ids cover exactly [0, region_count).
  SegmentationMap(Dims dims, std::vector<std::uint32_t> ids);

  /// Renumbers arbitrary ids to a contiguous range, preserving the order of
  /// the original id values.
  static SegmentationMap relabel_sequential(Dims dims, std::span<const std::uint32_t> ids);

  const Dims& dims() const { return dims_; }
  std::span<const std::uint32_t> ids() const { return ids_; }
  std::uint32_t at(std::size_t idx) const { return ids_[idx]; }
  std::uint32_t region_count() const { return region_count_; }

  bool operator==(const SegmentationMap&) const = default;

 private:
  Dims dims_;
  std::vector<std::uint32_t> ids_;
  std::uint32_t region_count_ = 0;
};

/// Per-voxel class confidences; each row lies on the probability simplex.
class ProbabilityField {
 public:
  ProbabilityField() = default;
  /// values is voxel-major (voxel_count x class_count). Throws if a row is
  /// negative or does not sum to 1 within 1e-6.
  ProbabilityField(Dims dims, int class_count, std::vector<double> values);

  const Dims& dims() const { return dims_; }
  int class_count() const { return class_count_; }
  std::span<const double> at(std::size_t idx) const {
    return {values_.data() + idx * static_cast<std::size_t>(class_count_), static_cast<std::size_t>(class_count_)};
  }
  double channel(std::size_t idx, int c) const { return values_[idx * static_cast<std::size_t>(class_count_) + c]; }
  std::span<const double> values() const { return values_; }

 private:
  Dims dims_;
  int class_count_ = 0;
  std::vector<double> values_;
};

/// Extracts a patch of side 2*radius+1 along every non-singleton axis around
/// center, replicating edge voxels outside the volume.
RasterVolume crop_patch(const RasterVolume& volume, std::array<std::size_t, 3> center, std::size_t radius);

}  // namespace activeseg
