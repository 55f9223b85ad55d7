#include "activeseg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace activeseg {

std::string_view class_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::cytoplasm: return "cytoplasm";
    case ClassLabel::membrane: return "membrane";
    case ClassLabel::mitochondria: return "mitochondria";
    case ClassLabel::mitochondria_border: return "mitochondria_border";
  }
  return "unknown";
}

ClassLabel class_from_index(int index) {
  if (index < 0 || index >= kClassCount) {
    throw std::invalid_argument("class index out of range: " + std::to_string(index));
  }
  return static_cast<ClassLabel>(index);
}

RasterVolume::RasterVolume(Dims dims, std::vector<std::uint8_t> voxels, bool anisotropic)
    : dims_(dims), voxels_(std::move(voxels)), anisotropic_(anisotropic) {
  if (!dims_.valid()) throw std::invalid_argument("volume dims must all be >= 1");
  if (voxels_.size() != dims_.voxel_count()) {
    throw std::invalid_argument("voxel count " + std::to_string(voxels_.size()) + " does not match dims product " +
                                std::to_string(dims_.voxel_count()));
  }
}

SegmentationMap::SegmentationMap(Dims dims, std::vector<std::uint32_t> ids) : dims_(dims), ids_(std::move(ids)) {
  if (!dims_.valid()) throw std::invalid_argument("segmentation dims must all be >= 1");
  if (ids_.size() != dims_.voxel_count()) throw std::invalid_argument("segmentation size does not match dims");
  std::uint32_t max_id = 0;
  for (auto id : ids_) max_id = std::max(max_id, id);
  std::vector<bool> seen(static_cast<std::size_t>(max_id) + 1, false);
  for (auto id : ids_) seen[id] = true;
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw std::invalid_argument("segmentation ids are not a contiguous range starting at 0");
  }
  region_count_ = ids_.empty() ? 0 : max_id + 1;
}

SegmentationMap SegmentationMap::relabel_sequential(Dims dims, std::span<const std::uint32_t> ids) {
  std::vector<std::uint32_t> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::uint32_t> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out[i] = static_cast<std::uint32_t>(std::lower_bound(sorted.begin(), sorted.end(), ids[i]) - sorted.begin());
  }
  return SegmentationMap(dims, std::move(out));
}

ProbabilityField::ProbabilityField(Dims dims, int class_count, std::vector<double> values)
    : dims_(dims), class_count_(class_count), values_(std::move(values)) {
  if (class_count_ < 1) throw std::invalid_argument("probability field needs at least one class");
  if (values_.size() != dims_.voxel_count() * static_cast<std::size_t>(class_count_)) {
    throw std::invalid_argument("probability field size does not match dims * class_count");
  }
  for (std::size_t v = 0; v < dims_.voxel_count(); ++v) {
    double sum = 0.0;
    for (double p : at(v)) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("probability entries must be finite and >= 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument("probability row " + std::to_string(v) + " sums to " + std::to_string(sum));
    }
  }
}

RasterVolume crop_patch(const RasterVolume& volume, std::array<std::size_t, 3> center, std::size_t radius) {
  const Dims& d = volume.dims();
  for (int a = 0; a < 3; ++a) {
    if (center[a] >= d.extent(a)) throw std::invalid_argument("patch center outside volume");
  }
  Dims out;
  std::array<std::size_t, 3> side{};
  for (int a = 0; a < 3; ++a) side[a] = d.extent(a) == 1 ? 1 : 2 * radius + 1;
  out = Dims{side[0], side[1], side[2]};

  auto clamp_axis = [&](int axis, std::size_t offset) {
    if (side[axis] == 1) return center[axis];
    const long long pos = static_cast<long long>(center[axis]) + static_cast<long long>(offset) -
                          static_cast<long long>(radius);
    return static_cast<std::size_t>(std::clamp<long long>(pos, 0, static_cast<long long>(d.extent(axis)) - 1));
  };

  std::vector<std::uint8_t> voxels(out.voxel_count());
  for (std::size_t k = 0; k < out.z; ++k) {
    for (std::size_t j = 0; j < out.y; ++j) {
      for (std::size_t i = 0; i < out.x; ++i) {
        voxels[out.index(i, j, k)] = volume.at(clamp_axis(0, i), clamp_axis(1, j), clamp_axis(2, k));
      }
    }
  }
  return RasterVolume(out, std::move(voxels), volume.anisotropic());
}

}  // namespace activeseg
