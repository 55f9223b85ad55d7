#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "activeseg/grid.hpp"

namespace activeseg {

/// Where an id stack (class labels or body ids) lives on disk.
///  - raw:   one little-endian uint32 file plus "<path>.json" dims header
///  - png16: one 16-bit grayscale PNG per plane
struct IdStackRef {
  enum class Format { raw, png16 };
  Format format = Format::raw;
  std::vector<std::filesystem::path> paths;
};

/// JSON dataset description. Relative paths resolve against base_dir.
struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<std::filesystem::path> image_planes;
  std::optional<IdStackRef> labels;
  std::optional<IdStackRef> segmentation;
  std::array<double, 3> resolution_nm{1.0, 1.0, 1.0};
  bool anisotropic = false;

  static DatasetManifest load(const std::filesystem::path& manifest_path);
  void save(const std::filesystem::path& manifest_path) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Reads the image stack. Throws std::runtime_error for missing files and
/// std::invalid_argument for empty stacks, inconsistent plane sizes or
/// anything other than single-channel 8-bit PNGs.
RasterVolume load_volume(const DatasetManifest& manifest);
LabelVolume load_labels(const DatasetManifest& manifest);
SegmentationMap load_segmentation(const DatasetManifest& manifest);

/// Writes plane PNGs, optional label and segmentation grids and a manifest
/// into dir; returns the manifest path.
std::filesystem::path save_dataset(const std::filesystem::path& dir, const RasterVolume& volume,
                                   const LabelVolume* labels = nullptr, const SegmentationMap* segmentation = nullptr);

struct IdGrid {
  Dims dims;
  std::vector<std::uint32_t> ids;
};

void write_id_grid(const std::filesystem::path& path, const Dims& dims, std::span<const std::uint32_t> ids);
IdGrid read_id_grid(const std::filesystem::path& path);
void write_id_stack_png16(const std::vector<std::filesystem::path>& planes, const Dims& dims,
                          std::span<const std::uint32_t> ids);
IdGrid read_id_stack(const IdStackRef& ref, const DatasetManifest* manifest = nullptr);

void write_segmentation(const std::filesystem::path& path, const SegmentationMap& seg);
SegmentationMap read_segmentation(const std::filesystem::path& path);

/// Row-major real matrix with a JSON header at "<path>.json":
///   {"v":1, "n":rows, "d":cols, "names":[...], "dtype":"float32le"|"float64le", ...extra}
struct MatrixFile {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::string> names;
  std::vector<double> values;
  std::string extra_json = "{}";  // merged into the header object
};

enum class StorageType { float32, float64 };

void write_matrix_file(const std::filesystem::path& path, const MatrixFile& m, StorageType type = StorageType::float32);
MatrixFile read_matrix_file(const std::filesystem::path& path);

/// Probability fields persist as a matrix file whose header carries "dims".
/// Rows are renormalised after the float32 round trip.
void write_probability_field(const std::filesystem::path& path, const ProbabilityField& field);
ProbabilityField read_probability_field(const std::filesystem::path& path);

std::filesystem::path header_path(const std::filesystem::path& data_path);

}  // namespace activeseg
