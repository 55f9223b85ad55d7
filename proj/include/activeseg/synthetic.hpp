#pragma once

#include <cstdint>

#include "activeseg/grid.hpp"

namespace activeseg {

/// Parameters of the desk-scale EM-like fixture: Voronoi cells separated by
/// dark width-2 membranes, elliptical mitochondria with border rings, and
/// additive Gaussian noise.
struct SyntheticSpec {
  std::uint64_t seed = 1;
  Dims dims{64, 64, 1};
  int cell_count = 4;
  int mito_count = 2;
  double noise_sigma = 8.0;

  double cytoplasm_level = 175.0;
  double membrane_level = 55.0;
  double mitochondria_level = 100.0;
  double border_level = 70.0;
  /// Thickness of the border ring in voxels.
  int border_width = 2;
  /// Fraction of cell-cell interfaces drawn with reduced contrast.
  double faint_fraction = 0.0;
  double faint_membrane_level = 120.0;
};

struct SyntheticDataset {
  RasterVolume volume;
  LabelVolume labels;
  SegmentationMap bodies;
};

/// Deterministic for a fixed spec. Throws std::invalid_argument if the
/// spec is degenerate or the mitochondria cannot be placed without overlap.
SyntheticDataset generate_synthetic_volume(const SyntheticSpec& spec);

/// The standard fixture used by the CLI and the acceptance checks:
/// 128x128x1, 16 cells, 10 mitochondria, noise 30, a quarter of the cell
/// interfaces faint.
SyntheticSpec fixture_spec(std::uint64_t seed = 1);

}  // namespace activeseg
