#include "activeseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

namespace activeseg {
namespace {

struct Point {
  double x, y, z;
};

double sq(double v) { return v * v; }

std::vector<Point> place_cell_seeds(const Dims& d, int count, std::mt19937_64& rng) {
  const bool flat = d.z == 1;
  const double volume = static_cast<double>(d.voxel_count());
  double spacing = flat ? 0.6 * std::sqrt(volume / count) : 0.6 * std::cbrt(volume / count);
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(d.x));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(d.y));
  std::uniform_real_distribution<double> uz(0.0, static_cast<double>(d.z));

  std::vector<Point> seeds;
  int attempts = 0;
  while (static_cast<int>(seeds.size()) < count) {
    Point p{std::floor(ux(rng)) + 0.5, std::floor(uy(rng)) + 0.5, flat ? 0.5 : std::floor(uz(rng)) + 0.5};
    bool ok = true;
    for (const auto& s : seeds) {
      if (sq(s.x - p.x) + sq(s.y - p.y) + sq(s.z - p.z) < sq(spacing)) {
        ok = false;
        break;
      }
    }
    if (ok) {
      seeds.push_back(p);
    } else if (++attempts % 1000 == 0) {
      spacing *= 0.9;
    }
  }
  return seeds;
}

}  // namespace

SyntheticDataset generate_synthetic_volume(const SyntheticSpec& spec) {
  const Dims& d = spec.dims;
  if (spec.cell_count < 1) throw std::invalid_argument("cell_count must be >= 1");
  if (spec.mito_count < 0) throw std::invalid_argument("mito_count must be >= 0");
  if (d.x < 16 || d.y < 16 || (d.z != 1 && d.z < 16)) {
    throw std::invalid_argument("synthetic dims must be >= 16 per axis (z may be 1)");
  }
  if (spec.noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
  if (spec.border_width < 1) throw std::invalid_argument("border_width must be >= 1");

  std::mt19937_64 rng(spec.seed);
  const std::size_t n = d.voxel_count();
  const auto seeds = place_cell_seeds(d, spec.cell_count, rng);

  // Voronoi partition; ties go to the lower cell index.
  std::vector<std::uint32_t> cell(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto c = d.coords(v);
    const Point p{c[0] + 0.5, c[1] + 0.5, c[2] + 0.5};
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const double dist = sq(seeds[s].x - p.x) + sq(seeds[s].y - p.y) + sq(seeds[s].z - p.z);
      if (dist < best) {
        best = dist;
        cell[v] = static_cast<std::uint32_t>(s);
      }
    }
  }

  // Both voxels of every face-adjacent cross-cell pair become membrane,
  // which gives ridges of width 2.
  std::vector<ClassLabel> label(n, ClassLabel::cytoplasm);
  std::vector<std::uint32_t> interface_partner(n, std::numeric_limits<std::uint32_t>::max());
  for (std::size_t v = 0; v < n; ++v) {
    for_each_face_neighbor(d, v, [&](std::size_t u) {
      if (cell[u] != cell[v]) {
        label[v] = ClassLabel::membrane;
        interface_partner[v] = std::min(interface_partner[v], cell[u]);
      }
    });
  }

  std::map<std::pair<std::uint32_t, std::uint32_t>, bool> faint;
  std::bernoulli_distribution faint_draw(std::clamp(spec.faint_fraction, 0.0, 1.0));
  for (std::size_t v = 0; v < n; ++v) {
    if (label[v] != ClassLabel::membrane) continue;
    const auto key = std::minmax(cell[v], interface_partner[v]);
    if (!faint.contains(key)) faint[key] = false;
  }
  for (auto& [key, is_faint] : faint) is_faint = faint_draw(rng);

  // Mitochondria: ellipsoidal cores with a border ring, kept one
  // voxel away from membranes and from each other.
  std::vector<std::size_t> interior;
  for (std::size_t v = 0; v < n; ++v) {
    if (label[v] == ClassLabel::cytoplasm) interior.push_back(v);
  }
  const double min_extent = static_cast<double>(d.z == 1 ? std::min(d.x, d.y) : std::min({d.x, d.y, d.z}));
  std::uniform_real_distribution<double> radius_draw(2.0, 2.0 + min_extent / 24.0);
  std::uniform_real_distribution<double> angle_draw(0.0, 3.141592653589793);
  std::uniform_int_distribution<std::size_t> center_draw(0, interior.empty() ? 0 : interior.size() - 1);

  for (int m = 0; m < spec.mito_count; ++m) {
    bool placed = false;
    for (int attempt = 0; attempt < 500 && !placed && !interior.empty(); ++attempt) {
      const auto center = d.coords(interior[center_draw(rng)]);
      const double ra = radius_draw(rng), rb = radius_draw(rng), rc = radius_draw(rng);
      const double angle = angle_draw(rng);
      const double ca = std::cos(angle), sa = std::sin(angle);
      const long reach = static_cast<long>(std::ceil(std::max({ra, rb, rc}))) + 1;
      const std::uint32_t host = cell[d.index(center[0], center[1], center[2])];

      std::vector<std::size_t> core;
      bool ok = true;
      const long z_reach = d.z == 1 ? 0 : reach;
      for (long dz = -z_reach; dz <= z_reach && ok; ++dz) {
        for (long dy = -reach; dy <= reach && ok; ++dy) {
          for (long dx = -reach; dx <= reach && ok; ++dx) {
            const double u = (dx * ca + dy * sa) / ra;
            const double w = (-dx * sa + dy * ca) / rb;
            const double t = d.z == 1 ? 0.0 : dz / rc;
            if (u * u + w * w + t * t > 1.0) continue;
            const long x = static_cast<long>(center[0]) + dx, y = static_cast<long>(center[1]) + dy,
                       z = static_cast<long>(center[2]) + dz;
            if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(d.x) || y >= static_cast<long>(d.y) ||
                z >= static_cast<long>(d.z)) {
              ok = false;
              break;
            }
            core.push_back(d.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)));
          }
        }
      }
      if (!ok || core.empty()) continue;
      std::sort(core.begin(), core.end());

      // border_width rounds of face dilation around the core
      std::vector<std::size_t> ring, shell = core, body = core;
      for (int w = 0; w < spec.border_width; ++w) {
        std::vector<std::size_t> next;
        for (auto v : shell) {
          for_each_face_neighbor(d, v, [&](std::size_t u) {
            if (!std::binary_search(body.begin(), body.end(), u)) next.push_back(u);
          });
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        ring.insert(ring.end(), next.begin(), next.end());
        body.insert(body.end(), next.begin(), next.end());
        std::sort(body.begin(), body.end());
        shell = std::move(next);
      }
      std::sort(ring.begin(), ring.end());

      auto clear_of_others = [&](std::size_t v) {
        if (cell[v] != host || label[v] != ClassLabel::cytoplasm) return false;
        bool clear = true;
        for_each_face_neighbor(d, v, [&](std::size_t u) {
          if (label[u] != ClassLabel::cytoplasm || cell[u] != host) clear = false;
        });
        return clear;
      };
      ok = std::all_of(core.begin(), core.end(), clear_of_others) &&
           std::all_of(ring.begin(), ring.end(), clear_of_others);
      if (!ok) continue;
      for (auto v : core) label[v] = ClassLabel::mitochondria;
      for (auto v : ring) label[v] = ClassLabel::mitochondria_border;
      placed = true;
    }
    if (!placed) throw std::invalid_argument("mito_count too large to place without overlap");
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::uint8_t> voxels(n);
  for (std::size_t v = 0; v < n; ++v) {
    double level = spec.cytoplasm_level;
    switch (label[v]) {
      case ClassLabel::cytoplasm: level = spec.cytoplasm_level; break;
      case ClassLabel::membrane:
        level = faint[std::minmax(cell[v], interface_partner[v])] ? spec.faint_membrane_level : spec.membrane_level;
        break;
      case ClassLabel::mitochondria: level = spec.mitochondria_level; break;
      case ClassLabel::mitochondria_border: level = spec.border_level; break;
    }
    const double value = spec.noise_sigma > 0.0 ? level + spec.noise_sigma * noise(rng) : level;
    voxels[v] = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
  }

  SyntheticDataset out;
  out.volume = RasterVolume(d, std::move(voxels), false);
  out.labels = LabelVolume{d, std::move(label)};
  out.bodies = SegmentationMap(d, std::move(cell));
  return out;
}

SyntheticSpec fixture_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.dims = {128, 128, 1};
  spec.cell_count = 16;
  spec.mito_count = 10;
  spec.noise_sigma = 30.0;
  spec.faint_fraction = 0.25;
  return spec;
}

}  // namespace activeseg
