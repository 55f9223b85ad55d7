#include "activeseg/oversegment.hpp"

#include <algorithm>
#include <queue>
#include <tuple>

namespace activeseg {

SeedMask extract_seeds(const ProbabilityField& field, int membrane, const SeedConfig& cfg) {
  if (membrane < 0 || membrane >= field.class_count()) throw std::invalid_argument("membrane class out of range");
  const Dims& d = field.dims();
  const std::size_t n = d.voxel_count();
  std::vector<std::uint32_t> component(n, 0);
  std::vector<std::size_t> sizes{0};
  std::vector<std::size_t> stack;

  std::uint32_t next = 0;
  for (std::size_t start = 0; start < n; ++start) {
    if (component[start] != 0 || !(field.channel(start, membrane) < cfg.threshold)) continue;
    ++next;
    std::size_t size = 0;
    component[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      ++size;
      for_each_face_neighbor(d, v, [&](std::size_t u) {
        if (component[u] == 0 && field.channel(u, membrane) < cfg.threshold) {
          component[u] = next;
          stack.push_back(u);
        }
      });
    }
    sizes.push_back(size);
  }

  std::vector<std::uint32_t> renumber(sizes.size(), 0);
  SeedMask mask;
  mask.dims = d;
  for (std::size_t c = 1; c < sizes.size(); ++c) {
    if (cfg.keep_small || sizes[c] > cfg.min_size) renumber[c] = ++mask.seed_count;
  }
  if (mask.seed_count == 0) throw NoSeedsError("no seed components below the membrane threshold");
  mask.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) mask.ids[i] = renumber[component[i]];
  return mask;
}

SegmentationMap seeded_watershed(const ProbabilityField& field, int membrane, const SeedMask& seeds) {
  if (!(seeds.dims == field.dims())) throw std::invalid_argument("seed mask and field dims differ");
  if (seeds.seed_count == 0) throw NoSeedsError("watershed needs at least one seed");
  const Dims& d = field.dims();
  const std::size_t n = d.voxel_count();

  constexpr std::uint32_t kUnassigned = 0xffffffffu;
  std::vector<std::uint32_t> region(n, kUnassigned);
  for (std::size_t i = 0; i < n; ++i) {
    if (seeds.ids[i] == 0) continue;
    if (seeds.ids[i] > seeds.seed_count) throw std::invalid_argument("seed id exceeds seed_count");
    region[i] = seeds.ids[i] - 1;
  }

  // (level, insertion counter, voxel, region). A voxel's level is the
  // highest p^m met on the way from its seed; the counter makes plateaus FIFO.
  using Entry = std::tuple<double, std::uint64_t, std::size_t, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> flood;
  std::uint64_t counter = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (region[i] == kUnassigned) continue;
    const double level = field.channel(i, membrane);
    for_each_face_neighbor(d, i, [&](std::size_t u) {
      if (region[u] == kUnassigned) flood.emplace(std::max(field.channel(u, membrane), level), counter++, u, region[i]);
    });
  }
  while (!flood.empty()) {
    const auto [priority, order, v, r] = flood.top();
    flood.pop();
    (void)order;
    if (region[v] != kUnassigned) continue;
    region[v] = r;
    for_each_face_neighbor(d, v, [&](std::size_t u) {
      if (region[u] == kUnassigned) flood.emplace(std::max(field.channel(u, membrane), priority), counter++, u, r);
    });
  }
  return SegmentationMap(d, std::move(region));
}

}  // namespace activeseg
