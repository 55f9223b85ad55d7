#include "activeseg/agglomerate.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace activeseg {

void AgglomerationConfig::validate() const {
  if (!(merge_threshold >= 0.0 && merge_threshold <= 1.0)) throw std::invalid_argument("merge threshold must lie in [0, 1]");
  if (!(inclusion_threshold >= 0.0 && inclusion_threshold <= 1.0)) {
    throw std::invalid_argument("inclusion threshold must lie in [0, 1]");
  }
}

BoundaryScorer model_scorer(const EnsembleModel& model) {
  if (model.class_count() != 2) throw std::invalid_argument("boundary scorer needs a 2-class model");
  return [&model](const RegionAdjacencyGraph& rag, std::uint32_t b) {
    const auto f = boundary_features(rag, b);
    double p[2];
    model.predict_row(f, p);
    return p[kTrueBoundary];
  };
}

namespace {

struct Entry {
  double score;
  std::uint32_t boundary;
  std::uint32_t a;
  std::uint32_t b;
  std::uint64_t version_a;
  std::uint64_t version_b;

  // Min-heap on (score, boundary id).
  bool operator>(const Entry& o) const { return std::tie(score, boundary) > std::tie(o.score, o.boundary); }
};

}  // namespace

std::size_t agglomerate_cytoplasm(RegionAdjacencyGraph& rag, const BoundaryScorer& scorer, double theta,
                                  const MergeObserver& observer) {
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  auto push = [&](std::uint32_t b) {
    const auto& bd = rag.boundary(b);
    queue.push({scorer(rag, b), b, bd.a, bd.b, rag.region(bd.a).version, rag.region(bd.b).version});
  };
  for (auto b : rag.alive_boundaries()) push(b);

  std::size_t merges = 0;
  while (!queue.empty()) {
    const Entry top = queue.top();
    queue.pop();
    const auto& bd = rag.boundary(top.boundary);
    if (!bd.alive || bd.a != top.a || bd.b != top.b || rag.region(top.a).version != top.version_a ||
        rag.region(top.b).version != top.version_b) {
      continue;  // stale
    }
    if (!(top.score < theta)) break;
    if (rag.region(top.a).mito || rag.region(top.b).mito) continue;  // delayed to phase 2

    const std::uint32_t survivor = rag.merge(top.a, top.b);
    const std::uint32_t absorbed = survivor == top.a ? top.b : top.a;
    ++merges;
    if (observer) observer(rag, survivor, absorbed);
    for (const auto& [other, b] : rag.region(survivor).neighbors) {
      (void)other;
      push(b);
    }
  }
  return merges;
}

std::size_t absorb_mitochondria(RegionAdjacencyGraph& rag, double inclusion_threshold,
                                const MergeObserver& observer) {
  std::size_t absorbed = 0;
  for (std::uint32_t r = 0; r < rag.regions().size(); ++r) {
    const auto& region = rag.region(r);
    if (!region.alive || !region.mito) continue;
    std::size_t total = 0;
    for (const auto& [other, b] : region.neighbors) total += rag.boundary(b).voxels.size();
    if (total == 0) continue;

    std::uint32_t best = r;
    std::size_t best_share = 0;
    for (const auto& [other, b] : region.neighbors) {
      if (rag.region(other).mito) continue;
      const std::size_t share = rag.boundary(b).voxels.size();
      if (best == r || share > best_share) {
        best = other;
        best_share = share;
      }
    }
    if (best == r) continue;
    if (static_cast<double>(best_share) / static_cast<double>(total) < inclusion_threshold) continue;

    const std::uint32_t survivor = rag.merge(r, best);
    rag.set_mito(survivor, false);
    ++absorbed;
    if (observer) observer(rag, survivor, survivor == r ? best : r);
  }
  return absorbed;
}

SegmentationMap agglomerate(RegionAdjacencyGraph rag, const BoundaryScorer& scorer, const AgglomerationConfig& cfg) {
  cfg.validate();
  agglomerate_cytoplasm(rag, scorer, cfg.merge_threshold);
  absorb_mitochondria(rag, cfg.inclusion_threshold);
  return rag.segmentation();
}

std::vector<std::pair<double, SegmentationMap>> sweep_thresholds(const RegionAdjacencyGraph& rag,
                                                                 const BoundaryScorer& scorer,
                                                                 std::span<const double> thetas,
                                                                 double inclusion_threshold) {
  if (!std::is_sorted(thetas.begin(), thetas.end())) throw std::invalid_argument("thresholds must be ascending");
  std::vector<std::pair<double, SegmentationMap>> out;
  for (double theta : thetas) {
    out.emplace_back(theta, agglomerate(rag, scorer, {theta, inclusion_threshold}));
  }
  return out;
}

}  // namespace activeseg
