#include "activeseg/rag.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace activeseg {

void ChannelStats::add(double v) {
  if (count == 0) {
    min = max = v;
  } else {
    min = std::min(min, v);
    max = std::max(max, v);
  }
  ++count;
  sum += v;
  sum_sq += v * v;
  const int bin = std::clamp(static_cast<int>(std::floor(v * kHistogramBins)), 0, kHistogramBins - 1);
  ++histogram[static_cast<std::size_t>(bin)];
}

void ChannelStats::merge(const ChannelStats& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  count += other.count;
  sum += other.sum;
  sum_sq += other.sum_sq;
  min = std::min(min, other.min);
  max = std::max(max, other.max);
  for (int b = 0; b < kHistogramBins; ++b) histogram[static_cast<std::size_t>(b)] += other.histogram[static_cast<std::size_t>(b)];
}

double ChannelStats::mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }

double ChannelStats::stddev() const {
  if (count == 0) return 0.0;
  const double m = mean();
  return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(count) - m * m));
}

double ChannelStats::quantile(double q) const {
  if (count == 0) return 0.0;
  const double rank = std::max(1.0, std::ceil(q * static_cast<double>(count)));
  double before = 0.0;
  for (int b = 0; b < kHistogramBins; ++b) {
    const double in_bin = static_cast<double>(histogram[static_cast<std::size_t>(b)]);
    if (before + in_bin >= rank) {
      const double lo = static_cast<double>(b) / kHistogramBins;
      const double value = lo + (rank - before) / in_bin / kHistogramBins;
      return std::clamp(value, min, max);
    }
    before += in_bin;
  }
  return max;
}

MergeableStats MergeableStats::over(const ProbabilityField& field, std::span<const std::size_t> voxels) {
  MergeableStats s;
  s.channels.resize(static_cast<std::size_t>(field.class_count()));
  for (auto v : voxels) s.add_voxel(field, v);
  return s;
}

void MergeableStats::add_voxel(const ProbabilityField& field, std::size_t voxel) {
  if (channels.size() != static_cast<std::size_t>(field.class_count())) {
    channels.resize(static_cast<std::size_t>(field.class_count()));
  }
  const auto p = field.at(voxel);
  for (std::size_t c = 0; c < channels.size(); ++c) channels[c].add(p[c]);
}

void MergeableStats::merge(const MergeableStats& other) {
  if (channels.empty()) channels.resize(other.channels.size());
  if (channels.size() != other.channels.size()) throw std::invalid_argument("stats channel counts differ");
  for (std::size_t c = 0; c < channels.size(); ++c) channels[c].merge(other.channels[c]);
}

int MergeableStats::argmax_mean() const {
  int best = 0;
  for (std::size_t c = 1; c < channels.size(); ++c) {
    if (channels[c].mean() > channels[static_cast<std::size_t>(best)].mean()) best = static_cast<int>(c);
  }
  return best;
}

RegionAdjacencyGraph RegionAdjacencyGraph::build(const SegmentationMap& seg, const ProbabilityField& field,
                                                 int mito_channel) {
  if (!(seg.dims() == field.dims())) throw std::invalid_argument("segmentation and probability field dims differ");
  RegionAdjacencyGraph g;
  g.seg_ = seg;
  g.class_count_ = field.class_count();
  g.mito_channel_ = mito_channel < field.class_count() ? mito_channel : -1;
  const Dims& d = seg.dims();
  const std::size_t n = d.voxel_count();
  const std::uint32_t regions = seg.region_count();

  g.member_voxels_.assign(regions, {});
  g.regions_.resize(regions);
  for (std::uint32_t r = 0; r < regions; ++r) {
    g.regions_[r].stats.channels.resize(static_cast<std::size_t>(g.class_count_));
    g.regions_[r].members = {r};
  }
  for (std::size_t v = 0; v < n; ++v) {
    const std::uint32_t r = seg.at(v);
    g.member_voxels_[r].push_back(v);
    ++g.regions_[r].size;
    g.regions_[r].stats.add_voxel(field, v);
  }

  auto boundary_of = [&](std::uint32_t r1, std::uint32_t r2) -> std::uint32_t {
    const std::uint32_t a = std::min(r1, r2), b = std::max(r1, r2);
    auto it = g.regions_[a].neighbors.find(b);
    if (it != g.regions_[a].neighbors.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(g.boundaries_.size());
    Boundary bd;
    bd.a = a;
    bd.b = b;
    bd.stats.channels.resize(static_cast<std::size_t>(g.class_count_));
    g.boundaries_.push_back(std::move(bd));
    g.regions_[a].neighbors.emplace(b, id);
    g.regions_[b].neighbors.emplace(a, id);
    return id;
  };

  // Create boundaries in scan order of their first adjacent pair so ids are
  // deterministic, then assign voxels.
  for (std::size_t v = 0; v < n; ++v) {
    for_each_forward_neighbor(d, v, [&](std::size_t u) {
      if (seg.at(u) != seg.at(v)) boundary_of(seg.at(v), seg.at(u));
    });
  }
  for (std::size_t v = 0; v < n; ++v) {
    std::uint32_t lowest = std::numeric_limits<std::uint32_t>::max();
    for_each_face_neighbor(d, v, [&](std::size_t u) {
      if (seg.at(u) != seg.at(v)) lowest = std::min(lowest, seg.at(u));
    });
    if (lowest == std::numeric_limits<std::uint32_t>::max()) continue;
    Boundary& bd = g.boundaries_[boundary_of(seg.at(v), lowest)];
    bd.voxels.push_back(v);
    bd.stats.add_voxel(field, v);
  }
  for (std::uint32_t r = 0; r < regions; ++r) g.retag(r);
  return g;
}

void RegionAdjacencyGraph::retag(std::uint32_t r) {
  Region& reg = regions_[r];
  reg.mito = mito_channel_ >= 0 && reg.stats.argmax_mean() == mito_channel_;
}

std::vector<std::uint32_t> RegionAdjacencyGraph::alive_boundaries() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t b = 0; b < boundaries_.size(); ++b) {
    if (boundaries_[b].alive) out.push_back(b);
  }
  return out;
}

std::size_t RegionAdjacencyGraph::alive_region_count() const {
  return static_cast<std::size_t>(std::count_if(regions_.begin(), regions_.end(), [](const Region& r) { return r.alive; }));
}

std::uint32_t RegionAdjacencyGraph::merge(std::uint32_t r1, std::uint32_t r2) {
  if (r1 == r2) throw std::invalid_argument("cannot merge a region with itself");
  if (r1 >= regions_.size() || r2 >= regions_.size() || !regions_[r1].alive || !regions_[r2].alive) {
    throw std::invalid_argument("merge of a dead or unknown region");
  }
  const std::uint32_t keep = std::min(r1, r2), gone = std::max(r1, r2);
  Region& s = regions_[keep];
  Region& t = regions_[gone];

  if (auto it = s.neighbors.find(gone); it != s.neighbors.end()) {
    boundaries_[it->second].alive = false;
    s.neighbors.erase(it);
    t.neighbors.erase(keep);
  }
  for (const auto& [other, bid] : t.neighbors) {
    Region& o = regions_[other];
    o.neighbors.erase(gone);
    auto existing = s.neighbors.find(other);
    if (existing != s.neighbors.end()) {
      Boundary& into = boundaries_[existing->second];
      Boundary& from = boundaries_[bid];
      into.stats.merge(from.stats);
      into.voxels.insert(into.voxels.end(), from.voxels.begin(), from.voxels.end());
      from.alive = false;
      from.voxels.clear();
    } else {
      Boundary& moved = boundaries_[bid];
      moved.a = std::min(keep, other);
      moved.b = std::max(keep, other);
      s.neighbors.emplace(other, bid);
      o.neighbors.emplace(keep, bid);
    }
  }
  t.neighbors.clear();

  s.size += t.size;
  s.stats.merge(t.stats);
  s.members.insert(s.members.end(), t.members.begin(), t.members.end());
  ++s.version;
  retag(keep);
  t.alive = false;
  t.members.clear();
  ++t.version;
  return keep;
}

std::vector<std::size_t> RegionAdjacencyGraph::region_voxels(std::uint32_t r) const {
  std::vector<std::size_t> out;
  for (auto m : regions_.at(r).members) out.insert(out.end(), member_voxels_[m].begin(), member_voxels_[m].end());
  std::sort(out.begin(), out.end());
  return out;
}

SegmentationMap RegionAdjacencyGraph::segmentation() const {
  std::vector<std::uint32_t> owner(member_voxels_.size(), 0);
  std::uint32_t next = 0;
  for (std::uint32_t r = 0; r < regions_.size(); ++r) {
    if (!regions_[r].alive) continue;
    for (auto m : regions_[r].members) owner[m] = next;
    ++next;
  }
  std::vector<std::uint32_t> ids(seg_.ids().size());
  for (std::size_t v = 0; v < ids.size(); ++v) ids[v] = owner[seg_.at(v)];
  return SegmentationMap(seg_.dims(), std::move(ids));
}

std::string RegionAdjacencyGraph::to_json() const {
  auto summary = [](const MergeableStats& s) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : s.channels) {
      out.push_back({{"mean", c.mean()}, {"std", c.stddev()}, {"min", c.min}, {"q25", c.quantile(0.25)},
                     {"median", c.quantile(0.5)}, {"q75", c.quantile(0.75)}});
    }
    return out;
  };
  nlohmann::json regions = nlohmann::json::array();
  for (std::uint32_t r = 0; r < regions_.size(); ++r) {
    if (!regions_[r].alive) continue;
    regions.push_back({{"id", r}, {"size", regions_[r].size}, {"mito", regions_[r].mito}, {"stats", summary(regions_[r].stats)}});
  }
  nlohmann::json boundaries = nlohmann::json::array();
  for (auto b : alive_boundaries()) {
    const auto& bd = boundaries_[b];
    boundaries.push_back({{"id", b}, {"regions", {bd.a, bd.b}}, {"size", bd.voxels.size()}, {"stats", summary(bd.stats)}});
  }
  return nlohmann::json{{"v", 1}, {"class_count", class_count_}, {"regions", regions}, {"boundaries", boundaries}}.dump();
}

namespace {

void append_summary(std::vector<double>& out, const ChannelStats& c) {
  out.insert(out.end(), {c.mean(), c.stddev(), c.min, c.quantile(0.25), c.quantile(0.5), c.quantile(0.75)});
}

}  // namespace

std::size_t boundary_feature_count(int class_count) {
  return static_cast<std::size_t>(class_count) * 4 * kSummaryPerChannel + 3;
}

std::vector<std::string> boundary_feature_names(int class_count) {
  static const char* stat_names[kSummaryPerChannel] = {"mean", "std", "min", "q25", "median", "q75"};
  std::vector<std::string> names;
  for (int c = 0; c < class_count; ++c) {
    for (const char* part : {"boundary", "region1", "region2", "absdiff"}) {
      for (const char* s : stat_names) names.push_back("c" + std::to_string(c) + "_" + part + "_" + s);
    }
  }
  names.insert(names.end(), {"boundary_size", "region1_size", "region2_size"});
  return names;
}

std::vector<double> boundary_features(const RegionAdjacencyGraph& rag, std::uint32_t boundary) {
  const auto& bd = rag.boundary(boundary);
  if (!bd.alive) throw std::invalid_argument("boundary " + std::to_string(boundary) + " no longer exists");
  const auto* r1 = &rag.region(bd.a);
  const auto* r2 = &rag.region(bd.b);
  if (r2->size < r1->size) std::swap(r1, r2);

  std::vector<double> out;
  out.reserve(boundary_feature_count(rag.class_count()));
  for (std::size_t c = 0; c < static_cast<std::size_t>(rag.class_count()); ++c) {
    append_summary(out, bd.stats.channels[c]);
    const std::size_t first = out.size();
    append_summary(out, r1->stats.channels[c]);
    append_summary(out, r2->stats.channels[c]);
    for (int i = 0; i < kSummaryPerChannel; ++i) {
      out.push_back(std::abs(out[first + static_cast<std::size_t>(i)] - out[first + kSummaryPerChannel + static_cast<std::size_t>(i)]));
    }
  }
  out.push_back(static_cast<double>(bd.voxels.size()));
  out.push_back(static_cast<double>(r1->size));
  out.push_back(static_cast<double>(r2->size));
  return out;
}

BoundaryTruth derive_boundary_truth(const RegionAdjacencyGraph& rag, const SegmentationMap& bodies,
                                    const LabelVolume& labels) {
  if (!(bodies.dims() == rag.dims()) || !(labels.dims == rag.dims())) {
    throw std::invalid_argument("groundtruth is not aligned with the over-segmentation");
  }
  BoundaryTruth truth;
  const auto& regions = rag.regions();
  std::vector<std::uint32_t> body(regions.size(), 0);
  std::vector<bool> mito_like(regions.size(), false);
  for (std::uint32_t r = 0; r < regions.size(); ++r) {
    if (!regions[r].alive) continue;
    std::unordered_map<std::uint32_t, std::size_t> overlap;
    std::size_t mito = 0, total = 0;
    for (auto v : rag.region_voxels(r)) {
      ++overlap[bodies.at(v)];
      const auto cls = labels.labels[v];
      if (cls == ClassLabel::mitochondria || cls == ClassLabel::mitochondria_border) ++mito;
      ++total;
    }
    std::size_t best_count = 0;
    for (const auto& entry : overlap) best_count = std::max(best_count, entry.second);
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    std::size_t winners = 0;
    for (const auto& [id, count] : overlap) {
      if (count != best_count) continue;
      ++winners;
      best = std::min(best, id);
    }
    const bool tied = winners > 1;
    if (tied) truth.tied_regions.push_back(r);
    body[r] = best;
    mito_like[r] = 2 * mito > total;
  }
  for (auto b : rag.alive_boundaries()) {
    const auto& bd = rag.boundary(b);
    const bool different = body[bd.a] != body[bd.b] || mito_like[bd.a] != mito_like[bd.b];
    truth.boundary_ids.push_back(b);
    truth.labels.push_back(different ? kTrueBoundary : kFalseBoundary);
  }
  return truth;
}

}  // namespace activeseg
