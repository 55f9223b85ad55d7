#pragma once
// Shared fixtures and brute-force oracles. Oracles here deliberately avoid
// the library's own helpers so the tests compare two independent routes.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "activeseg/affinity.hpp"
#include "activeseg/features.hpp"
#include "activeseg/grid.hpp"

namespace testing {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::random_device rd;
    path = fs::temp_directory_path() / ("activeseg_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// Connected random graph: a spanning path plus extra edges.
inline activeseg::AffinityGraph random_graph(std::size_t n, std::mt19937_64& rng, double extra_p = 0.3) {
  std::uniform_real_distribution<double> w(0.05, 1.0), coin(0.0, 1.0);
  std::vector<activeseg::AffinityGraph::Edge> edges;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  auto add = [&](std::size_t a, std::size_t b) {
    if (a == b) return;
    auto key = std::minmax(a, b);
    if (!seen.insert(key).second) return;
    edges.push_back({key.first, key.second, w(rng)});
  };
  for (std::size_t i = 1; i < n; ++i) add(order[i - 1], order[i]);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (coin(rng) < extra_p) add(a, b);
    }
  }
  return activeseg::AffinityGraph::from_edges(n, edges);
}

// sum_ij w_ij || F_i / sqrt(d_i) - F_j / sqrt(d_j) ||^2, straight from the
// pairwise definition (ordered pairs).
inline double pairwise_cost(const Eigen::MatrixXd& F, const activeseg::AffinityGraph& g) {
  const std::size_t n = g.node_count();
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) deg[i] += g.weight(i, j);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = g.weight(i, j);
      if (w == 0.0) continue;
      double sq = 0.0;
      for (Eigen::Index c = 0; c < F.cols(); ++c) {
        const double diff = F(static_cast<Eigen::Index>(i), c) / std::sqrt(deg[i]) -
                            F(static_cast<Eigen::Index>(j), c) / std::sqrt(deg[j]);
        sq += diff * diff;
      }
      total += w * sq;
    }
  }
  return total;
}

// Pair counts by enumerating every voxel pair.
struct PairTally {
  long long same_both = 0, same_gt_only = 0, same_seg_only = 0, total = 0;
};

inline PairTally enumerate_pairs(const std::vector<std::uint32_t>& gt, const std::vector<std::uint32_t>& seg) {
  PairTally t;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (std::size_t j = i + 1; j < gt.size(); ++j) {
      const bool g = gt[i] == gt[j], s = seg[i] == seg[j];
      ++t.total;
      if (g && s) ++t.same_both;
      if (g && !s) ++t.same_gt_only;
      if (!g && s) ++t.same_seg_only;
    }
  }
  return t;
}

// H(A|B) = -sum p(a,b) log2 p(a|b), from raw co-occurrence frequencies.
inline double entropy_given(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> joint;
  std::map<std::uint32_t, double> marginal;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0 / n;
    marginal[b[i]] += 1.0 / n;
  }
  double h = 0.0;
  for (const auto& [key, p] : joint) h -= p * std::log2(p / marginal[key.second]);
  return h;
}

// Face-connected components by repeated flood fill (no union-find).
inline std::vector<std::vector<std::size_t>> components(const activeseg::Dims& d, const std::vector<bool>& mask) {
  std::vector<int> seen(mask.size(), 0);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < mask.size(); ++s) {
    if (!mask[s] || seen[s]) continue;
    std::vector<std::size_t> comp, stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      const auto c = d.coords(v);
      const long coords[3] = {static_cast<long>(c[0]), static_cast<long>(c[1]), static_cast<long>(c[2])};
      const long ext[3] = {static_cast<long>(d.x), static_cast<long>(d.y), static_cast<long>(d.z)};
      for (int axis = 0; axis < 3; ++axis) {
        for (int step : {-1, 1}) {
          long q[3] = {coords[0], coords[1], coords[2]};
          q[axis] += step;
          if (q[axis] < 0 || q[axis] >= ext[axis]) continue;
          const std::size_t u = d.index(static_cast<std::size_t>(q[0]), static_cast<std::size_t>(q[1]),
                                        static_cast<std::size_t>(q[2]));
          if (mask[u] && !seen[u]) {
            seen[u] = 1;
            stack.push_back(u);
          }
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

// Two interleaved half circles (the usual "moons"), n/2 points each, evenly
// spaced along each arc, plus isotropic Gaussian noise. Class 0 is the upper
// arc centred at (0,0), class 1 the lower arc centred at (1,0.5).
struct Moons {
  activeseg::FeatureMatrix x;
  std::vector<int> y;
};

inline Moons make_moons(std::size_t n, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, noise);
  Moons m;
  m.x.resize(static_cast<Eigen::Index>(n), 2);
  m.y.resize(n);
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const bool upper = i < half;
    const std::size_t k = upper ? i : i - half;
    const std::size_t count = upper ? half : n - half;
    const double t = M_PI * static_cast<double>(k) / static_cast<double>(count - 1);
    const double px = upper ? std::cos(t) : 1.0 - std::cos(t);
    const double py = upper ? std::sin(t) : 0.5 - std::sin(t);
    m.x(static_cast<Eigen::Index>(i), 0) = px + eps(rng);
    m.x(static_cast<Eigen::Index>(i), 1) = py + eps(rng);
    m.y[i] = upper ? 0 : 1;
  }
  return m;
}

// Distance from p to the noise-free arc of the given moon.
inline double distance_to_arc(double px, double py, int moon) {
  const double cx = moon == 0 ? 0.0 : 1.0, cy = moon == 0 ? 0.0 : 0.5;
  double dx = px - cx, dy = py - cy;
  if (moon == 1) dy = -dy;  // lower arc: mirror into the upper half plane
  const double angle = std::atan2(dy, dx);
  if (angle >= 0.0 && angle <= M_PI) return std::abs(std::hypot(dx, dy) - 1.0);
  // beyond the arc ends: nearest endpoint
  return std::min(std::hypot(dx - 1.0, dy), std::hypot(dx + 1.0, dy));
}

// Largest subset of a small labeled pool such that every chosen membrane
// node has at least as much affinity to the other chosen membrane nodes as
// to the chosen nodes of any single other class. Exhaustive over 2^n.
inline bool membrane_safe(const Eigen::MatrixXd& w, const std::vector<int>& labels, int membrane, int class_count,
                          std::uint32_t mask) {
  const std::size_t n = labels.size();
  std::vector<double> aff(static_cast<std::size_t>(class_count));
  for (std::size_t j = 0; j < n; ++j) {
    if (!(mask >> j & 1u) || labels[j] != membrane) continue;
    std::fill(aff.begin(), aff.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (i != j && (mask >> i & 1u)) aff[static_cast<std::size_t>(labels[i])] += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    for (int o = 0; o < class_count; ++o) {
      if (o != membrane && aff[static_cast<std::size_t>(o)] > aff[static_cast<std::size_t>(membrane)]) return false;
    }
  }
  return true;
}

inline std::size_t best_safe_subset(const Eigen::MatrixXd& w, const std::vector<int>& labels, int membrane,
                                    int class_count) {
  const std::size_t n = labels.size();
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    const auto size = static_cast<std::size_t>(__builtin_popcount(mask));
    if (size > best && membrane_safe(w, labels, membrane, class_count, mask)) best = size;
  }
  return best;
}

// A brushed-pool lookalike: 1..3 samples of each of four classes (2 or 3 of
// every class when balanced, as the brush tool produces) scattered
// around class centres, joined by a complete Gaussian-affinity graph.
struct SmallPool {
  activeseg::AffinityGraph graph;
  Eigen::MatrixXd w;
  std::vector<int> labels;
};

inline SmallPool random_pool(std::mt19937_64& rng, double spread = 0.6, bool balanced = false) {
  std::uniform_int_distribution<int> count(1, 3), equal(2, 3);
  const int per_class = equal(rng);
  std::normal_distribution<double> g(0.0, spread);
  const double centre[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<std::array<double, 2>> pts;
  SmallPool pool;
  for (int c = 0; c < 4; ++c) {
    const int k = balanced ? per_class : count(rng);
    for (int i = 0; i < k; ++i) {
      pts.push_back({centre[c][0] + g(rng), centre[c][1] + g(rng)});
      pool.labels.push_back(c);
    }
  }
  const std::size_t n = pts.size();
  pool.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<activeseg::AffinityGraph::Edge> edges;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d2 = std::pow(pts[a][0] - pts[b][0], 2) + std::pow(pts[a][1] - pts[b][1], 2);
      const double wt = std::max(std::exp(-d2 / 0.5), 1e-12);
      edges.push_back({a, b, wt});
      pool.w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = wt;
      pool.w(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = wt;
    }
  }
  pool.graph = activeseg::AffinityGraph::from_edges(n, edges);
  return pool;
}

inline std::vector<std::uint32_t> to_vec(std::span<const std::uint32_t> s) { return {s.begin(), s.end()}; }

}  // namespace testing
