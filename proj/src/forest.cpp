#include "activeseg/forest.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace activeseg {
namespace {

constexpr char kMagic[4] = {'A', 'S', 'R', 'F'};

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;  // sum over children of sum_c count_c^2 / child_size
};

struct PendingNode {
  std::int32_t node;
  std::size_t begin;
  std::size_t end;
  int depth;
};

class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out_.append(reinterpret_cast<const char*>(raw), sizeof(T));
  }
  void bytes(const char* data, std::size_t n) { out_.append(data, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& in) : in_(in) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > in_.size()) throw std::invalid_argument("truncated model file");
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  void expect(const char* data, std::size_t n) {
    if (pos_ + n > in_.size() || std::memcmp(in_.data() + pos_, data, n) != 0) {
      throw std::invalid_argument("not an ensemble model file");
    }
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

EnsembleModel EnsembleModel::train(const FeatureMatrix& features, std::span<const int> labels, int class_count,
                                   const ForestConfig& cfg) {
  if (features.rows() == 0) throw std::invalid_argument("cannot train on an empty training set");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw std::invalid_argument("label count does not match training rows");
  }
  if (class_count < 1) throw std::invalid_argument("class_count must be >= 1");
  if (cfg.tree_count < 1) throw std::invalid_argument("tree_count must be >= 1");
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw std::invalid_argument("training label out of range");
  }
  if (!features.allFinite()) throw std::invalid_argument("training features contain NaN or Inf");

  EnsembleModel model;
  model.class_count_ = class_count;
  model.feature_count_ = static_cast<int>(features.cols());
  model.seed_ = cfg.seed;
  model.trees_.reserve(static_cast<std::size_t>(cfg.tree_count));
  for (int t = 0; t < cfg.tree_count; ++t) model.trees_.push_back(grow_tree(features, labels, class_count, cfg, t));
  return model;
}

EnsembleModel::Tree EnsembleModel::grow_tree(const FeatureMatrix& features, std::span<const int> labels,
                                             int class_count, const ForestConfig& cfg, int tree_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(tree_index)};
  std::mt19937_64 rng(seq);

  const std::size_t n = labels.size();
  const int d = static_cast<int>(features.cols());
  const int mtry = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));

  std::vector<std::size_t> sample(n);
  std::uniform_int_distribution<std::size_t> draw(0, n - 1);
  for (auto& s : sample) s = draw(rng);

  Tree tree;
  tree.nodes.emplace_back();
  std::vector<PendingNode> stack{{0, 0, n, 0}};
  std::vector<int> feature_order(static_cast<std::size_t>(d));
  std::vector<std::pair<double, int>> column;
  std::vector<double> left_counts(static_cast<std::size_t>(class_count));
  std::vector<double> total_counts(static_cast<std::size_t>(class_count));

  auto make_leaf = [&](std::int32_t node, std::size_t begin, std::size_t end) {
    tree.nodes[static_cast<std::size_t>(node)].histogram = static_cast<std::int32_t>(tree.counts.size());
    tree.counts.resize(tree.counts.size() + static_cast<std::size_t>(class_count), 0);
    for (std::size_t i = begin; i < end; ++i) {
      ++tree.counts[static_cast<std::size_t>(tree.nodes[static_cast<std::size_t>(node)].histogram + labels[sample[i]])];
    }
  };

  while (!stack.empty()) {
    const PendingNode cur = stack.back();
    stack.pop_back();
    const std::size_t size = cur.end - cur.begin;

    std::fill(total_counts.begin(), total_counts.end(), 0.0);
    for (std::size_t i = cur.begin; i < cur.end; ++i) total_counts[static_cast<std::size_t>(labels[sample[i]])] += 1.0;
    const bool pure = std::count_if(total_counts.begin(), total_counts.end(), [](double c) { return c > 0; }) <= 1;
    const bool depth_reached = cfg.max_depth > 0 && cur.depth >= cfg.max_depth;
    if (pure || depth_reached || size < static_cast<std::size_t>(std::max(2, cfg.min_samples_split))) {
      make_leaf(cur.node, cur.begin, cur.end);
      continue;
    }

    std::iota(feature_order.begin(), feature_order.end(), 0);
    std::shuffle(feature_order.begin(), feature_order.end(), rng);
    Split best;
    for (int fi = 0; fi < d; ++fi) {
      // Past the first mtry candidates, keep drawing only until some valid split exists.
      if (fi >= mtry && best.feature >= 0) break;
      const int f = feature_order[static_cast<std::size_t>(fi)];
      column.clear();
      for (std::size_t i = cur.begin; i < cur.end; ++i) column.emplace_back(features(static_cast<Eigen::Index>(sample[i]), f), labels[sample[i]]);
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;

      std::fill(left_counts.begin(), left_counts.end(), 0.0);
      double left_sq = 0.0;
      double right_sq = 0.0;
      for (double c : total_counts) right_sq += c * c;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        const auto c = static_cast<std::size_t>(column[i].second);
        const double right_c = total_counts[c] - left_counts[c];
        left_sq += 2.0 * left_counts[c] + 1.0;
        right_sq -= 2.0 * right_c - 1.0;
        left_counts[c] += 1.0;
        if (column[i].first == column[i + 1].first) continue;
        const double n_left = static_cast<double>(i + 1);
        const double n_right = static_cast<double>(column.size() - i - 1);
        const double score = left_sq / n_left + right_sq / n_right;
        if (score > best.score) {
          best.score = score;
          best.feature = f;
          const double lo = column[i].first, hi = column[i + 1].first;
          double threshold = lo + 0.5 * (hi - lo);
          if (!(threshold < hi)) threshold = lo;
          best.threshold = threshold;
        }
      }
    }

    if (best.feature < 0) {
      make_leaf(cur.node, cur.begin, cur.end);
      continue;
    }

    auto first_right = std::partition(sample.begin() + static_cast<std::ptrdiff_t>(cur.begin),
                                      sample.begin() + static_cast<std::ptrdiff_t>(cur.end), [&](std::size_t s) {
                                        return features(static_cast<Eigen::Index>(s), best.feature) <= best.threshold;
                                      });
    const std::size_t mid = static_cast<std::size_t>(first_right - sample.begin());
    const auto left = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto right = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    Node& parent = tree.nodes[static_cast<std::size_t>(cur.node)];
    parent.feature = best.feature;
    parent.threshold = best.threshold;
    parent.left = left;
    parent.right = right;
    stack.push_back({right, mid, cur.end, cur.depth + 1});
    stack.push_back({left, cur.begin, mid, cur.depth + 1});
  }
  return tree;
}

const EnsembleModel::Node& EnsembleModel::leaf_for(const Tree& tree, std::span<const double> x) const {
  const Node* node = &tree.nodes.front();
  while (node->feature >= 0) {
    node = &tree.nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(node->feature)] <= node->threshold
                                                    ? node->left
                                                    : node->right)];
  }
  return *node;
}

void EnsembleModel::predict_row(std::span<const double> x, std::span<double> out) const {
  if (trees_.empty()) throw std::logic_error("predict on an untrained ensemble");
  if (x.size() != static_cast<std::size_t>(feature_count_)) {
    throw std::invalid_argument("feature count does not match the trained model");
  }
  if (out.size() != static_cast<std::size_t>(class_count_)) throw std::invalid_argument("output size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& tree : trees_) {
    const Node& leaf = leaf_for(tree, x);
    const auto* counts = tree.counts.data() + leaf.histogram;
    double total = 0.0;
    for (int c = 0; c < class_count_; ++c) total += counts[c];
    for (int c = 0; c < class_count_; ++c) out[static_cast<std::size_t>(c)] += counts[c] / total;
  }
  double sum = 0.0;
  for (double v : out) sum += v;
  for (double& v : out) v /= sum;
}

Eigen::MatrixXd EnsembleModel::predict_proba(const FeatureMatrix& features) const {
  if (features.cols() != feature_count_) throw std::invalid_argument("feature count does not match the trained model");
  Eigen::MatrixXd out(features.rows(), class_count_);
  std::vector<double> row(static_cast<std::size_t>(class_count_));
  const auto d = static_cast<std::size_t>(feature_count_);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    predict_row({features.data() + static_cast<std::size_t>(i) * d, d}, row);
    for (int c = 0; c < class_count_; ++c) out(i, c) = row[static_cast<std::size_t>(c)];
  }
  return out;
}

std::string EnsembleModel::serialize() const {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::int32_t>(class_count_);
  w.put<std::int32_t>(feature_count_);
  w.put<std::uint64_t>(seed_);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(trees_.size()));
  for (const auto& tree : trees_) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      w.put(node.feature);
      w.put(node.threshold);
      w.put(node.left);
      w.put(node.right);
      w.put(node.histogram);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tree.counts.size()));
    for (auto c : tree.counts) w.put(c);
  }
  return w.take();
}

EnsembleModel EnsembleModel::deserialize(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect(kMagic, 4);
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) throw std::invalid_argument("unsupported model format version");
  EnsembleModel m;
  m.class_count_ = r.get<std::int32_t>();
  m.feature_count_ = r.get<std::int32_t>();
  m.seed_ = r.get<std::uint64_t>();
  const auto tree_count = r.get<std::uint32_t>();
  if (m.class_count_ < 1 || m.feature_count_ < 0) throw std::invalid_argument("corrupt model header");
  m.trees_.resize(tree_count);
  for (auto& tree : m.trees_) {
    tree.nodes.resize(r.get<std::uint32_t>());
    for (auto& node : tree.nodes) {
      node.feature = r.get<std::int32_t>();
      node.threshold = r.get<double>();
      node.left = r.get<std::int32_t>();
      node.right = r.get<std::int32_t>();
      node.histogram = r.get<std::int32_t>();
    }
    tree.counts.resize(r.get<std::uint32_t>());
    for (auto& c : tree.counts) c = r.get<std::uint32_t>();
    for (const auto& node : tree.nodes) {
      const auto nodes = static_cast<std::int32_t>(tree.nodes.size());
      const bool leaf_ok = node.feature < 0 && node.histogram >= 0 &&
                           static_cast<std::size_t>(node.histogram + m.class_count_) <= tree.counts.size();
      const bool split_ok = node.feature >= 0 && node.feature < m.feature_count_ && node.left > 0 &&
                            node.left < nodes && node.right > 0 && node.right < nodes;
      if (!leaf_ok && !split_ok) throw std::invalid_argument("corrupt tree node in model file");
    }
  }
  if (!r.done()) throw std::invalid_argument("trailing bytes in model file");
  return m;
}

void EnsembleModel::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  nlohmann::json sidecar = {{"v", 1},
                            {"format", "activeseg-forest"},
                            {"version", kFormatVersion},
                            {"tree_count", tree_count()},
                            {"k", class_count_},
                            {"d", feature_count_},
                            {"seed", seed_}};
  std::ofstream meta(path.string() + ".json");
  meta << sidecar.dump(2) << '\n';
}

EnsembleModel EnsembleModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

}  // namespace activeseg
