#include "activeseg/session.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <optional>
#include <thread>

#include "activeseg/active_pixel.hpp"
#include "activeseg/boundary_learning.hpp"
#include "activeseg/grid_io.hpp"
#include "activeseg/png_io.hpp"
#include "activeseg/rag.hpp"
#include "httplib.h"

namespace activeseg {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Phase { pixel, boundary };

struct Settings {
  PixelLoopConfig pixel;
  BoundaryLoopConfig boundary;
  std::vector<double> scales = kDefaultScales;
  std::size_t brush_per_class = 50;
  std::size_t patch_radius = 16;
  fs::path probabilities;
  fs::path oversegmentation;
};

Settings settings_from_json(const json& cfg) {
  Settings s;
  if (!cfg.is_object()) throw ApiError(400, "config must be an object");
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{1});
  s.pixel.seed = s.boundary.seed = seed;
  s.pixel.forest.seed = s.boundary.forest.seed = seed;
  s.scales = cfg.value("scales", s.scales);
  s.pixel.batch_size = s.boundary.batch_size = cfg.value("batch_size", std::size_t{10});
  s.pixel.budget_batches = cfg.value("budget_batches", s.pixel.budget_batches);
  s.pixel.subsample_size = cfg.value("subsample_size", s.pixel.subsample_size);
  s.pixel.graph.target_density = cfg.value("graph_density", s.pixel.graph.target_density);
  s.boundary.graph.target_density = cfg.value("boundary_graph_density", s.boundary.graph.target_density);
  s.pixel.forest.tree_count = cfg.value("pixel_trees", s.pixel.forest.tree_count);
  s.boundary.forest.tree_count = cfg.value("boundary_trees", s.boundary.forest.tree_count);
  s.boundary.init_fraction = cfg.value("init_fraction", s.boundary.init_fraction);
  s.boundary.budget_fraction = cfg.value("budget_fraction", s.boundary.budget_fraction);
  s.boundary.zero_error_window = cfg.value("zero_error_window", s.boundary.zero_error_window);
  s.brush_per_class = cfg.value("brush_per_class", s.brush_per_class);
  s.patch_radius = cfg.value("patch_radius", s.patch_radius);
  s.probabilities = cfg.value("probabilities", std::string{});
  s.oversegmentation = cfg.value("oversegmentation", std::string{});
  if (s.pixel.batch_size == 0) throw ApiError(400, "batch_size must be >= 1");
  return s;
}

void write_json_atomic(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump() << '\n';
  }
  fs::rename(tmp, path);
}

std::string png_base64(const PngImage& image) { return httplib::detail::base64_encode(encode_png(image)); }

int parse_pixel_label(const json& v) {
  if (v.is_number_integer()) {
    const int c = v.get<int>();
    if (c < 0 || c >= kClassCount) throw ApiError(400, "class index out of range");
    return c;
  }
  if (v.is_string()) {
    const auto name = v.get<std::string>();
    for (int c = 0; c < kClassCount; ++c) {
      if (class_name(class_from_index(c)) == name) return c;
    }
    throw ApiError(400, "unknown class '" + name + "'");
  }
  throw ApiError(400, "pixel label must be a class name or index");
}

int parse_boundary_label(const json& v) {
  if (v.is_boolean()) return v.get<bool>() ? kTrueBoundary : kFalseBoundary;
  if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) return v.get<int>();
  if (v.is_string() && (v == "true" || v == "false")) return v == "true" ? kTrueBoundary : kFalseBoundary;
  throw ApiError(400, "boundary label must be true or false");
}

void check_version(const json& body) {
  if (!body.is_object() || !body.contains("v")) throw ApiError(400, "payload needs a \"v\" field");
  if (body.at("v") != kApiVersion) throw ApiError(400, "unsupported payload version");
}

}  // namespace

struct Session {
  std::string id;
  fs::path dir;
  json request;
  Phase phase = Phase::pixel;
  bool oracle = false;
  Settings settings;

  DatasetManifest manifest;
  RasterVolume volume;
  std::optional<LabelVolume> truth;
  std::optional<SegmentationMap> bodies;

  // pixel phase
  FeatureBank bank;
  std::vector<VoxelLabel> brush;
  std::optional<PixelProblem> pixel_problem;
  std::optional<ActiveLearner> pixel;

  // boundary phase
  std::optional<RegionAdjacencyGraph> rag;
  std::vector<std::uint32_t> boundary_ids;
  std::shared_ptr<const BoundaryProblem> boundary_problem;
  std::optional<BoundaryActiveLearner> boundary;

  std::vector<int> oracle_truth;  // node / row indexed
  std::string failure;
  bool training = false;

  mutable std::mutex mu;  // serializes all mutation
  mutable std::mutex snap_mu;
  mutable std::condition_variable snap_cv;
  std::shared_ptr<const json> queries_snapshot;
  std::shared_ptr<const json> progress_snapshot;
  bool worker_running = false;
  std::thread worker;
  std::atomic<bool> stopping{false};

  bool started() const { return phase == Phase::pixel ? pixel.has_value() : true; }

  bool done() const {
    if (phase == Phase::pixel) return pixel && pixel->done();
    return boundary && boundary->done();
  }

  const QueryBatch* pending() const {
    if (phase == Phase::pixel) return pixel && pixel->status() == LoopStatus::awaiting_labels ? &pixel->pending() : nullptr;
    if (!boundary || boundary->done()) return nullptr;
    return &boundary->pending();
  }

  std::string stage() const {
    if (phase == Phase::pixel) return pixel ? "queries" : "brush";
    return boundary && boundary->in_initial_stage() ? "initial" : "queries";
  }

  std::string status() const {
    if (!failure.empty()) return "failed";
    if (done()) return "done";
    if (training) return "training";
    return "awaiting_labels";
  }

  // -- loading ---------------------------------------------------------------

  void load_data() {
    const fs::path manifest_path = request.at("manifest").get<std::string>();
    if (!fs::exists(manifest_path)) throw ApiError(404, "manifest not found: " + manifest_path.string());
    try {
      manifest = DatasetManifest::load(manifest_path);
      volume = load_volume(manifest);
      if (manifest.labels) truth = load_labels(manifest);
      if (manifest.segmentation) bodies = load_segmentation(manifest);
    } catch (const std::invalid_argument& e) {
      throw ApiError(400, e.what());
    } catch (const std::runtime_error& e) {
      throw ApiError(404, e.what());
    }
    if (oracle && !truth) throw ApiError(400, "oracle mode needs groundtruth labels in the manifest");

    if (phase == Phase::pixel) {
      try {
        bank = compute_pixel_features(volume, settings.scales);
      } catch (const std::invalid_argument& e) {
        throw ApiError(400, e.what());
      }
      return;
    }

    if (settings.probabilities.empty() || settings.oversegmentation.empty()) {
      throw ApiError(400, "boundary sessions need config.probabilities and config.oversegmentation");
    }
    if (oracle && !bodies) throw ApiError(400, "oracle boundary sessions need a groundtruth segmentation");
    ProbabilityField field;
    SegmentationMap overseg;
    try {
      field = read_probability_field(manifest.resolve(settings.probabilities));
      overseg = read_segmentation(manifest.resolve(settings.oversegmentation));
    } catch (const std::invalid_argument& e) {
      throw ApiError(400, e.what());
    } catch (const std::runtime_error& e) {
      throw ApiError(404, e.what());
    }
    if (!(field.dims() == volume.dims()) || !(overseg.dims() == volume.dims())) {
      throw ApiError(400, "probabilities / over-segmentation do not match the volume");
    }
    rag = RegionAdjacencyGraph::build(overseg, field);
    BoundarySet set = collect_boundary_features(*rag);
    if (set.boundary_ids.size() < 2) throw ApiError(400, "over-segmentation has fewer than two boundaries");
    boundary_ids = set.boundary_ids;
    try {
      boundary_problem = std::make_shared<const BoundaryProblem>(prepare_boundary_problem(set.features, settings.boundary));
    } catch (const std::exception& e) {
      throw ApiError(400, std::string("cannot set up boundary learning: ") + e.what());
    }
    boundary.emplace(boundary_problem, settings.boundary);
    if (oracle) oracle_truth = derive_boundary_truth(*rag, *bodies, *truth).labels;
  }

  void start_pixel_loop() {
    pixel_problem = prepare_pixel_problem(bank, brush, settings.pixel);
    pixel.emplace(make_pixel_learner(*pixel_problem, settings.pixel));
    if (truth) oracle_truth = node_truth(*pixel_problem, *truth);
  }

  // -- persistence -----------------------------------------------------------

  void persist() const {
    json strokes = json::array();
    for (const auto& b : brush) strokes.push_back({b.voxel, b.label});
    json state = {{"v", kApiVersion}, {"id", id}, {"request", request}, {"stage", stage()}, {"brush", strokes},
                  {"failure", failure}};
    if (phase == Phase::pixel && pixel) pixel->save(dir / "loop");
    if (phase == Phase::boundary && boundary) boundary->save(dir / "loop");
    write_json_atomic(dir / "session.json", state);
  }

  void resume(const json& state) {
    for (const auto& s : state.at("brush")) brush.push_back({s.at(0).get<std::size_t>(), s.at(1).get<int>()});
    failure = state.value("failure", std::string{});
    load_data();
    const auto stage_name = state.at("stage").get<std::string>();
    if (phase == Phase::pixel && stage_name == "queries") {
      start_pixel_loop();
      pixel->restore(dir / "loop");
    } else if (phase == Phase::boundary && fs::exists(dir / "loop" / "boundary.json")) {
      boundary->restore(dir / "loop");
    }
  }

  // -- payloads --------------------------------------------------------------

  json pixel_item(std::size_t node) const {
    const std::size_t voxel = pixel_problem->nodes[node];
    const auto c = volume.dims().coords(voxel);
    const RasterVolume patch = crop_patch(volume, c, settings.patch_radius);
    const Dims& pd = patch.dims();
    const std::size_t plane = pd.z / 2;
    std::vector<std::uint8_t> pixels(patch.voxels().begin() + static_cast<std::ptrdiff_t>(plane * pd.x * pd.y),
                                     patch.voxels().begin() + static_cast<std::ptrdiff_t>((plane + 1) * pd.x * pd.y));
    json options = json::array();
    for (int k = 0; k < kClassCount; ++k) options.push_back(std::string(class_name(class_from_index(k))));
    return {{"id", voxel},
            {"position", {c[0], c[1], c[2]}},
            {"patch",
             {{"png_base64", png_base64(gray8_image(pd.x, pd.y, pixels))},
              {"width", pd.x},
              {"height", pd.y},
              {"crosshair", {pd.x / 2, pd.y / 2}}}},
            {"options", options}};
  }

  json boundary_item(std::size_t row) const {
    const std::uint32_t bid = boundary_ids[row];
    const auto& bd = rag->boundary(bid);
    const Dims& d = volume.dims();
    const auto& overseg = rag->oversegmentation();
    std::size_t x0 = d.x, y0 = d.y, x1 = 0, y1 = 0;
    for (auto v : bd.voxels) {
      const auto c = d.coords(v);
      x0 = std::min(x0, c[0]);
      x1 = std::max(x1, c[0]);
      y0 = std::min(y0, c[1]);
      y1 = std::max(y1, c[1]);
    }
    const std::size_t z = bd.voxels.empty() ? 0 : d.coords(bd.voxels[bd.voxels.size() / 2])[2];
    const std::size_t margin = settings.patch_radius;
    x0 = x0 > margin ? x0 - margin : 0;
    y0 = y0 > margin ? y0 - margin : 0;
    x1 = std::min(d.x - 1, x1 + margin);
    y1 = std::min(d.y - 1, y1 + margin);
    if (bd.voxels.empty()) x0 = y0 = 0, x1 = d.x - 1, y1 = d.y - 1;

    PngImage img;
    img.width = x1 - x0 + 1;
    img.height = y1 - y0 + 1;
    img.channels = 3;
    img.bit_depth = 8;
    img.samples.reserve(img.width * img.height * 3);
    for (std::size_t y = y0; y <= y1; ++y) {
      for (std::size_t x = x0; x <= x1; ++x) {
        const std::size_t v = d.index(x, y, z);
        const std::uint16_t g = volume.voxels()[v];
        const std::uint32_t r = overseg.at(v);
        if (r == bd.a) {
          img.samples.insert(img.samples.end(), {static_cast<std::uint16_t>(std::min(255, g / 2 + 128)), static_cast<std::uint16_t>(g / 2), static_cast<std::uint16_t>(g / 2)});
        } else if (r == bd.b) {
          img.samples.insert(img.samples.end(), {static_cast<std::uint16_t>(g / 2), static_cast<std::uint16_t>(g / 2), static_cast<std::uint16_t>(std::min(255, g / 2 + 128))});
        } else {
          img.samples.insert(img.samples.end(), {g, g, g});
        }
      }
    }
    return {{"id", bid},
            {"regions", {bd.a, bd.b}},
            {"overlay", {{"png_base64", png_base64(img)}, {"width", img.width}, {"height", img.height}, {"origin", {x0, y0, z}}}},
            {"options", {"false", "true"}}};
  }

  json build_queries() const {
    json items = json::array();
    if (const QueryBatch* batch = pending(); batch && failure.empty()) {
      for (auto idx : batch->indices) items.push_back(phase == Phase::pixel ? pixel_item(idx) : boundary_item(idx));
    }
    return {{"v", kApiVersion}, {"id", id}, {"phase", phase == Phase::pixel ? "pixel" : "boundary"},
            {"status", status()}, {"stage", stage()}, {"iteration", batches_done()}, {"items", items}};
  }

  std::size_t batches_done() const {
    if (phase == Phase::pixel) return pixel ? pixel->batches_done() : 0;
    return boundary ? boundary->history().size() : 0;
  }

  json build_progress() const {
    json history = json::array();
    const std::vector<BatchRecord>* records = nullptr;
    if (phase == Phase::pixel && pixel) records = &pixel->history();
    if (phase == Phase::boundary && boundary) records = &boundary->history();
    if (records) {
      for (const auto& h : *records) {
        history.push_back({{"batch", h.batch},
                           {"size", h.size},
                           {"classifier_errors", h.classifier_errors},
                           {"propagation_errors", h.propagation_errors}});
      }
    }
    json p = {{"v", kApiVersion},
              {"id", id},
              {"phase", phase == Phase::pixel ? "pixel" : "boundary"},
              {"mode", oracle ? "oracle" : "human"},
              {"status", status()},
              {"stage", stage()},
              {"iteration", batches_done()},
              {"history", history}};
    if (!failure.empty()) p["error"] = failure;
    if (phase == Phase::pixel) {
      p["pool_size"] = brush.size();
      p["budget_batches"] = settings.pixel.budget_batches;
      if (pixel) {
        p["labeled"] = pixel->training_set().size();
        p["queried"] = pixel->queried().size();
        p["budget_remaining"] = pixel->labels_remaining();
        p["stop_reason"] = to_string(pixel->stop_reason());
        p["last_solve"] = pixel->last_solve() == SolveStatus::converged ? "converged" : "max_iterations";
      }
    } else if (boundary) {
      p["boundary_count"] = boundary_ids.size();
      p["labeled"] = boundary->labeled_count();
      p["budget_total"] = boundary->total_budget();
      p["budget_remaining"] = boundary->total_budget() > boundary->labeled_count()
                                  ? boundary->total_budget() - boundary->labeled_count()
                                  : 0;
      p["stop_reason"] = to_string(boundary->stop_reason());
      p["stopping_criterion_met"] = boundary->stop_reason() == StopReason::zero_error_window;
      p["zero_error_window"] = settings.boundary.zero_error_window;
    }
    return p;
  }

  void publish() {
    auto q = std::make_shared<const json>(build_queries());
    auto p = std::make_shared<const json>(build_progress());
    std::lock_guard lock(snap_mu);
    queries_snapshot = std::move(q);
    progress_snapshot = std::move(p);
    snap_cv.notify_all();
  }

  // -- mutation --------------------------------------------------------------

  void ingest(const std::vector<int>& labels) {
    if (phase == Phase::pixel) {
      pixel->ingest(labels);
    } else {
      boundary->ingest(labels);
    }
  }

  void oracle_step() {
    if (phase == Phase::pixel && !pixel) {
      brush = sample_brush_pool(*truth, settings.brush_per_class, settings.pixel.seed);
      start_pixel_loop();
      pixel->start();
      return;
    }
    const QueryBatch* batch = pending();
    if (!batch) return;
    std::vector<int> labels;
    for (auto idx : batch->indices) labels.push_back(oracle_truth.at(idx));
    ingest(labels);
  }

  void run_worker() {
    while (!stopping) {
      {
        std::lock_guard lock(mu);
        if (done() || !failure.empty()) break;
        training = true;
        try {
          oracle_step();
        } catch (const std::exception& e) {
          failure = e.what();
        }
        training = false;
        persist();
        publish();
      }
    }
    std::lock_guard lock(snap_mu);
    worker_running = false;
    snap_cv.notify_all();
  }

  void launch_worker() {
    if (!oracle || done() || !failure.empty()) return;
    worker_running = true;
    worker = std::thread([this] { run_worker(); });
  }

  ~Session() {
    stopping = true;
    if (worker.joinable()) worker.join();
  }
};

SessionManager::SessionManager(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory() && fs::exists(entry.path() / "session.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    std::ifstream in(dir / "session.json");
    const json state = json::parse(in);
    auto s = std::make_shared<Session>();
    s->id = state.at("id").get<std::string>();
    s->dir = dir;
    s->request = state.at("request");
    s->phase = s->request.at("phase") == "boundary" ? Phase::boundary : Phase::pixel;
    s->oracle = s->request.value("oracle", false);
    s->settings = settings_from_json(s->request.value("config", json::object()));
    try {
      s->resume(state);
    } catch (const std::exception& e) {
      s->failure = std::string("resume failed: ") + e.what();
    }
    s->publish();
    s->launch_worker();
    if (s->id.size() > 1 && s->id[0] == 's') {
      next_id_ = std::max(next_id_, static_cast<std::size_t>(std::stoul(s->id.substr(1))) + 1);
    }
    sessions_.emplace(s->id, std::move(s));
  }
}

SessionManager::~SessionManager() {
  std::lock_guard lock(mu_);
  for (auto& [id, s] : sessions_) s->stopping = true;
  sessions_.clear();
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError(404, "unknown session '" + id + "'");
  return it->second;
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

std::string SessionManager::create(const json& request) {
  check_version(request);
  if (!request.contains("manifest") || !request.at("manifest").is_string()) throw ApiError(400, "manifest path required");
  const std::string phase = request.value("phase", std::string("pixel"));
  if (phase != "pixel" && phase != "boundary") throw ApiError(400, "phase must be pixel or boundary");

  auto s = std::make_shared<Session>();
  s->request = request;
  s->request["manifest"] = fs::absolute(request.at("manifest").get<std::string>()).string();
  s->phase = phase == "boundary" ? Phase::boundary : Phase::pixel;
  s->oracle = request.value("oracle", false);
  s->settings = settings_from_json(request.value("config", json::object()));
  s->load_data();

  {
    std::lock_guard lock(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04zu", next_id_++);
    s->id = buf;
  }
  s->dir = root_ / s->id;
  fs::create_directories(s->dir);
  s->persist();
  s->publish();
  s->launch_worker();
  std::lock_guard lock(mu_);
  sessions_.emplace(s->id, s);
  return s->id;
}

json SessionManager::queries(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->snap_mu);
  return *s->queries_snapshot;
}

json SessionManager::progress(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->snap_mu);
  return *s->progress_snapshot;
}

json SessionManager::post_labels(const std::string& id, const json& body) {
  check_version(body);
  auto s = find(id);
  if (s->oracle) throw ApiError(409, "oracle sessions answer their own queries");
  std::lock_guard lock(s->mu);
  if (!s->failure.empty()) throw ApiError(409, "session failed: " + s->failure);
  if (s->done()) throw ApiError(409, "session is done");
  if (s->phase == Phase::pixel && !s->pixel) throw ApiError(409, "initial brushing is not complete");
  const QueryBatch* batch = s->pending();
  if (!batch) throw ApiError(409, "no pending batch");

  std::map<std::string, json> given;
  const json& labels = body.contains("labels") ? body.at("labels") : json();
  if (labels.is_object()) {
    for (const auto& [key, value] : labels.items()) given[key] = value;
  } else if (labels.is_array()) {
    for (const auto& item : labels) {
      const std::string key = item.at("id").is_string() ? item.at("id").get<std::string>() : item.at("id").dump();
      if (!given.emplace(key, item.at("label")).second) throw ApiError(400, "duplicate label for id " + key);
    }
  } else {
    throw ApiError(400, "labels must be an object keyed by sample id or an array");
  }

  std::vector<int> ordered;
  for (auto idx : batch->indices) {
    const std::string key = std::to_string(s->phase == Phase::pixel ? s->pixel_problem->nodes[idx] : s->boundary_ids[idx]);
    auto it = given.find(key);
    if (it == given.end()) throw ApiError(400, "missing label for id " + key);
    ordered.push_back(s->phase == Phase::pixel ? parse_pixel_label(it->second) : parse_boundary_label(it->second));
    given.erase(it);
  }
  if (!given.empty()) throw ApiError(400, "label for unknown id " + given.begin()->first);

  s->training = true;
  s->publish();
  try {
    s->ingest(ordered);
  } catch (...) {
    s->training = false;
    s->publish();
    throw;
  }
  s->training = false;
  s->persist();
  s->publish();
  return s->build_progress();
}

json SessionManager::brush(const std::string& id, const json& body) {
  check_version(body);
  auto s = find(id);
  if (s->oracle) throw ApiError(409, "oracle sessions brush from groundtruth");
  if (s->phase != Phase::pixel) throw ApiError(409, "brushing applies to pixel sessions only");
  std::lock_guard lock(s->mu);
  if (s->pixel) throw ApiError(409, "the active loop has already started");

  const Dims& d = s->volume.dims();
  std::vector<VoxelLabel> accepted;
  json rejected = json::array();
  const json strokes = body.value("strokes", json::array());
  if (!strokes.is_array()) throw ApiError(400, "strokes must be an array");
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const json& st = strokes[i];
    try {
      std::size_t voxel = 0;
      if (st.contains("voxel")) {
        const auto v = st.at("voxel").get<long long>();
        if (v < 0 || static_cast<std::size_t>(v) >= d.voxel_count()) throw ApiError(400, "voxel outside the volume");
        voxel = static_cast<std::size_t>(v);
      } else {
        const auto x = st.at("x").get<long long>(), y = st.at("y").get<long long>(), z = st.value("z", 0LL);
        if (x < 0 || y < 0 || z < 0 || static_cast<std::size_t>(x) >= d.x || static_cast<std::size_t>(y) >= d.y ||
            static_cast<std::size_t>(z) >= d.z) {
          throw ApiError(400, "stroke outside the volume");
        }
        voxel = d.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z));
      }
      accepted.push_back({voxel, parse_pixel_label(st.at("label"))});
    } catch (const std::exception& e) {
      rejected.push_back({{"index", i}, {"error", e.what()}});
    }
  }
  // A later stroke on the same voxel replaces the earlier one.
  for (const auto& a : accepted) {
    auto it = std::find_if(s->brush.begin(), s->brush.end(), [&](const VoxelLabel& b) { return b.voxel == a.voxel; });
    if (it != s->brush.end()) {
      it->label = a.label;
    } else {
      s->brush.push_back(a);
    }
  }

  if (body.value("done", false)) {
    const bool has_membrane = std::any_of(s->brush.begin(), s->brush.end(),
                                          [](const VoxelLabel& b) { return b.label == kMembrane; });
    if (!has_membrane) {
      s->persist();
      s->publish();
      throw ApiError(400, "the brushed pool needs at least one membrane sample");
    }
    s->training = true;
    s->publish();
    try {
      s->start_pixel_loop();
      s->pixel->start();
    } catch (const std::exception& e) {
      s->pixel.reset();
      s->pixel_problem.reset();
      s->training = false;
      s->publish();
      throw ApiError(400, std::string("cannot start the active loop: ") + e.what());
    }
    s->training = false;
  }
  s->persist();
  s->publish();
  std::array<std::size_t, kClassCount> per_class{};
  for (const auto& b : s->brush) ++per_class[static_cast<std::size_t>(b.label)];
  return {{"v", kApiVersion}, {"accepted", accepted.size()}, {"rejected", rejected}, {"pool_size", s->brush.size()},
          {"per_class", per_class}, {"started", s->pixel.has_value()}};
}

std::string SessionManager::export_model(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (s->phase == Phase::pixel && s->pixel && s->pixel->status() != LoopStatus::idle) return s->pixel->model().serialize();
  if (s->phase == Phase::boundary && s->boundary && !s->boundary->in_initial_stage()) return s->boundary->model().serialize();
  throw ApiError(409, "no trained model yet");
}

void SessionManager::wait(const std::string& id) const {
  auto s = find(id);
  std::unique_lock lock(s->snap_mu);
  s->snap_cv.wait(lock, [&] { return !s->worker_running; });
}

}  // namespace activeseg
