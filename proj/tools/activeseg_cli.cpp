// Batch entry points over every pipeline stage.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "activeseg/active_pixel.hpp"
#include "activeseg/agglomerate.hpp"
#include "activeseg/boundary_learning.hpp"
#include "activeseg/grid_io.hpp"
#include "activeseg/metrics.hpp"
#include "activeseg/oversegment.hpp"
#include "activeseg/rag.hpp"
#include "activeseg/server.hpp"
#include "activeseg/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace activeseg;

namespace {

// --config file: a JSON object. Top-level scalars set global flags, nested
// objects keyed by command name set that command's flags.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        j[name] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be an object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static void collect(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(key);
        collect(value, nested, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      } else {
        item.inputs.push_back(value.is_string() ? value.get<std::string>() : value.dump());
      }
      items.push_back(std::move(item));
    }
  }
};

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw std::invalid_argument("not a number: '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty threshold list");
  return out;
}

json history_json(const std::vector<BatchRecord>& history) {
  json out = json::array();
  for (const auto& h : history) {
    out.push_back({{"batch", h.batch},
                   {"size", h.size},
                   {"classifier_errors", h.classifier_errors},
                   {"propagation_errors", h.propagation_errors}});
  }
  return out;
}

SegmentationMap load_groundtruth(const fs::path& path) {
  if (path.extension() == ".json" && fs::exists(path)) {
    const auto manifest = DatasetManifest::load(path);
    if (!manifest.segmentation) throw std::invalid_argument("manifest has no groundtruth segmentation");
    return load_segmentation(manifest);
  }
  return read_segmentation(path);
}

json score_json(const SegmentationMap& gt, const SegmentationMap& seg) {
  const auto vi = split_vi(gt, seg);
  const auto rand = split_rand(gt, seg);
  return {{"vi", {{"over", vi.over_seg}, {"under", vi.under_seg}}},
          {"rand", {{"over", rand.over_seg}, {"under", rand.under_seg}}},
          {"rand_f", rand_f_score(gt, seg)}};
}

struct Options {
  std::uint64_t seed = 1;

  // synth
  fs::path out_dir = "fixture";
  std::vector<std::size_t> size{128, 128, 1};
  int cells = fixture_spec().cell_count;
  int mito = fixture_spec().mito_count;
  double noise = fixture_spec().noise_sigma;
  double faint_fraction = fixture_spec().faint_fraction;
  double border_level = fixture_spec().border_level;

  // shared inputs
  fs::path manifest;
  fs::path features;
  fs::path probabilities;
  fs::path overseg;
  fs::path model;
  fs::path out;
  std::vector<double> scales = kDefaultScales;

  // pixel loop
  bool oracle = false;
  std::size_t batch_size = 10;
  std::size_t budget_batches = 50;
  std::size_t subsample = 2000;
  std::size_t brush_per_class = 50;
  double graph_density = 0.005;
  std::size_t pixel_trees = kPixelTreeCount;

  // watershed
  double ws_threshold = 0.01;
  std::size_t ws_min_size = 3;
  bool ws_keep_small = false;

  // boundary loop
  double init_fraction = 0.035;
  double budget_fraction = 0.15;
  int zero_error_window = 5;
  double boundary_density = 0.005;
  std::size_t boundary_trees = kBoundaryTreeCount;

  // agglomerate
  double threshold = 0.3;
  double inclusion = 0.5;
  std::string sweep;

  // evaluate
  fs::path groundtruth;
  fs::path segmentation;
  fs::path sweep_index;
  fs::path csv;

  // serve
  fs::path root = "sessions";
  std::string host = "127.0.0.1";
  int port = 8080;
};

void run_synth(const Options& o) {
  if (o.size.size() != 3) throw std::invalid_argument("--size takes X Y Z");
  SyntheticSpec spec = fixture_spec(o.seed);
  spec.dims = {o.size[0], o.size[1], o.size[2]};
  spec.cell_count = o.cells;
  spec.mito_count = o.mito;
  spec.noise_sigma = o.noise;
  spec.faint_fraction = o.faint_fraction;
  spec.border_level = o.border_level;
  const auto data = generate_synthetic_volume(spec);
  const fs::path manifest = save_dataset(o.out_dir, data.volume, &data.labels, &data.bodies);
  print({{"manifest", manifest.string()}, {"dims", {spec.dims.x, spec.dims.y, spec.dims.z}}});
}

FeatureBank features_for(const Options& o, const RasterVolume& volume) {
  if (!o.features.empty()) {
    auto bank = FeatureBank::load(o.features);
    if (bank.sample_count() != volume.dims().voxel_count()) throw std::invalid_argument("feature bank does not match the volume");
    return bank;
  }
  return compute_pixel_features(volume, o.scales);
}

void run_features(const Options& o) {
  const auto volume = load_volume(DatasetManifest::load(o.manifest));
  const auto bank = compute_pixel_features(volume, o.scales);
  bank.save(o.out);
  print({{"features", o.out.string()}, {"samples", bank.sample_count()}, {"dimension", bank.feature_count()}});
}

void run_train_pixel(const Options& o) {
  if (!o.oracle) throw std::invalid_argument("train-pixel without --oracle needs a human annotator; use `serve`");
  const auto manifest = DatasetManifest::load(o.manifest);
  if (!manifest.labels) throw std::invalid_argument("--oracle needs groundtruth labels in the manifest");
  const auto volume = load_volume(manifest);
  const auto truth = load_labels(manifest);
  const auto bank = features_for(o, volume);

  PixelLoopConfig cfg;
  cfg.seed = o.seed;
  cfg.forest.seed = o.seed;
  cfg.forest.tree_count = o.pixel_trees;
  cfg.batch_size = o.batch_size;
  cfg.budget_batches = o.budget_batches;
  cfg.subsample_size = o.subsample;
  cfg.graph.target_density = o.graph_density;

  const auto pool = sample_brush_pool(truth, o.brush_per_class, o.seed);
  const auto problem = prepare_pixel_problem(bank, pool, cfg);
  OracleLabelSource oracle(node_truth(problem, truth));
  std::vector<BatchRecord> history;
  const auto result = run_pixel_loop(problem, oracle, cfg, [&](const ActiveLearner& l) { history = l.history(); });

  fs::create_directories(o.out_dir);
  result.model.save(o.out_dir / "pixel_model.bin");
  const auto field = predict_field(result.model, bank, volume.dims());
  write_probability_field(o.out_dir / "probabilities.bin", field);
  std::array<std::size_t, kClassCount> per_class{};
  for (const auto& s : result.training_set) ++per_class[static_cast<std::size_t>(s.label)];
  const json summary = {{"model", (o.out_dir / "pixel_model.bin").string()},
                        {"probabilities", (o.out_dir / "probabilities.bin").string()},
                        {"batches", result.batches},
                        {"queried", result.queried.size()},
                        {"training_set", result.training_set.size()},
                        {"training_per_class", per_class},
                        {"history", history_json(history)}};
  write_text(o.out_dir / "pixel_history.json", summary.dump(2));
  print(summary);
}

void run_watershed(const Options& o) {
  const auto field = read_probability_field(o.probabilities);
  const SeedConfig sc{o.ws_threshold, o.ws_min_size, o.ws_keep_small};
  const auto seeds = extract_seeds(field, kMembrane, sc);
  const auto seg = seeded_watershed(field, kMembrane, seeds);
  write_segmentation(o.out, seg);
  print({{"segmentation", o.out.string()}, {"regions", seg.region_count()}});
}

void run_train_boundary(const Options& o) {
  if (!o.oracle) throw std::invalid_argument("train-boundary without --oracle needs a human annotator; use `serve`");
  const auto manifest = DatasetManifest::load(o.manifest);
  if (!manifest.labels || !manifest.segmentation) {
    throw std::invalid_argument("--oracle needs groundtruth labels and bodies in the manifest");
  }
  const auto truth = load_labels(manifest);
  const auto bodies = load_segmentation(manifest);
  const auto field = read_probability_field(o.probabilities);
  const auto overseg = read_segmentation(o.overseg);
  const auto rag = RegionAdjacencyGraph::build(overseg, field);
  const auto set = collect_boundary_features(rag);
  OracleLabelSource oracle(derive_boundary_truth(rag, bodies, truth).labels);

  BoundaryLoopConfig cfg;
  cfg.seed = o.seed;
  cfg.forest.seed = o.seed;
  cfg.forest.tree_count = o.boundary_trees;
  cfg.batch_size = o.batch_size;
  cfg.init_fraction = o.init_fraction;
  cfg.budget_fraction = o.budget_fraction;
  cfg.zero_error_window = o.zero_error_window;
  cfg.graph.target_density = o.boundary_density;
  const auto result = run_boundary_loop(set.features, oracle, cfg);

  fs::create_directories(o.out_dir);
  result.model.save(o.out_dir / "boundary_model.bin");
  const json summary = {{"model", (o.out_dir / "boundary_model.bin").string()},
                        {"boundaries", set.boundary_ids.size()},
                        {"labeled", result.labeled},
                        {"budget", result.budget},
                        {"stop_reason", to_string(result.stop_reason)},
                        {"history", history_json(result.history)}};
  write_text(o.out_dir / "boundary_history.json", summary.dump(2));
  print(summary);
}

void run_agglomerate(const Options& o) {
  const auto field = read_probability_field(o.probabilities);
  const auto overseg = read_segmentation(o.overseg);
  const auto model = EnsembleModel::load(o.model);
  const auto rag = RegionAdjacencyGraph::build(overseg, field);
  const auto scorer = model_scorer(model);

  if (o.sweep.empty()) {
    const AgglomerationConfig cfg{o.threshold, o.inclusion};
    const auto seg = agglomerate(rag, scorer, cfg);
    write_segmentation(o.out, seg);
    print({{"segmentation", o.out.string()}, {"regions", seg.region_count()}});
    return;
  }
  const auto thetas = parse_list(o.sweep);
  for (double t : thetas) AgglomerationConfig{t, o.inclusion}.validate();
  const auto results = sweep_thresholds(rag, scorer, thetas, o.inclusion);
  fs::create_directories(o.out_dir);
  json index = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seg_%03zu.raw", i);
    write_segmentation(o.out_dir / name, results[i].second);
    index.push_back({{"theta", results[i].first}, {"segmentation", name}, {"regions", results[i].second.region_count()}});
  }
  write_text(o.out_dir / "sweep.json", index.dump(2));
  print({{"sweep", (o.out_dir / "sweep.json").string()}, {"entries", index}});
}

void run_evaluate(const Options& o) {
  const auto gt = load_groundtruth(o.groundtruth);
  if (o.sweep_index.empty()) {
    if (o.segmentation.empty()) throw std::invalid_argument("evaluate needs --segmentation or --sweep-index");
    print(score_json(gt, read_segmentation(o.segmentation)));
    return;
  }
  std::ifstream in(o.sweep_index);
  if (!in) throw std::runtime_error("cannot read " + o.sweep_index.string());
  const json index = json::parse(in);
  json rows = json::array();
  std::ostringstream csv;
  csv << "theta,vi_over,vi_under,rand_over,rand_under,rand_f\n";
  for (const auto& entry : index) {
    const auto seg = read_segmentation(o.sweep_index.parent_path() / entry.at("segmentation").get<std::string>());
    json s = score_json(gt, seg);
    s["theta"] = entry.at("theta");
    csv << entry.at("theta").get<double>() << ',' << s["vi"]["over"].get<double>() << ','
        << s["vi"]["under"].get<double>() << ',' << s["rand"]["over"].get<double>() << ','
        << s["rand"]["under"].get<double>() << ',' << s["rand_f"].get<double>() << '\n';
    rows.push_back(std::move(s));
  }
  if (!o.csv.empty()) write_text(o.csv, csv.str());
  print(rows);
}

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << json{{"error", message}, {"kind", kind}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active learning for EM segmentation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags such as --seed may follow the command
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file overriding flags (nest per-command keys under the command name)");

  Options o;
  app.add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Write the synthetic fixture dataset");
  synth->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  synth->add_option("--size", o.size, "Volume extent X Y Z")->expected(3)->capture_default_str();
  synth->add_option("--cells", o.cells)->capture_default_str();
  synth->add_option("--mito", o.mito)->capture_default_str();
  synth->add_option("--noise", o.noise, "Gaussian noise sigma")->capture_default_str();
  synth->add_option("--faint-fraction", o.faint_fraction, "Share of low-contrast cell interfaces")
      ->capture_default_str();
  synth->add_option("--border-level", o.border_level, "Grey level of mitochondria border rings")->capture_default_str();

  auto* features = app.add_subcommand("features", "Compute the pixel feature bank");
  features->add_option("--manifest", o.manifest)->required();
  features->add_option("--out", o.out)->required();
  features->add_option("--scales", o.scales)->capture_default_str();

  auto* pixel = app.add_subcommand("train-pixel", "Active pixel classifier training");
  pixel->add_option("--manifest", o.manifest)->required();
  pixel->add_flag("--oracle", o.oracle, "Answer queries from groundtruth labels");
  pixel->add_option("--out", o.out_dir, "Output directory")->required();
  pixel->add_option("--features", o.features, "Precomputed feature bank");
  pixel->add_option("--scales", o.scales)->capture_default_str();
  pixel->add_option("--batch-size", o.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  pixel->add_option("--budget-batches", o.budget_batches)->capture_default_str();
  pixel->add_option("--subsample", o.subsample)->capture_default_str();
  pixel->add_option("--brush-per-class", o.brush_per_class)->capture_default_str();
  pixel->add_option("--graph-density", o.graph_density)->capture_default_str();
  pixel->add_option("--trees", o.pixel_trees)->capture_default_str()->check(CLI::PositiveNumber);

  auto* ws = app.add_subcommand("watershed", "Seeded watershed over-segmentation");
  ws->add_option("--probabilities", o.probabilities)->required();
  ws->add_option("--out", o.out)->required();
  ws->add_option("--ws-threshold", o.ws_threshold, "Seeds are components with p(membrane) below this")
      ->capture_default_str();
  ws->add_option("--ws-min-size", o.ws_min_size, "Seed components must be larger than this")->capture_default_str();
  ws->add_flag("--ws-keep-small", o.ws_keep_small, "Keep seed components of any size");

  auto* boundary = app.add_subcommand("train-boundary", "Active boundary classifier training");
  boundary->add_option("--manifest", o.manifest)->required();
  boundary->add_flag("--oracle", o.oracle, "Answer queries from groundtruth bodies");
  boundary->add_option("--probabilities", o.probabilities)->required();
  boundary->add_option("--oversegmentation", o.overseg)->required();
  boundary->add_option("--out", o.out_dir, "Output directory")->required();
  boundary->add_option("--batch-size", o.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  boundary->add_option("--init-fraction", o.init_fraction)->capture_default_str();
  boundary->add_option("--budget-fraction", o.budget_fraction)->capture_default_str();
  boundary->add_option("--zero-error-window", o.zero_error_window)->capture_default_str();
  boundary->add_option("--graph-density", o.boundary_density)->capture_default_str();
  boundary->add_option("--trees", o.boundary_trees)->capture_default_str()->check(CLI::PositiveNumber);

  auto* agg = app.add_subcommand("agglomerate", "Merge regions with a boundary classifier");
  agg->add_option("--probabilities", o.probabilities)->required();
  agg->add_option("--oversegmentation", o.overseg)->required();
  agg->add_option("--model", o.model)->required();
  agg->add_option("--threshold", o.threshold)->capture_default_str();
  agg->add_option("--inclusion-threshold", o.inclusion)->capture_default_str();
  agg->add_option("--out", o.out, "Segmentation output (single threshold)");
  agg->add_option("--sweep", o.sweep, "Comma-separated ascending thresholds");
  agg->add_option("--out-dir", o.out_dir, "Output directory for --sweep")->capture_default_str();
  agg->callback([&] {
    if (o.sweep.empty() && o.out.empty()) throw CLI::ValidationError("agglomerate", "--out or --sweep is required");
  });

  auto* eval = app.add_subcommand("evaluate", "Split VI and Rand scores against groundtruth");
  eval->add_option("--groundtruth", o.groundtruth, "Manifest or segmentation file")->required();
  eval->add_option("--segmentation", o.segmentation);
  eval->add_option("--sweep-index", o.sweep_index, "sweep.json written by agglomerate --sweep");
  eval->add_option("--csv", o.csv, "CSV output for a sweep");

  auto* serve = app.add_subcommand("serve", "Run the annotation session service");
  serve->add_option("--root", o.root, "Session directory")->capture_default_str();
  serve->add_option("--host", o.host)->capture_default_str();
  serve->add_option("--port", o.port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (synth->parsed()) run_synth(o);
    if (features->parsed()) run_features(o);
    if (pixel->parsed()) run_train_pixel(o);
    if (ws->parsed()) run_watershed(o);
    if (boundary->parsed()) run_train_boundary(o);
    if (agg->parsed()) run_agglomerate(o);
    if (eval->parsed()) run_evaluate(o);
    if (serve->parsed()) {
      SessionManager sessions(o.root);
      std::cerr << "serving on " << o.host << ':' << o.port << '\n';
      run_server(sessions, o.host, o.port);
    }
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what(), 2);
  } catch (const NoSeedsError& e) {
    return fail("no_seeds", e.what(), 3);
  } catch (const json::exception& e) {
    return fail("invalid_argument", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("runtime_error", e.what(), 1);
  }
  return 0;
}
