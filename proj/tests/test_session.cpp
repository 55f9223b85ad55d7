#include <thread>

#include "activeseg/active_pixel.hpp"
#include "activeseg/forest.hpp"
#include "activeseg/grid_io.hpp"
#include "activeseg/server.hpp"
#include "activeseg/session.hpp"
#include "activeseg/synthetic.hpp"
#include "doctest.h"
#include "httplib.h"
#include "support.hpp"

using namespace activeseg;
using nlohmann::json;

namespace {

// Small dataset on disk with a probability field and an 8x8 block
// over-segmentation for boundary sessions.
struct Fixture {
  testing::TempDir tmp{"session"};
  SyntheticDataset data = generate_synthetic_volume(SyntheticSpec{});
  std::filesystem::path manifest;

  Fixture() {
    manifest = save_dataset(tmp.path / "data", data.volume, &data.labels, &data.bodies);
    const Dims& d = data.volume.dims();
    std::vector<double> p;
    for (std::size_t i = 0; i < d.voxel_count(); ++i) {
      const int c = static_cast<int>(data.labels.labels[i]);
      for (int k = 0; k < kClassCount; ++k) p.push_back(k == c ? 0.85 : 0.05);
    }
    write_probability_field(tmp.path / "data" / "probs.bin", ProbabilityField(d, kClassCount, p));
    std::vector<std::uint32_t> blocks(d.voxel_count());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto c = d.coords(i);
      blocks[i] = static_cast<std::uint32_t>(c[0] / 8 + (d.x / 8) * (c[1] / 8));
    }
    write_segmentation(tmp.path / "data" / "blocks.seg", SegmentationMap(d, blocks));
  }

  json pixel_request(bool oracle) const {
    return {{"v", 1},
            {"manifest", manifest.string()},
            {"phase", "pixel"},
            {"oracle", oracle},
            {"config",
             {{"subsample_size", 300},
              {"graph_density", 0.03},
              {"pixel_trees", 5},
              {"budget_batches", 3},
              {"brush_per_class", 10},
              {"patch_radius", 4}}}};
  }

  json boundary_request(bool oracle) const {
    return {{"v", 1},
            {"manifest", manifest.string()},
            {"phase", "boundary"},
            {"oracle", oracle},
            {"config",
             {{"probabilities", "probs.bin"},
              {"oversegmentation", "blocks.seg"},
              {"boundary_trees", 5},
              {"init_fraction", 0.1},
              {"boundary_graph_density", 0.05}}}};
  }

  json brush_strokes(std::size_t per_class, std::uint64_t seed) const {
    json strokes = json::array();
    for (const auto& s : sample_brush_pool(data.labels, per_class, seed)) {
      strokes.push_back({{"voxel", s.voxel}, {"label", s.label}});
    }
    return strokes;
  }

  json answers(const json& queries) const {
    json labels = json::object();
    for (const auto& item : queries.at("items")) {
      const auto v = item.at("id").get<std::size_t>();
      labels[std::to_string(v)] = static_cast<int>(data.labels.labels[v]);
    }
    return {{"v", 1}, {"labels", labels}};
  }
};

// The server on an ephemeral port for the lifetime of the object.
struct LiveServer {
  httplib::Server srv;
  int port = 0;
  std::thread thread;

  explicit LiveServer(SessionManager& sessions) {
    register_routes(srv, sessions);
    port = srv.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { srv.listen_after_bind(); });
    srv.wait_until_ready();
  }
  ~LiveServer() {
    srv.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(300, 0);
    return c;
  }
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

}  // namespace

TEST_CASE("http: create, errors and versioning") {
  Fixture fx;
  testing::TempDir root("sessions");
  SessionManager sessions(root.path);
  LiveServer live(sessions);
  auto cli = live.client();

  const auto a = cli.Post("/sessions", fx.pixel_request(false).dump(), "application/json");
  REQUIRE(a);
  CHECK(a->status == 201);
  const auto b = cli.Post("/sessions", fx.pixel_request(false).dump(), "application/json");
  CHECK(b->status == 201);
  CHECK(body_of(a).at("id") != body_of(b).at("id"));
  CHECK(body_of(a).at("v") == 1);

  auto missing = fx.pixel_request(false);
  missing["manifest"] = (fx.tmp.path / "nope.json").string();
  const auto r404 = cli.Post("/sessions", missing.dump(), "application/json");
  CHECK(r404->status == 404);
  CHECK(body_of(r404).contains("error"));

  CHECK(cli.Post("/sessions", "{not json", "application/json")->status == 400);
  CHECK(cli.Post("/sessions", R"({"manifest":"x"})", "application/json")->status == 400);
  auto wrong_phase = fx.pixel_request(false);
  wrong_phase["phase"] = "voxel";
  CHECK(cli.Post("/sessions", wrong_phase.dump(), "application/json")->status == 400);
  CHECK(cli.Get("/sessions/s9999/queries")->status == 404);
  CHECK(cli.Get("/sessions/s9999/progress")->status == 404);
}

TEST_CASE("http: a human pixel session from brushing to answered batches") {
  Fixture fx;
  testing::TempDir root("sessions");
  SessionManager sessions(root.path);
  LiveServer live(sessions);
  auto cli = live.client();
  const std::string id = body_of(cli.Post("/sessions", fx.pixel_request(false).dump(), "application/json")).at("id");
  const std::string base = "/sessions/" + id;

  auto q0 = body_of(cli.Get(base + "/queries"));
  CHECK(q0.at("stage") == "brush");
  CHECK(q0.at("items").empty());
  CHECK(cli.Get(base + "/export")->status == 409);

  // out-of-volume strokes are rejected one by one
  json strokes = json::array({{{"voxel", 5}, {"label", "cytoplasm"}},
                              {{"voxel", 1 << 30}, {"label", 0}},
                              {{"x", 3}, {"y", 4}, {"label", 2}},
                              {{"x", 999}, {"y", 0}, {"label", 2}},
                              {{"voxel", 6}, {"label", "nucleus"}}});
  auto br = body_of(cli.Post(base + "/brush", json{{"v", 1}, {"strokes", strokes}}.dump(), "application/json"));
  CHECK(br.at("accepted") == 2);
  CHECK(br.at("rejected").size() == 3);
  CHECK(br.at("pool_size") == 2);

  // no membrane yet
  const auto no_mem = cli.Post(base + "/brush", json{{"v", 1}, {"done", true}}.dump(), "application/json");
  CHECK(no_mem->status == 400);

  const auto started =
      cli.Post(base + "/brush", json{{"v", 1}, {"strokes", fx.brush_strokes(10, 2)}, {"done", true}}.dump(),
               "application/json");
  REQUIRE(started->status == 200);
  CHECK(body_of(started).at("started") == true);
  CHECK(cli.Post(base + "/brush", json{{"v", 1}, {"strokes", strokes}}.dump(), "application/json")->status == 409);

  const auto q1 = cli.Get(base + "/queries");
  const auto queries = body_of(q1);
  CHECK(queries.at("status") == "awaiting_labels");
  REQUIRE(queries.at("items").size() == 10);
  CHECK(cli.Get(base + "/queries")->body == q1->body);
  const auto& item = queries.at("items").front();
  CHECK(item.at("patch").at("width") == 9);
  CHECK(item.at("options").size() == kClassCount);
  CHECK(!item.at("patch").at("png_base64").get<std::string>().empty());

  // 9 of 10 labels: rejected, batch unchanged
  auto partial = fx.answers(queries);
  partial.at("labels").erase(partial.at("labels").begin());
  CHECK(cli.Post(base + "/labels", partial.dump(), "application/json")->status == 400);
  auto extra = fx.answers(queries);
  extra["labels"]["123456789"] = 0;
  CHECK(cli.Post(base + "/labels", extra.dump(), "application/json")->status == 400);
  CHECK(cli.Get(base + "/queries")->body == q1->body);

  const auto full = fx.answers(queries);
  const auto after = cli.Post(base + "/labels", full.dump(), "application/json");
  REQUIRE(after->status == 200);
  CHECK(body_of(after).at("iteration") == 1);
  const auto q2 = body_of(cli.Get(base + "/queries"));
  CHECK(q2.at("iteration") == 1);
  CHECK(q2.at("items") != queries.at("items"));
  // the same batch again: its ids are no longer pending
  CHECK(cli.Post(base + "/labels", full.dump(), "application/json")->status == 400);

  const auto progress = body_of(cli.Get(base + "/progress"));
  CHECK(progress.at("queried") == 10);
  CHECK(progress.at("budget_remaining") == 20);
  CHECK(progress.at("history").size() == 1);
  CHECK(progress.at("mode") == "human");

  const auto exported = cli.Get(base + "/export");
  REQUIRE(exported->status == 200);
  CHECK(EnsembleModel::deserialize(exported->body).tree_count() == 5);

  // finish the budget, array-style labels this time
  for (int i = 0; i < 2; ++i) {
    const auto q = body_of(cli.Get(base + "/queries"));
    json arr = json::array();
    for (const auto& it : q.at("items")) {
      const auto v = it.at("id").get<std::size_t>();
      arr.push_back({{"id", v}, {"label", static_cast<int>(fx.data.labels.labels[v])}});
    }
    CHECK(cli.Post(base + "/labels", json{{"v", 1}, {"labels", arr}}.dump(), "application/json")->status == 200);
  }
  const auto done = body_of(cli.Get(base + "/queries"));
  CHECK(done.at("status") == "done");
  CHECK(done.at("items").empty());
  CHECK(cli.Post(base + "/labels", full.dump(), "application/json")->status == 409);
}

TEST_CASE("restart reproduces the pending batch") {
  Fixture fx;
  testing::TempDir root("sessions");
  std::string id;
  json before;
  {
    SessionManager sessions(root.path);
    id = sessions.create(fx.pixel_request(false));
    sessions.brush(id, {{"v", 1}, {"strokes", fx.brush_strokes(10, 4)}, {"done", true}});
    sessions.post_labels(id, fx.answers(sessions.queries(id)));
    before = sessions.queries(id);
  }
  SessionManager again(root.path);
  CHECK(again.ids() == std::vector<std::string>{id});
  const auto after = again.queries(id);
  CHECK(after == before);
  CHECK(again.progress(id).at("iteration") == 1);
  again.post_labels(id, fx.answers(after));
  CHECK(again.progress(id).at("iteration") == 2);
  // new sessions do not reuse the id
  CHECK(again.create(fx.pixel_request(false)) != id);
}

TEST_CASE("oracle pixel session answers itself") {
  Fixture fx;
  testing::TempDir root("sessions");
  SessionManager sessions(root.path);
  const auto id = sessions.create(fx.pixel_request(true));
  sessions.wait(id);
  const auto p = sessions.progress(id);
  CHECK(p.at("status") == "done");
  CHECK(p.at("mode") == "oracle");
  CHECK(p.at("queried") == 30);
  CHECK(p.at("stop_reason") == "budget");
  CHECK_THROWS_AS(sessions.post_labels(id, {{"v", 1}, {"labels", json::object()}}), ApiError);
  try {
    sessions.post_labels(id, {{"v", 1}, {"labels", json::object()}});
  } catch (const ApiError& e) {
    CHECK(e.status() == 409);
  }
  CHECK(!sessions.export_model(id).empty());
}

TEST_CASE("boundary sessions: human initial batch and an oracle run") {
  Fixture fx;
  testing::TempDir root("sessions");
  SessionManager sessions(root.path);
  LiveServer live(sessions);
  auto cli = live.client();

  const auto created = cli.Post("/sessions", fx.boundary_request(false).dump(), "application/json");
  REQUIRE(created->status == 201);
  const std::string base = "/sessions/" + body_of(created).at("id").get<std::string>();
  const auto q = body_of(cli.Get(base + "/queries"));
  CHECK(q.at("phase") == "boundary");
  CHECK(q.at("stage") == "initial");
  REQUIRE(!q.at("items").empty());
  CHECK(q.at("items").front().at("options") == json::array({"false", "true"}));
  CHECK(q.at("items").front().at("overlay").contains("png_base64"));
  CHECK(cli.Post(base + "/brush", json{{"v", 1}, {"strokes", json::array()}}.dump(), "application/json")->status ==
        409);

  json labels = json::object();
  bool flip = false;
  for (const auto& item : q.at("items")) {
    labels[std::to_string(item.at("id").get<std::uint32_t>())] = flip ? "true" : "false";
    flip = !flip;
  }
  const auto r = cli.Post(base + "/labels", json{{"v", 1}, {"labels", labels}}.dump(), "application/json");
  REQUIRE(r->status == 200);
  const auto q2 = body_of(cli.Get(base + "/queries"));
  CHECK(q2.at("stage") == "queries");
  CHECK(cli.Get(base + "/export")->status == 200);

  // missing probabilities: 400
  auto bad = fx.boundary_request(false);
  bad["config"].erase("probabilities");
  CHECK(cli.Post("/sessions", bad.dump(), "application/json")->status == 400);

  const auto oracle = sessions.create(fx.boundary_request(true));
  sessions.wait(oracle);
  const auto p = sessions.progress(oracle);
  CHECK(p.at("status") == "done");
  CHECK(p.at("labeled").get<std::size_t>() <= p.at("budget_total").get<std::size_t>());
}
