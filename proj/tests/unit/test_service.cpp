// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "scenemem/evaluation.hpp"
#include "scenemem/io.hpp"
#include "scenemem/service.hpp"

// After Eigen: httplib pulls in headers that define macros clashing with it.
#include <httplib.h>

using namespace scenemem;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

ServiceConfig test_config(const std::string& name) {
  ServiceConfig c;
  c.data_dir = fs::temp_directory_path() / ("scenemem_service_" + name);
  fs::remove_all(c.data_dir);
  c.width = 32;
  c.height = 32;
  return c;
}

// Next clip of the session's out-and-back sweep.
std::string step_body(const Session& s, uint64_t scenario_seed, int clip) {
  const Scenario sc = make_scenario(scenario_seed, SceneParams{}, s.archive().front().camera.intrinsics);
  const Trajectory t = out_and_back(sc.start, sc.intrinsics, sc.sweep, 2, s.config().clip_len);
  StepRequest r;
  r.trajectory.assign(t.begin() + clip * s.config().clip_len, t.begin() + (clip + 1) * s.config().clip_len);
  r.instruction = classify_motion(r.trajectory);
  return step_request_to_json(r);
}

}  // namespace

TEST(ServiceConfig, JsonAndEnvOverrides) {
  ServiceConfig c;
  c.port = 9001;
  c.session.clip_len = 5;
  const ServiceConfig back = ServiceConfig::from_json(c.to_json());
  EXPECT_EQ(back.port, 9001);
  EXPECT_EQ(back.session, c.session);
  EXPECT_THROW(ServiceConfig::from_json(R"({"generator":"flow"})"), std::invalid_argument);
  EXPECT_THROW(ServiceConfig::from_json(R"({"port":70000})"), std::invalid_argument);

  setenv("SCENEMEM_PORT", "1234", 1);
  setenv("SCENEMEM_DATA_DIR", "/tmp/elsewhere", 1);
  ServiceConfig e;
  e.apply_env();
  EXPECT_EQ(e.port, 1234);
  EXPECT_EQ(e.data_dir, fs::path("/tmp/elsewhere"));
  setenv("SCENEMEM_PORT", "12ab", 1);
  EXPECT_THROW(e.apply_env(), std::invalid_argument);
  unsetenv("SCENEMEM_PORT");
  unsetenv("SCENEMEM_DATA_DIR");
}

TEST(Service, RoutesCoverTheSessionLifecycle) {
  SessionStore store(test_config("routes"));
  HttpResponse r = handle_request(store, "POST", "/sessions", R"({"scenario_seed": 3})");
  ASSERT_EQ(r.status, 201) << r.body;
  const std::string id = json::parse(r.body)["id"];
  const std::size_t cells = json::parse(r.body)["cell_count"];

  r = handle_request(store, "GET", "/sessions/" + id + "/memory", "");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.content_type, "application/octet-stream");
  std::istringstream spcl(r.body);
  EXPECT_EQ(read_spcl(spcl).size(), cells);

  const auto snap = store.snapshot(id);
  r = handle_request(store, "POST", "/sessions/" + id + "/step", step_body(*snap, 3, 0));
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(json::parse(r.body)["clip_index"], 1);
  EXPECT_EQ(json::parse(r.body)["frames"], 9);

  r = handle_request(store, "GET", "/sessions/" + id + "/clips/1", "");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.content_type, "image/png");
  EXPECT_EQ(r.body.substr(1, 3), "PNG");
  r = handle_request(store, "GET", "/sessions/" + id + "/clips/1", "", {{"frame", "8"}});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(handle_request(store, "GET", "/sessions/" + id + "/clips/1", "", {{"frame", "9"}}).status, 404);
  EXPECT_EQ(handle_request(store, "GET", "/sessions/" + id + "/clips/2", "").status, 404);

  // A failed step changes nothing.
  const uint64_t sum = store.info(id).checksum;
  r = handle_request(store, "POST", "/sessions/" + id + "/step", step_body(*snap, 3, 0).substr(0, 40));
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(store.info(id).checksum, sum);

  r = handle_request(store, "POST", "/sessions/" + id + "/edit",
                     R"({"kind":"delete-region","region":{"min":[-99,-99,-99],"max":[99,99,99]}})");
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(json::parse(r.body)["cell_count"], 0);
  r = handle_request(store, "GET", "/sessions/" + id + "/memory", "");
  ASSERT_FALSE(r.headers.empty());
  bool warned = false;
  for (const auto& [k, v] : r.headers) warned |= k == "X-Scenemem-Warning";
  EXPECT_TRUE(warned);

  r = handle_request(store, "GET", "/sessions/" + id + "/bundle", "");
  ASSERT_EQ(r.status, 200);
  const std::string bundle = r.body;
  r = handle_request(store, "PUT", "/sessions/" + id + "/bundle", bundle.substr(0, bundle.size() - 3));
  EXPECT_EQ(r.status, 400);
  r = handle_request(store, "PUT", "/sessions/" + id + "/bundle", bundle);
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(handle_request(store, "GET", "/sessions/" + id + "/bundle", "").body, bundle);

  EXPECT_EQ(handle_request(store, "GET", "/sessions/s999/memory", "").status, 404);
  EXPECT_EQ(handle_request(store, "GET", "/nowhere", "").status, 404);
  EXPECT_EQ(handle_request(store, "DELETE", "/sessions", "").status, 405);
  EXPECT_EQ(handle_request(store, "POST", "/sessions", "{}").status, 400);
}

TEST(Service, TrajectoryEchoIsExact) {
  SessionStore store(test_config("echo"));
  const Scenario sc = make_scenario(4, SceneParams{}, Intrinsics::from_fov(32, 32, 70.0));
  const std::string doc = trajectory_to_json(out_and_back(sc.start, sc.intrinsics, sc.sweep, 2, 9));
  const HttpResponse r = handle_request(store, "POST", "/trajectory/echo", doc);
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body, doc);
}

TEST(Service, SessionsPersistAcrossRestarts) {
  const ServiceConfig cfg = test_config("persist");
  std::string id, bundle;
  {
    SessionStore store(cfg);
    id = store.create(R"({"scenario_seed": 5})").id;
    store.step(id, parse_step_request(step_body(*store.snapshot(id), 5, 0)));
    bundle = store.snapshot(id)->export_bundle();
  }
  SessionStore again(cfg);
  EXPECT_EQ(again.snapshot(id)->export_bundle(), bundle);
  EXPECT_NE(again.create(R"({"scenario_seed": 6})").id, id);
  EXPECT_EQ(again.import_bundle(bundle).clip_index, 1);
  EXPECT_EQ(again.list().size(), 3u);
}

TEST(Service, FreeformSessionFromFiles) {
  ServiceConfig cfg = test_config("freeform");
  fs::create_directories(cfg.data_dir);
  const Intrinsics k = Intrinsics::from_fov(32, 32, 70.0);
  const SceneSpec scene = generate_scene(7);
  const GtFrame f = render_gt(scene, Pose::identity(), k, 0.0);
  write_png(cfg.data_dir / "rgb.png", f.rgb);
  write_npy(cfg.data_dir / "depth.npy", {32, 32}, f.depth.data);
  const std::string cam = json::parse(trajectory_to_json({{Pose::identity(), k}}))[0].dump();
  SessionStore store(cfg);
  const SessionInfo info = store.create(R"({"frame":{"rgb":"rgb.png","depth":"depth.npy","camera":)" + cam + "}}");
  EXPECT_EQ(info.mode, "freeform");
  EXPECT_GT(info.cell_count, 0u);
  // The oracle generator needs a known scene.
  const Session s = *store.snapshot(info.id);
  Trajectory t(9, {Pose::identity(), k});
  StepRequest req;
  req.trajectory = t;
  EXPECT_THROW(store.step(info.id, req), std::invalid_argument);
}

TEST(Service, HttpServerEndToEnd) {
  SessionStore store(test_config("http"));
  HttpServer server(store);
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.serve(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);
  auto created = cli.Post("/sessions", R"({"scenario_seed": 8})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const std::string id = json::parse(created->body)["id"];
  auto step = cli.Post("/sessions/" + id + "/step", step_body(*store.snapshot(id), 8, 0), "application/json");
  ASSERT_TRUE(step);
  EXPECT_EQ(step->status, 200) << step->body;
  auto clip = cli.Get("/sessions/" + id + "/clips/1?frame=0");
  ASSERT_TRUE(clip);
  EXPECT_EQ(clip->status, 200);
  EXPECT_EQ(clip->get_header_value("Content-Type"), "image/png");
  auto mem = cli.Get("/sessions/" + id + "/memory");
  ASSERT_TRUE(mem);
  EXPECT_EQ(mem->get_header_value("X-Scenemem-Clip-Index"), "1");
  auto bundle = cli.Get("/sessions/" + id + "/bundle");
  ASSERT_TRUE(bundle);
  auto put = cli.Put("/sessions/" + id + "/bundle", bundle->body, "application/octet-stream");
  ASSERT_TRUE(put);
  EXPECT_EQ(put->status, 200);
  server.stop();
  th.join();
}
