// SPDX-License-Identifier: Apache-2.0

#include "scenemem/service.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "scenemem/evaluation.hpp"
#include "scenemem/gen/trainer.hpp"
#include "scenemem/io.hpp"

namespace scenemem {

namespace {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CameraView parse_camera(const json& j) {
  const Trajectory t = trajectory_from_json(json::array({j}).dump());
  return t.front();
}

std::string mode_name(SessionMode m) { return m == SessionMode::Evaluation ? "evaluation" : "freeform"; }

SessionInfo describe(const std::string& id, const Session& s) {
  SessionInfo i;
  i.id = id;
  i.clip_index = s.clip_index();
  i.cell_count = s.memory().cell_count();
  i.archive_size = s.archive().size();
  i.mode = mode_name(s.mode());
  i.checksum = s.checksum();
  return i;
}

// Only well-formed ids reach the filesystem.
bool valid_id(const std::string& id) {
  static const std::regex re("s[0-9]{1,18}");
  return std::regex_match(id, re);
}

HttpResponse json_response(int status, const json& j) {
  HttpResponse r;
  r.status = status;
  r.body = j.dump();
  return r;
}

HttpResponse error_response(int status, const std::string& msg) { return json_response(status, {{"error", msg}}); }

}  // namespace

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw std::invalid_argument("service: port out of range");
  if (generator != "oracle" && generator != "flow") throw std::invalid_argument("service: generator must be oracle or flow");
  if (generator == "flow" && checkpoint.empty()) throw std::invalid_argument("service: flow generator needs a checkpoint");
  if (width < 1 || height < 1 || !(fov_deg > 0 && fov_deg < 180)) throw std::invalid_argument("service: bad camera");
  if (flow.steps < 1 || flow.max_refs < 0) throw std::invalid_argument("service: bad flow options");
  session.validate();
  scene.validate();
}

std::string ServiceConfig::to_json() const {
  const json j = {{"host", host},
                  {"port", port},
                  {"data_dir", data_dir.string()},
                  {"generator", generator},
                  {"checkpoint", checkpoint.string()},
                  {"flow",
                   {{"use_refs", flow.use_refs},
                    {"use_scene", flow.use_scene},
                    {"steps", flow.steps},
                    {"max_refs", flow.max_refs}}},
                  {"session", json::parse(session.to_json())},
                  {"scene", json::parse(scene_params_to_json(scene))},
                  {"width", width},
                  {"height", height},
                  {"fov_deg", fov_deg}};
  return j.dump(2);
}

ServiceConfig ServiceConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("service config: ") + e.what());
  }
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.data_dir = j.value("data_dir", c.data_dir.string());
    c.generator = j.value("generator", c.generator);
    c.checkpoint = j.value("checkpoint", c.checkpoint.string());
    if (j.contains("flow")) {
      const json& f = j["flow"];
      c.flow.use_refs = f.value("use_refs", c.flow.use_refs);
      c.flow.use_scene = f.value("use_scene", c.flow.use_scene);
      c.flow.steps = f.value("steps", c.flow.steps);
      c.flow.max_refs = f.value("max_refs", c.flow.max_refs);
    }
    if (j.contains("session")) c.session = SessionConfig::from_json(j["session"].dump());
    if (j.contains("scene")) c.scene = scene_params_from_json(j["scene"].dump());
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.fov_deg = j.value("fov_deg", c.fov_deg);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("service config: ") + e.what());
  }
  c.validate();
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  if (path.empty()) return {};
  return from_json(read_file(path));
}

void ServiceConfig::apply_env() {
  if (const char* p = std::getenv("SCENEMEM_PORT"); p && *p) {
    char* end = nullptr;
    const long v = std::strtol(p, &end, 10);
    if (*end != '\0' || v < 0 || v > 65535) throw std::invalid_argument("SCENEMEM_PORT is not a port number");
    port = static_cast<int>(v);
  }
  if (const char* d = std::getenv("SCENEMEM_DATA_DIR"); d && *d) data_dir = d;
}

std::string SessionInfo::to_json() const {
  return json{{"id", id},
              {"clip_index", clip_index},
              {"cell_count", cell_count},
              {"archive_size", archive_size},
              {"mode", mode},
              {"checksum", checksum}}
      .dump();
}

Session create_session(const std::string& doc, const ServiceConfig& defaults, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = doc.empty() ? json::object() : json::parse(doc);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("create: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("create: expected an object");
  try {
    SessionConfig cfg = defaults.session;
    if (j.contains("config")) {
      json merged = json::parse(cfg.to_json());
      merged.merge_patch(j["config"]);
      cfg = SessionConfig::from_json(merged.dump());
    }
    SceneParams params = defaults.scene;
    if (j.contains("scene")) {
      json merged = json::parse(scene_params_to_json(params));
      merged.merge_patch(j["scene"]);
      params = scene_params_from_json(merged.dump());
    }
    const Intrinsics intr = Intrinsics::from_fov(defaults.width, defaults.height, defaults.fov_deg);

    if (j.contains("frame")) {
      const json& f = j["frame"];
      PosedFrame frame;
      frame.rgb = read_png(base_dir / f.at("rgb").get<std::string>());
      const NpyArray d = read_npy(base_dir / f.at("depth").get<std::string>());
      if (d.shape.size() < 2) throw std::invalid_argument("create: depth must be (H, W)");
      frame.depth = Image(static_cast<int>(d.shape[1]), static_cast<int>(d.shape[0]), 1);
      if (d.values.size() != frame.depth.data.size()) throw std::invalid_argument("create: depth must be (H, W)");
      frame.depth.data = d.values;
      const CameraView cam = parse_camera(f.at("camera"));
      frame.pose = cam.pose;
      frame.intrinsics = cam.intrinsics;
      return Session::create_from_frame(frame, cfg);
    }
    if (j.contains("scenario_seed")) {
      const Scenario sc = make_scenario(j["scenario_seed"].get<uint64_t>(), params, intr);
      return scenario_session(sc, cfg);
    }
    if (j.contains("scene_seed")) {
      const uint64_t seed = j["scene_seed"].get<uint64_t>();
      if (j.contains("camera")) {
        const CameraView cam = parse_camera(j["camera"]);
        return Session::create_from_scene(seed, params, cam.pose, cam.intrinsics, cfg);
      }
      return Session::create_from_scene(seed, params, Pose::identity(), intr, cfg);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("create: ") + e.what());
  }
  throw std::invalid_argument("create: need one of frame, scenario_seed or scene_seed");
}

std::shared_ptr<const ClipGenerator> make_generator(const ServiceConfig& cfg, const Session& session) {
  if (cfg.generator == "oracle") {
    if (!session.scene()) throw std::invalid_argument("the oracle generator needs an evaluation session");
    return std::make_shared<OracleGenerator>(*session.scene());
  }
  auto model = std::make_shared<const gen::Model>(gen::load_checkpoint(cfg.checkpoint));
  return std::make_shared<FlowGenerator>(model, cfg.flow);
}

Image clip_strip(const Session& session, int k) {
  if (k < 0 || k > session.clip_index()) throw NotFound("no clip " + std::to_string(k));
  const auto frames = session.clip_frames(k);
  if (frames.empty()) throw NotFound("no clip " + std::to_string(k));
  const int w = frames.front()->rgb.width, h = frames.front()->rgb.height;
  Image strip(w * static_cast<int>(frames.size()), h, 3);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) strip.set_rgb(static_cast<int>(i) * w + x, y, frames[i]->rgb.rgb(x, y));
    }
  }
  return strip;
}

SessionStore::SessionStore(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.generator == "flow") model_ = std::make_shared<const gen::Model>(gen::load_checkpoint(cfg_.checkpoint));
  std::filesystem::create_directories(cfg_.data_dir);
  // Reload persisted sessions under their old ids.
  for (const auto& de : std::filesystem::directory_iterator(cfg_.data_dir)) {
    if (de.path().extension() != ".smb") continue;
    const std::string id = de.path().stem().string();
    if (!valid_id(id)) continue;
    try {
      Session s = Session::import_bundle(read_file(de.path()));
      auto e = std::make_shared<Entry>();
      e->generator = generator_for(s);
      e->current = std::make_shared<const Session>(std::move(s));
      entries_[id] = e;
      next_id_ = std::max<uint64_t>(next_id_, std::stoull(id.substr(1)) + 1);
    } catch (const std::exception& ex) {
      std::cerr << "scenemem: skipping " << de.path() << ": " << ex.what() << '\n';
    }
  }
}

std::shared_ptr<const ClipGenerator> SessionStore::generator_for(const Session& s) const {
  if (cfg_.generator == "flow") return std::make_shared<FlowGenerator>(model_, cfg_.flow);
  // Freeform sessions have no oracle; steps on them fail with a clear message.
  if (!s.scene()) return nullptr;
  return std::make_shared<OracleGenerator>(*s.scene());
}

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string& id) const {
  std::lock_guard lock(registry_);
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw NotFound("no session " + id);
  return it->second;
}

void SessionStore::persist(const std::string& id, const Session& s) const {
  const auto final_path = cfg_.data_dir / (id + ".smb");
  const auto tmp = cfg_.data_dir / (id + ".smb.tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    const std::string b = s.export_bundle();
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, final_path);
}

SessionInfo SessionStore::add(Session s) {
  auto e = std::make_shared<Entry>();
  e->generator = generator_for(s);
  std::string id;
  {
    std::lock_guard lock(registry_);
    id = "s" + std::to_string(next_id_++);
    persist(id, s);
    e->current = std::make_shared<const Session>(std::move(s));
    entries_[id] = e;
  }
  return describe(id, *e->current);
}

void SessionStore::commit(const std::string& id, Entry& e, Session s) {
  persist(id, s);
  auto next = std::make_shared<const Session>(std::move(s));
  std::lock_guard lock(e.swap);
  e.current = std::move(next);
}

SessionInfo SessionStore::create(const std::string& doc) { return add(create_session(doc, cfg_, cfg_.data_dir)); }

SessionInfo SessionStore::import_bundle(const std::string& bytes) { return add(Session::import_bundle(bytes)); }

SessionInfo SessionStore::replace(const std::string& id, const std::string& bytes) {
  auto e = entry(id);
  Session s = Session::import_bundle(bytes);
  std::lock_guard w(e->writer);
  auto gen = generator_for(s);
  commit(id, *e, s);
  e->generator = std::move(gen);
  return describe(id, s);
}

std::vector<SessionInfo> SessionStore::list() const {
  std::vector<std::pair<std::string, std::shared_ptr<Entry>>> all;
  {
    std::lock_guard lock(registry_);
    all.assign(entries_.begin(), entries_.end());
  }
  std::vector<SessionInfo> out;
  for (const auto& [id, e] : all) {
    std::lock_guard lock(e->swap);
    out.push_back(describe(id, *e->current));
  }
  return out;
}

std::shared_ptr<const Session> SessionStore::snapshot(const std::string& id) const {
  auto e = entry(id);
  std::lock_guard lock(e->swap);
  return e->current;
}

SessionInfo SessionStore::info(const std::string& id) const { return describe(id, *snapshot(id)); }

std::vector<Image> SessionStore::step(const std::string& id, const StepRequest& req) {
  auto e = entry(id);
  std::lock_guard w(e->writer);
  if (!e->generator) throw std::invalid_argument("the oracle generator needs an evaluation session");
  Session s = *snapshot(id);
  std::vector<Image> clip = s.step(req, *e->generator);
  commit(id, *e, std::move(s));
  return clip;
}

SessionInfo SessionStore::edit(const std::string& id, const std::vector<EditOp>& ops) {
  auto e = entry(id);
  std::lock_guard w(e->writer);
  Session s = *snapshot(id);
  for (const EditOp& op : ops) s.edit(op);
  commit(id, *e, s);
  return describe(id, s);
}

HttpResponse handle_request(SessionStore& store, const std::string& method, const std::string& path,
                            const std::string& body, const std::map<std::string, std::string>& query) {
  static const std::regex sessions_re("^/sessions/?$");
  static const std::regex one_re("^/sessions/([^/]+)/?$");
  static const std::regex sub_re("^/sessions/([^/]+)/(memory|step|edit|bundle)$");
  static const std::regex clip_re("^/sessions/([^/]+)/clips/(-?[0-9]+)$");
  std::smatch m;
  try {
    if (path == "/health" && method == "GET") return json_response(200, {{"status", "ok"}});
    if (path == "/trajectory/echo" && method == "POST") {
      HttpResponse r;
      r.body = trajectory_to_json(trajectory_from_json(body));
      return r;
    }
    if (std::regex_match(path, m, sessions_re)) {
      if (method == "POST") {
        HttpResponse r;
        r.status = 201;
        r.body = store.create(body).to_json();
        return r;
      }
      if (method == "GET") {
        json a = json::array();
        for (const SessionInfo& i : store.list()) a.push_back(json::parse(i.to_json()));
        return json_response(200, a);
      }
      return error_response(405, "method not allowed");
    }
    if (std::regex_match(path, m, one_re)) {
      if (method != "GET") return error_response(405, "method not allowed");
      HttpResponse r;
      r.body = store.info(m[1]).to_json();
      return r;
    }
    if (std::regex_match(path, m, clip_re)) {
      if (method != "GET") return error_response(405, "method not allowed");
      const auto s = store.snapshot(m[1]);
      const int k = std::stoi(m[2]);
      const Image strip = clip_strip(*s, k);
      Image out = strip;
      if (const auto f = query.find("frame"); f != query.end()) {
        const auto frames = s->clip_frames(k);
        int i = 0;
        try {
          i = std::stoi(f->second);
        } catch (const std::exception&) {
          return error_response(400, "frame must be an integer");
        }
        if (i < 0 || i >= static_cast<int>(frames.size())) throw NotFound("no frame " + f->second);
        out = frames[i]->rgb;
      }
      HttpResponse r;
      r.content_type = "image/png";
      r.body = encode_png(out);
      r.headers.emplace_back("X-Scenemem-Frames", std::to_string(s->clip_frames(k).size()));
      return r;
    }
    if (std::regex_match(path, m, sub_re)) {
      const std::string id = m[1], what = m[2];
      if (what == "memory" && method == "GET") {
        const auto s = store.snapshot(id);
        HttpResponse r;
        r.content_type = "application/octet-stream";
        r.body = encode_spcl(s->memory().snapshot());
        r.headers.emplace_back("X-Scenemem-Clip-Index", std::to_string(s->clip_index()));
        if (s->memory().empty()) r.headers.emplace_back("X-Scenemem-Warning", "memory is empty");
        return r;
      }
      if (what == "step" && method == "POST") {
        const StepRequest req = parse_step_request(body);
        const auto clip = store.step(id, req);
        const SessionInfo i = store.info(id);
        json j = json::parse(i.to_json());
        j["frames"] = clip.size();
        j["clip_url"] = "/sessions/" + id + "/clips/" + std::to_string(i.clip_index);
        return json_response(200, j);
      }
      if (what == "edit" && method == "POST") {
        std::vector<EditOp> ops;
        const json j = json::parse(body);
        if (j.is_array()) {
          for (const json& e : j) ops.push_back(parse_edit(e.dump()));
        } else {
          ops.push_back(parse_edit(body));
        }
        HttpResponse r;
        r.body = store.edit(id, ops).to_json();
        return r;
      }
      if (what == "bundle" && method == "GET") {
        HttpResponse r;
        r.content_type = "application/octet-stream";
        r.body = store.snapshot(id)->export_bundle();
        return r;
      }
      if (what == "bundle" && method == "PUT") {
        HttpResponse r;
        r.body = store.replace(id, body).to_json();
        return r;
      }
      return error_response(405, "method not allowed");
    }
    return error_response(404, "no route " + path);
  } catch (const NotFound& e) {
    return error_response(404, e.what());
  } catch (const FormatError& e) {
    return error_response(400, e.what());
  } catch (const json::exception& e) {
    return error_response(400, e.what());
  } catch (const std::invalid_argument& e) {
    return error_response(400, e.what());
  } catch (const std::out_of_range& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

struct HttpServer::Impl {
  explicit Impl(SessionStore& s) : store(s) {}
  SessionStore& store;
  httplib::Server server;
};

HttpServer::HttpServer(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const HttpResponse r = handle_request(impl_->store, req.method, req.path, req.body, query);
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, r.content_type);
  };
  const std::string any = R"(/.*)";
  impl_->server.Get(any, route);
  impl_->server.Post(any, route);
  impl_->server.Put(any, route);
  impl_->server.Delete(any, route);
  // Bundles and clips can be large.
  impl_->server.set_payload_max_length(std::size_t(1) << 31);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace scenemem
