// SPDX-License-Identifier: Apache-2.0
//
// Session registry and its HTTP front end.
//
// SessionStore holds the live sessions, persists every committed change as a
// bundle under the data directory and serialises writers per session. Readers
// get immutable snapshots, so a long step never blocks memory downloads.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "scenemem/clip_generator.hpp"
#include "scenemem/session.hpp"

namespace scenemem {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "scenemem-data";
  /// "oracle" renders the true scene (evaluation sessions only); "flow" samples a checkpoint.
  std::string generator = "oracle";
  std::filesystem::path checkpoint;
  FlowOptions flow;
  SessionConfig session;
  SceneParams scene;
  int width = 128;
  int height = 128;
  double fov_deg = 70.0;

  void validate() const;
  std::string to_json() const;
  static ServiceConfig from_json(const std::string& text);
  /// Reads a JSON file; a missing path yields the defaults.
  static ServiceConfig load(const std::filesystem::path& path);
  /// SCENEMEM_PORT and SCENEMEM_DATA_DIR override the file. Throws std::invalid_argument on a bad port.
  void apply_env();
};

/// Thrown for unknown session ids or clip indices.
class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SessionInfo {
  std::string id;
  int clip_index = 0;
  std::size_t cell_count = 0;
  std::size_t archive_size = 0;
  std::string mode;
  uint64_t checksum = 0;
  std::string to_json() const;
};

/// Creation document:
///   {"scenario_seed": n}                           start pose and sweep drawn from n
///   {"scene_seed": n, "camera": CAMERA}            explicit start camera
///   {"frame": {"rgb": png, "depth": npy, "camera": CAMERA}}  freeform, paths relative to base_dir
/// Optional "config" (session config fields) and "scene" (scene parameters)
/// override the service defaults. CAMERA uses the trajectory element schema.
Session create_session(const std::string& doc, const ServiceConfig& defaults,
                       const std::filesystem::path& base_dir = {});

/// The generator the service uses for `session`. Throws std::invalid_argument
/// if the oracle is requested for a freeform session.
std::shared_ptr<const ClipGenerator> make_generator(const ServiceConfig& cfg, const Session& session);

/// Clip k's frames side by side (k = 0 is the initial frame). Throws NotFound.
Image clip_strip(const Session& session, int k);

class SessionStore {
 public:
  explicit SessionStore(ServiceConfig cfg);

  const ServiceConfig& config() const { return cfg_; }

  SessionInfo create(const std::string& doc);
  /// Registers an imported bundle under a fresh id.
  SessionInfo import_bundle(const std::string& bytes);
  /// Replaces an existing session's state with a bundle.
  SessionInfo replace(const std::string& id, const std::string& bytes);
  std::vector<SessionInfo> list() const;
  SessionInfo info(const std::string& id) const;
  std::shared_ptr<const Session> snapshot(const std::string& id) const;

  /// Runs one step; other sessions and readers proceed concurrently.
  std::vector<Image> step(const std::string& id, const StepRequest& req);
  SessionInfo edit(const std::string& id, const std::vector<EditOp>& ops);

 private:
  struct Entry {
    std::mutex writer;
    mutable std::mutex swap;
    std::shared_ptr<const Session> current;
    std::shared_ptr<const ClipGenerator> generator;
  };

  std::shared_ptr<Entry> entry(const std::string& id) const;
  SessionInfo add(Session s);
  void commit(const std::string& id, Entry& e, Session s);
  void persist(const std::string& id, const Session& s) const;
  std::shared_ptr<const ClipGenerator> generator_for(const Session& s) const;

  ServiceConfig cfg_;
  std::shared_ptr<const gen::Model> model_;
  mutable std::mutex registry_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
  uint64_t next_id_ = 1;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

/// Routes one request. Exposed separately from the socket server so routing
/// can be exercised without a network.
HttpResponse handle_request(SessionStore& store, const std::string& method, const std::string& path,
                            const std::string& body, const std::map<std::string, std::string>& query = {});

class HttpServer {
 public:
  explicit HttpServer(SessionStore& store);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port. Throws std::runtime_error.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scenemem
