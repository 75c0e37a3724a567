#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsdrag/edit_run.hpp"
#include "gsdrag/guidance_source.hpp"

namespace gsdrag {

/// Machine error codes carried by every 4xx/5xx body as {"error": code}.
inline constexpr const char* kApiErrorCodes[] = {
    "invalid_request",  "scene_parse_error", "payload_too_large", "no_scene",     "not_found",
    "method_not_allowed", "empty_selection", "no_surface",        "draft_incomplete", "run_active",
    "no_run",           "run_not_done",      "run_not_paused",    "stale_round",  "guidance_unavailable",
    "internal_error"};

struct ApiRequest {
  std::string method;
  /// Path plus optional query string, e.g. /v1/render?camera=0.
  std::string target;
  std::string body;
  std::map<std::string, std::string> headers;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

struct ServiceOptions {
  /// Guidance used when the loaded scene has no inline target.
  GuidanceFactory guidance;
  /// Checkpoints of interrupted runs go here on shutdown.
  std::filesystem::path checkpoint_dir;
  int progress_every = 10;
  int preview_width = 256;
  std::size_t body_limit = 256u << 20;
  /// When set, ?session=<name> selects an independent session.
  bool multi_session = false;
};

/// One scene, its cameras, the draft edit and at most one edit run.
///
/// Lifecycle calls are serialized; the run itself executes on a worker
/// thread and publishes immutable snapshots every few iterations, which is
/// all that render and progress requests ever see while it runs.
class Session {
 public:
  Session(std::string name, const ServiceOptions& options);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& name() const { return name_; }
  ApiResponse handle(const std::string& method, const std::string& path,
                     const std::map<std::string, std::string>& query, const std::string& body);

  /// Events with id > `after`, waiting up to `timeout` for the first one.
  std::vector<nlohmann::json> wait_events(std::int64_t after, std::chrono::milliseconds timeout);

  /// Stops an active run and writes its checkpoint; returns the path, if any.
  std::optional<std::filesystem::path> flush();
  /// Adopts a checkpointed run (paused) together with its scene and cameras.
  void restore(const std::filesystem::path& checkpoint);
  /// Blocks until no worker is running.
  void wait_idle();

 private:
  ApiResponse load_scene(const nlohmann::json& body);
  ApiResponse render_view(const std::map<std::string, std::string>& query);
  ApiResponse select_frustum(const nlohmann::json& body);
  ApiResponse set_points(const nlohmann::json& body);
  ApiResponse start(const nlohmann::json& body);
  ApiResponse pause();
  ApiResponse resume();
  ApiResponse commit(const nlohmann::json& body);
  ApiResponse preview(const std::string& id);
  nlohmann::json status_json() const;
  nlohmann::json draft_json() const;

  void require_scene() const;
  void require_idle() const;
  void join_worker();
  void launch();
  void publish(const EditRun& run, bool force);
  void finish(const EditRun& run);
  void push_event(nlohmann::json event);
  std::shared_ptr<const GaussianScene> shown_scene() const;
  std::vector<std::uint8_t> draft_mask() const;

  std::string name_;
  const ServiceOptions& options_;

  /// Serializes lifecycle and scene mutations.
  std::mutex control_;
  /// Guards everything the worker publishes.
  mutable std::mutex state_;
  std::condition_variable events_cv_;

  std::shared_ptr<const GaussianScene> scene_;
  std::shared_ptr<const GaussianScene> target_;
  std::vector<Camera> cameras_;
  std::uint64_t scene_id_ = 0;
  EditSpec draft_;
  bool mask_set_ = false;

  std::unique_ptr<EditRun> run_;
  std::thread worker_;
  int run_id_ = 0;
  int round_ = 0;
  nlohmann::json rounds_ = nlohmann::json::array();

  // Published by the worker.
  RunStatus status_ = RunStatus::Done;
  bool running_ = false;
  int iteration_ = 0;
  int total_ = 0;
  std::string reason_;
  std::string history_csv_;
  std::size_t published_records_ = 0;
  std::shared_ptr<const GaussianScene> run_scene_;
  std::vector<nlohmann::json> events_;
  std::int64_t next_event_ = 1;
  std::map<std::int64_t, std::shared_ptr<const GaussianScene>> previews_;
};

/// Routes requests under /v1 to sessions.
class Service {
 public:
  explicit Service(ServiceOptions options);

  const ServiceOptions& options() const { return options_; }
  ApiResponse handle(const ApiRequest& request);
  /// The session a target's query selects (the default one unless
  /// multi-session is enabled).
  Session& session_for(const std::string& target);
  /// Flushes every session; returns the checkpoints written.
  std::vector<std::filesystem::path> shutdown();

 private:
  ServiceOptions options_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
};

/// Splits a request target into path and percent-decoded query parameters.
std::pair<std::string, std::map<std::string, std::string>> split_target(const std::string& target);

nlohmann::json api_schema();

/// HTTP and WebSocket transport for a Service on one port: one thread per
/// connection. WS /v1/edit/progress streams session events; a reconnect with
/// ?last_event_id=N (or a Last-Event-ID header) replays everything after N.
class Server {
 public:
  Server(Service& service, std::string host, unsigned short port);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting. Throws std::system_error when the port is
  /// taken.
  void start();
  /// Bound port (useful after asking for port 0).
  unsigned short port() const { return port_; }
  /// Stops accepting, closes open connections and waits for their threads.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  unsigned short port_ = 0;
};

}  // namespace gsdrag
