#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "refsteer/runtime.hpp"

namespace httplib {
class Server;
}

namespace refsteer {

/// Errors that map onto HTTP statuses.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& message) : Error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ServiceOptions {
  std::string default_task;
  double idle_timeout_s = 600.0;
  double auto_rate = 10.0;  // executed actions per second in auto-step mode
  std::uint64_t seed = 0;
};

nlohmann::json engine_snapshot(const Engine& engine);

/// Sessions, each owning one engine. Engine access is serialized per
/// session; frames (one snapshot per executed action) are buffered for
/// streaming consumers.
class SessionManager {
 public:
  using Clock = std::chrono::steady_clock;

  SessionManager(const Policy& policy, ServiceOptions options);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  std::string create(const nlohmann::json& body);
  nlohmann::json state(const std::string& id);
  nlohmann::json refer(const std::string& id, const nlohmann::json& body);
  nlohmann::json step(const std::string& id, const nlohmann::json& body);
  nlohmann::json reset(const std::string& id, const nlohmann::json& body);
  nlohmann::json set_auto(const std::string& id, const nlohmann::json& body);

  /// Frames with index >= from, waiting up to `wait` for new ones. `closed`
  /// is set when the session is gone; `done` when its episode has ended.
  std::vector<std::string> frames(const std::string& id, std::size_t from,
                                  std::chrono::milliseconds wait, bool* closed, bool* done);

  /// Expires idle sessions and advances auto-stepping ones.
  void tick(Clock::time_point now);

  std::size_t session_count();
  void start_background();
  void stop_background();

 private:
  struct Session {
    std::string id;
    std::unique_ptr<Engine> engine;
    std::mutex engine_mutex;
    std::mutex frame_mutex;
    std::condition_variable frame_cv;
    std::vector<std::string> frames;
    int episode = 0;
    bool closed = false;
    bool done = false;
    bool auto_step = false;
    double auto_rate = 10.0;
    Clock::time_point created;
    Clock::time_point last_activity;
    Clock::time_point next_auto;
  };

  std::shared_ptr<Session> find(const std::string& id);
  void attach(Session& s);
  nlohmann::json snapshot_locked(Session& s);

  const Policy& policy_;
  ServiceOptions options_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
  Rng id_rng_;

  std::thread ticker_;
  std::mutex ticker_mutex_;
  std::condition_variable ticker_cv_;
  bool stopping_ = false;
};

/// Registers the JSON API routes on an httplib server.
void register_routes(httplib::Server& server, SessionManager& manager);

/// Blocking HTTP server on the given port.
void serve(const Policy& policy, const ServiceOptions& options, const std::string& host, int port);

}  // namespace refsteer
