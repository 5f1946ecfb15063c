#include "refsteer/service.hpp"

#include <httplib.h>

#include <cstdio>
#include <iostream>

#include "refsteer/io.hpp"

namespace refsteer {

namespace {

nlohmann::json vec3(const Vec3& v) {
  return {v.x(), v.y(), v.z()};
}

nlohmann::json action_json(const Action& a) {
  const ActionVector v = flatten(a);
  return std::vector<double>(v.data(), v.data() + kActionDim);
}

nlohmann::json box_json(const Box& b) {
  return {{"lo", vec3(b.lo)}, {"hi", vec3(b.hi)}};
}

std::string body_error(const std::string& what) {
  return "request body: " + what;
}

nlohmann::json parse_body(const std::string& body) {
  if (body.empty()) {
    return nlohmann::json::object();
  }
  try {
    nlohmann::json j = nlohmann::json::parse(body);
    if (!j.is_object()) {
      throw ServiceError(400, body_error("expected a JSON object"));
    }
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ServiceError(400, body_error(e.what()));
  }
}

double finite_number(const nlohmann::json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_number()) {
    throw ServiceError(400, body_error(std::string("missing numeric field '") + key + "'"));
  }
  const double v = body[key].get<double>();
  if (!std::isfinite(v)) {
    throw ServiceError(400, body_error(std::string("field '") + key + "' must be finite"));
  }
  return v;
}

}  // namespace

nlohmann::json engine_snapshot(const Engine& engine) {
  const WorldState& w = engine.world();
  nlohmann::json j;
  j["task"] = engine.task().name;
  j["n1"] = engine.policy().horizon().n1;
  j["n2"] = engine.policy().horizon().n2;
  j["i"] = engine.i();
  j["ee"] = action_json(w.ee);
  j["anchors"] = actions_to_json(engine.anchors());
  j["history"] = actions_to_json(engine.history());
  j["anchor_history_len"] = engine.history().size();
  j["executed"] = actions_to_json(engine.executed());
  j["frame"] = static_cast<long>(engine.executed().size()) - 1;
  const auto& ref = engine.referring();
  j["referring"] = ref ? vec3(ref->point.p) : nlohmann::json(nullptr);
  j["k"] = ref ? nlohmann::json(ref->k) : nlohmann::json(nullptr);
  j["d_min"] = ref ? nlohmann::json(min_distance(engine.executed(), ref->point.p))
                   : nlohmann::json(nullptr);
  j["done"] = engine.done();
  j["success"] = engine.success();
  j["history_resets"] = engine.history_resets();
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : w.objects) {
    objects.push_back({{"id", o.id}, {"position", vec3(o.position)}, {"radius", o.radius},
                       {"held", o.held}});
  }
  j["objects"] = std::move(objects);
  nlohmann::json obstacles = nlohmann::json::array();
  for (const auto& b : w.obstacles) {
    obstacles.push_back(box_json(b));
  }
  j["obstacles"] = std::move(obstacles);
  j["workspace"] = {{"bounds", box_json(w.workspace.bounds)},
                    {"base", vec3(w.workspace.base)},
                    {"reach", w.workspace.reach}};
  j["goal"] = {{"position", vec3(w.goal)}, {"radius", w.goal_radius}};
  j["log"] = engine.log();
  return j;
}

SessionManager::SessionManager(const Policy& policy, ServiceOptions options)
    : policy_(policy), options_(std::move(options)), id_rng_(options_.seed ^ 0x5EED5EEDULL) {
  if (options_.default_task.empty()) {
    options_.default_task = policy.task();
  }
}

SessionManager::~SessionManager() {
  stop_background();
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) {
  std::lock_guard<std::mutex> lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    throw ServiceError(404, "unknown session " + id);
  }
  it->second->last_activity = Clock::now();
  return it->second;
}

void SessionManager::attach(Session& s) {
  s.engine->on_action = [&s](const Engine& engine, const Action&) {
    nlohmann::json frame = engine_snapshot(engine);
    frame["episode"] = s.episode;
    std::lock_guard<std::mutex> lock(s.frame_mutex);
    s.frames.push_back(frame.dump());
    s.frame_cv.notify_all();
  };
}

nlohmann::json SessionManager::snapshot_locked(Session& s) {
  nlohmann::json j = engine_snapshot(*s.engine);
  j["session_id"] = s.id;
  j["episode"] = s.episode;
  j["seed"] = s.engine->seed();
  j["auto"] = s.auto_step;
  {
    std::lock_guard<std::mutex> lock(s.frame_mutex);
    s.done = s.engine->done();
    s.frame_cv.notify_all();
  }
  return j;
}

std::string SessionManager::create(const nlohmann::json& body) {
  std::string task_name = options_.default_task;
  if (body.contains("task")) {
    if (!body["task"].is_string()) {
      throw ServiceError(400, body_error("'task' must be a string"));
    }
    task_name = body["task"].get<std::string>();
  }
  Task task;
  try {
    task = make_task(task_name);
  } catch (const Error& e) {
    throw ServiceError(400, e.what());
  }
  if (!(task.horizon == policy_.horizon())) {
    throw ServiceError(400, "checkpoint was trained for a different horizon than task " + task_name);
  }
  auto s = std::make_shared<Session>();
  std::uint64_t seed = 0;
  {
    std::lock_guard<std::mutex> lock(sessions_mutex_);
    seed = body.contains("seed") ? body["seed"].get<std::uint64_t>() : id_rng_.fork() % 1000000007ULL;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%06llx%04llx", static_cast<unsigned long long>(id_rng_.fork() & 0xFFFFFF),
                  static_cast<unsigned long long>(++counter_ & 0xFFFF));
    s->id = buf;
  }
  s->engine = std::make_unique<Engine>(policy_, task, seed);
  s->auto_rate = options_.auto_rate;
  s->created = s->last_activity = Clock::now();
  attach(*s);
  {
    nlohmann::json frame = engine_snapshot(*s->engine);
    frame["episode"] = 0;
    s->frames.push_back(frame.dump());
  }
  std::lock_guard<std::mutex> lock(sessions_mutex_);
  sessions_[s->id] = s;
  return s->id;
}

nlohmann::json SessionManager::state(const std::string& id) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->engine_mutex);
  return snapshot_locked(*s);
}

nlohmann::json SessionManager::refer(const std::string& id, const nlohmann::json& body) {
  auto s = find(id);
  const Vec3 p(finite_number(body, "x"), finite_number(body, "y"), finite_number(body, "z"));
  std::lock_guard<std::mutex> lock(s->engine_mutex);
  if (s->engine->done()) {
    throw ServiceError(409, "episode is finished; reset the session first");
  }
  const int k = s->engine->set_referring(ReferringPoint{p});
  nlohmann::json out = snapshot_locked(*s);
  out["k"] = k;
  const WorldState& w = s->engine->world();
  std::string warning;
  if (!w.workspace.contains(p)) {
    warning = "referring point lies outside the reachable workspace";
  }
  for (const auto& box : w.obstacles) {
    if (box.contains(p)) {
      warning = "referring point lies inside an obstacle";
    }
  }
  if (!warning.empty()) {
    out["warning"] = warning;
  }
  return out;
}

nlohmann::json SessionManager::step(const std::string& id, const nlohmann::json& body) {
  auto s = find(id);
  int count = 1;
  if (body.contains("count")) {
    if (!body["count"].is_number_integer() || body["count"].get<int>() < 1) {
      throw ServiceError(400, body_error("'count' must be a positive integer"));
    }
    count = body["count"].get<int>();
  }
  std::lock_guard<std::mutex> lock(s->engine_mutex);
  if (s->engine->done()) {
    throw ServiceError(409, "episode is finished; reset the session first");
  }
  for (int n = 0; n < count && !s->engine->done(); ++n) {
    s->engine->step_once();
  }
  return snapshot_locked(*s);
}

nlohmann::json SessionManager::reset(const std::string& id, const nlohmann::json& body) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->engine_mutex);
  std::uint64_t seed = 0;
  {
    std::lock_guard<std::mutex> ids(sessions_mutex_);
    seed = body.contains("seed") ? body["seed"].get<std::uint64_t>() : id_rng_.fork() % 1000000007ULL;
  }
  s->engine->reset(seed);
  nlohmann::json frame = engine_snapshot(*s->engine);
  {
    std::lock_guard<std::mutex> frames(s->frame_mutex);
    ++s->episode;
    frame["episode"] = s->episode;
    s->frames.push_back(frame.dump());
    s->frame_cv.notify_all();
  }
  return snapshot_locked(*s);
}

nlohmann::json SessionManager::set_auto(const std::string& id, const nlohmann::json& body) {
  auto s = find(id);
  if (!body.contains("enabled") || !body["enabled"].is_boolean()) {
    throw ServiceError(400, body_error("missing boolean field 'enabled'"));
  }
  std::lock_guard<std::mutex> lock(s->engine_mutex);
  s->auto_step = body["enabled"].get<bool>();
  if (body.contains("rate")) {
    const double rate = finite_number(body, "rate");
    if (rate <= 0.0) {
      throw ServiceError(400, body_error("'rate' must be positive"));
    }
    s->auto_rate = rate;
  }
  s->next_auto = Clock::now();
  return snapshot_locked(*s);
}

std::vector<std::string> SessionManager::frames(const std::string& id, std::size_t from,
                                                std::chrono::milliseconds wait, bool* closed,
                                                bool* done) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard<std::mutex> lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
      *closed = true;
      *done = true;
      return {};
    }
    s = it->second;
  }
  std::unique_lock<std::mutex> lock(s->frame_mutex);
  s->frame_cv.wait_for(lock, wait, [&] { return s->frames.size() > from || s->closed; });
  *closed = s->closed;
  *done = s->done;
  std::vector<std::string> out;
  for (std::size_t n = from; n < s->frames.size(); ++n) {
    out.push_back(s->frames[n]);
  }
  return out;
}

void SessionManager::tick(Clock::time_point now) {
  std::vector<std::shared_ptr<Session>> live;
  {
    std::lock_guard<std::mutex> lock(sessions_mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      const double idle = std::chrono::duration<double>(now - it->second->last_activity).count();
      if (idle > options_.idle_timeout_s) {
        {
          std::lock_guard<std::mutex> frames(it->second->frame_mutex);
          it->second->closed = true;
          it->second->frame_cv.notify_all();
        }
        it = sessions_.erase(it);
      } else {
        live.push_back(it->second);
        ++it;
      }
    }
  }
  for (auto& s : live) {
    std::unique_lock<std::mutex> lock(s->engine_mutex, std::try_to_lock);
    if (!lock.owns_lock() || !s->auto_step || s->engine->done() || now < s->next_auto) {
      continue;
    }
    const auto executed = s->engine->step_once();
    s->next_auto = now + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(
                             static_cast<double>(executed.size()) / s->auto_rate));
    s->last_activity = now;
    snapshot_locked(*s);
  }
}

std::size_t SessionManager::session_count() {
  std::lock_guard<std::mutex> lock(sessions_mutex_);
  return sessions_.size();
}

void SessionManager::start_background() {
  std::lock_guard<std::mutex> lock(ticker_mutex_);
  if (ticker_.joinable()) {
    return;
  }
  stopping_ = false;
  ticker_ = std::thread([this] {
    std::unique_lock<std::mutex> lk(ticker_mutex_);
    while (!stopping_) {
      lk.unlock();
      tick(Clock::now());
      lk.lock();
      ticker_cv_.wait_for(lk, std::chrono::milliseconds(20), [this] { return stopping_; });
    }
  });
}

void SessionManager::stop_background() {
  {
    std::lock_guard<std::mutex> lock(ticker_mutex_);
    stopping_ = true;
  }
  ticker_cv_.notify_all();
  if (ticker_.joinable()) {
    ticker_.join();
  }
}

// ---------------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& j) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    send_json(res, e.status(), {{"error", e.what()}});
  } catch (const nlohmann::json::exception& e) {
    send_json(res, 400, {{"error", std::string("bad request: ") + e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& manager) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.Post("/api/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, {{"session_id", manager.create(parse_body(req.body))}}); });
  });
  server.Get(R"(/api/sessions/([^/]+)/state)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, manager.state(req.matches[1])); });
  });
  server.Post(R"(/api/sessions/([^/]+)/refer)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, manager.refer(req.matches[1], parse_body(req.body))); });
  });
  server.Post(R"(/api/sessions/([^/]+)/step)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, manager.step(req.matches[1], parse_body(req.body))); });
  });
  server.Post(R"(/api/sessions/([^/]+)/reset)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, manager.reset(req.matches[1], parse_body(req.body))); });
  });
  server.Post(R"(/api/sessions/([^/]+)/auto)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, manager.set_auto(req.matches[1], parse_body(req.body))); });
  });
  server.Get(R"(/api/sessions/([^/]+)/stream)", [&](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    guarded(res, [&] {
      manager.state(id);
      std::size_t from = 0;
      if (req.has_param("from")) {
        from = std::stoul(req.get_param_value("from"));
      }
      const bool until_done = req.has_param("until_done") && req.get_param_value("until_done") != "0";
      auto cursor = std::make_shared<std::size_t>(from);
      res.set_chunked_content_provider(
          "application/x-ndjson",
          [&manager, id, cursor, until_done](std::size_t, httplib::DataSink& sink) {
            bool closed = false;
            bool done = false;
            const auto batch = manager.frames(id, *cursor, std::chrono::milliseconds(500), &closed, &done);
            for (const auto& frame : batch) {
              const std::string line = frame + "\n";
              if (!sink.write(line.data(), line.size())) {
                return false;
              }
              ++*cursor;
            }
            if (closed || (until_done && done && batch.empty())) {
              sink.done();
            }
            return true;
          });
    });
  });
}

void serve(const Policy& policy, const ServiceOptions& options, const std::string& host, int port) {
  SessionManager manager(policy, options);
  manager.start_background();
  httplib::Server server;
  register_routes(server, manager);
  std::cerr << "listening on http://" << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace refsteer
