#include <doctest.h>

#include <chrono>
#include <thread>

#include "refsteer/runtime.hpp"
#include "refsteer/service.hpp"

// After Eigen: <resolv.h> (pulled in by httplib) defines a _res macro.
#include <httplib.h>

using namespace refsteer;

namespace {

// Untrained but structurally complete policy; fast enough for closed loops.
std::unique_ptr<Policy> tiny_policy(const std::string& task_name = "reach-via") {
  const Task task = make_task(task_name);
  std::vector<Demonstration> demos;
  for (std::uint64_t s = 0; s < 4; ++s) {
    demos.push_back(expert_demo(task, s));
  }
  TrainConfig c;
  c.n1 = task.horizon.n1;
  c.n2 = task.horizon.n2;
  c.diffusion_steps = 5;
  PolicyArchitecture a;
  a.encoder = {8, 8};
  a.hidden = {16};
  a.time_embed_dim = 4;
  a.tpp.d_model = 8;
  a.tpp.heads = 2;
  a.tpp.layers = 1;
  a.tpp.d_ff = 8;
  return std::make_unique<Policy>(c, PolicyStats{ActionNormalizer::fit(demos), ObsNormalizer::fit(demos)},
                                  task.name, a);
}

}  // namespace

TEST_CASE("engine rollout invariants") {
  const auto policy = tiny_policy();
  const Task task = make_task("reach-via");
  Engine engine(*policy, task, 11);
  CHECK(engine.i() == 1);
  CHECK(engine.history().front() == engine.world().ee);
  const Vec3 p(0.45, 0.35, 0.1);
  const int k = engine.set_referring(ReferringPoint{p});
  CHECK(k >= 2);
  CHECK(k <= task.horizon.n1);
  CHECK(engine.set_referring(ReferringPoint{p}) == k);
  CHECK(engine.history_resets() == 0);

  bool pinned_seen = false;
  int frames = 0;
  engine.on_action = [&](const Engine&, const Action&) { ++frames; };
  while (!engine.done()) {
    const AnchorSequence before = engine.history();
    const bool pending = engine.referring()->k > engine.i();
    const auto executed = engine.step_once();
    CHECK(engine.i() == static_cast<int>(before.size()) + 1);
    CHECK(std::equal(before.begin(), before.end(), engine.history().begin()));
    // Every history row is reproduced in the fresh anchor plan.
    for (std::size_t r = 0; r < before.size(); ++r) {
      CHECK(engine.anchors()[r] == before[r]);
    }
    if (pending) {
      CHECK(engine.anchors()[static_cast<std::size_t>(k - 1)].trans == p);
      pinned_seen = true;
    }
    CHECK(executed.back() == engine.history().back());
  }
  CHECK(pinned_seen);
  // The slot-k anchor is executed verbatim, so the trace passes exactly through p.
  CHECK(min_distance(engine.executed(), p) < 0.02);
  CHECK(frames == static_cast<int>(engine.executed().size()) - 1);
  CHECK(static_cast<int>(engine.executed().size()) <= task.horizon.n + 1);
  CHECK_THROWS_AS(engine.step_once(), Error);
  CHECK_THROWS_AS(engine.set_referring(ReferringPoint{p}), Error);

  const RolloutRecord r = engine.record();
  CHECK(r.referring == p);
  CHECK(r.k == k);
  engine.reset(12);
  CHECK(engine.i() == 1);
  CHECK(!engine.done());
  CHECK(!engine.referring());
}

TEST_CASE("changing the referring point resets the history once") {
  const auto policy = tiny_policy();
  Engine engine(*policy, make_task("reach-via"), 3);
  engine.set_referring(ReferringPoint{Vec3(0.4, 0.4, 0.1)});
  engine.step_once();
  engine.step_once();
  REQUIRE(engine.i() == 3);
  engine.set_referring(ReferringPoint{Vec3(0.5, 0.3, 0.1)});
  CHECK(engine.history_resets() == 1);
  CHECK(engine.i() == 1);
  CHECK(engine.history().front() == engine.world().ee);
  CHECK(engine.referring()->k >= 2);
  CHECK_THROWS_AS(engine.set_referring(ReferringPoint{Vec3(NAN, 0, 0)}), Error);
}

TEST_CASE("engine rejects mismatched policies") {
  const auto policy = tiny_policy();
  CHECK_THROWS_AS(Engine(*policy, make_task("push-t-via"), 1), Error);
}

TEST_CASE("episodes are reproducible and independent of worker count") {
  const auto policy = tiny_policy();
  const Task task = make_task("reach-via");
  RolloutSpec spec;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  const auto a = run_episodes(*policy, task, seeds, spec, 1);
  const auto b = run_episodes(*policy, task, seeds, spec, 3);
  REQUIRE(a.size() == 4);
  for (std::size_t n = 0; n < a.size(); ++n) {
    CHECK(a[n].trajectory == b[n].trajectory);
    CHECK(a[n].referring == b[n].referring);
  }
  spec.mode = ReferMode::Fixed;
  spec.fixed = Vec3(0.5, 0.1, 0.1);
  for (const auto& r : run_episodes(*policy, task, {5, 6}, spec)) {
    CHECK(r.referring == Vec3(0.5, 0.1, 0.1));
  }
  spec.mode = ReferMode::None;
  CHECK(!run_episode(*policy, task, 7, spec).referring);
  spec.mode = ReferMode::Via;
  spec.method = "baseline";
  const auto base = run_episode(*policy, task, 7, spec);
  CHECK(base.method == "baseline");
  CHECK(static_cast<int>(base.trajectory.size()) == task.horizon.n + 1);
  CHECK(parse_refer_mode("ood") == ReferMode::Ood);
  CHECK_THROWS_AS(parse_refer_mode("sideways"), Error);
}

TEST_CASE("session manager lifecycle") {
  const auto policy = tiny_policy();
  ServiceOptions opts;
  opts.default_task = "reach-via";
  opts.idle_timeout_s = 5.0;
  SessionManager m(*policy, opts);
  const std::string id = m.create({{"seed", 5}});
  auto st = m.state(id);
  CHECK(st["i"] == 1);
  CHECK(st["done"] == false);
  CHECK(st["referring"].is_null());

  auto ref = m.refer(id, {{"x", 0.45}, {"y", 0.35}, {"z", 0.1}});
  CHECK(ref["k"].get<int>() >= 2);
  CHECK(!ref.contains("warning"));
  CHECK(m.refer(id, {{"x", 3.0}, {"y", 0.0}, {"z", 0.1}}).contains("warning"));

  auto after = m.step(id, {{"count", 2}});
  CHECK(after["i"] == 3);
  bool closed = false, done = false;
  const auto frames = m.frames(id, 0, std::chrono::milliseconds(0), &closed, &done);
  CHECK(frames.size() == after["executed"].size());
  CHECK(!closed);

  m.step(id, {{"count", 100}});
  CHECK(m.state(id)["done"] == true);
  try {
    m.step(id, {});
    FAIL("expected 409");
  } catch (const ServiceError& e) {
    CHECK(e.status() == 409);
  }
  auto fresh = m.reset(id, {{"seed", 9}});
  CHECK(fresh["episode"] == 1);
  CHECK(fresh["i"] == 1);

  try {
    m.state("nope");
    FAIL("expected 404");
  } catch (const ServiceError& e) {
    CHECK(e.status() == 404);
  }
  CHECK_THROWS_AS(m.refer(id, {{"x", 0.1}}), ServiceError);
  CHECK_THROWS_AS(m.step(id, {{"count", 0}}), ServiceError);
  CHECK_THROWS_AS(m.create({{"task", "push-t-via"}}), ServiceError);

  m.set_auto(id, {{"enabled", true}, {"rate", 1000.0}});
  m.tick(SessionManager::Clock::now());
  CHECK(m.state(id)["i"].get<int>() >= 1);
  CHECK(m.session_count() == 1);
  m.tick(SessionManager::Clock::now() + std::chrono::seconds(10));
  CHECK(m.session_count() == 0);
}

TEST_CASE("http api round trip") {
  const auto policy = tiny_policy();
  ServiceOptions opts;
  opts.default_task = "reach-via";
  SessionManager manager(*policy, opts);
  httplib::Server server;
  register_routes(server, manager);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto created = client.Post("/api/sessions", R"({"seed": 3})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = nlohmann::json::parse(created->body)["session_id"];

  auto refer = client.Post("/api/sessions/" + id + "/refer", R"({"x":0.45,"y":0.35,"z":0.1})",
                           "application/json");
  REQUIRE(refer);
  CHECK(refer->status == 200);
  CHECK(nlohmann::json::parse(refer->body)["k"].get<int>() >= 2);

  auto step = client.Post("/api/sessions/" + id + "/step", R"({"count":100})", "application/json");
  REQUIRE(step);
  CHECK(nlohmann::json::parse(step->body)["done"] == true);

  auto stream = client.Get("/api/sessions/" + id + "/stream?from=0&until_done=1");
  REQUIRE(stream);
  CHECK(stream->status == 200);
  int lines = 0;
  for (char ch : stream->body) lines += ch == '\n' ? 1 : 0;
  CHECK(lines == static_cast<int>(nlohmann::json::parse(step->body)["executed"].size()));

  auto missing = client.Get("/api/sessions/unknown/state");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto bad = client.Post("/api/sessions/" + id + "/refer", "{oops", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto finished = client.Post("/api/sessions/" + id + "/step", "{}", "application/json");
  REQUIRE(finished);
  CHECK(finished->status == 409);

  server.stop();
  worker.join();
}
