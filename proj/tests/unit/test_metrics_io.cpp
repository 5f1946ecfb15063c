#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "refsteer/env.hpp"
#include "refsteer/io.hpp"
#include "refsteer/metrics.hpp"

using namespace refsteer;

namespace {

RolloutRecord line_record(std::optional<Vec3> ref, bool success, double step = 0.01, int n = 11) {
  RolloutRecord r;
  r.task = "reach-via";
  r.referring = ref;
  r.k = ref ? 3 : 0;
  for (int t = 0; t < n; ++t) {
    r.trajectory.push_back(Action::at(Vec3(step * t, 0, 0)));
  }
  r.success = success;
  return r;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("distances and rates") {
  const auto hit = line_record(Vec3(0.05, 0.03, 0), true);
  CHECK(record_distance(hit) == doctest::Approx(0.03));
  const auto miss = line_record(Vec3(0.05, 0.2, 0), true);
  const auto none = line_record(std::nullopt, true);
  CHECK(std::isinf(record_distance(none)));
  const auto fail = line_record(Vec3(0, 0, 0), false);
  const std::vector<RolloutRecord> set{hit, miss, none, fail};
  CHECK(repr_metric(set, 0.05) == 0.5);
  CHECK(sur_metric(set, 0.05) == 0.25);
  CHECK(repr_metric({hit}, 0.03 + 1e-12) == 1.0);
  CHECK_THROWS_AS(repr_metric({}, 0.05), Error);
  CHECK_THROWS_AS(min_distance({}, Vec3::Zero()), Error);
}

TEST_CASE("smoothness") {
  CHECK(smoothness_score(0.0, 0.01) == 1.0);
  CHECK(std::abs(smoothness_score(0.01, 0.01) - std::exp(-1.0)) <= 1e-12);
  CHECK(mean_step_length(line_record(std::nullopt, true, 0.02).trajectory) == doctest::Approx(0.02));
  CHECK(mean_step_length({}) == 0.0);
  const auto s = sms_metric({line_record(Vec3(0, 0, 0), true, 0.01)}, 0.01, 0.05);
  REQUIRE(s);
  CHECK(*s == doctest::Approx(std::exp(-1.0)));
  CHECK(!sms_metric({line_record(Vec3(0, 0, 0), false)}, 0.01, 0.05));

  const std::vector<Trajectory> t{line_record(std::nullopt, true, 0.01).trajectory,
                                  line_record(std::nullopt, true, 0.03).trajectory};
  const double lambda = calibrate_sms_lambda(t, 0.99);
  CHECK(0.5 * (std::exp(-0.01 / lambda) + std::exp(-0.03 / lambda)) == doctest::Approx(0.99).epsilon(1e-9));
  CHECK_THROWS_AS(calibrate_sms_lambda(t, 1.0), Error);
}

TEST_CASE("evaluate groups by method and task") {
  auto a = line_record(Vec3(0, 0, 0), true);
  auto b = line_record(Vec3(0, 1, 0), false);
  b.method = "baseline";
  auto c = line_record(Vec3(0, 0, 0), false);
  const auto reports = evaluate({a, b, c}, 0.05, 0.01);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].method == "rev");
  CHECK(reports[0].episodes == 2);
  CHECK(reports[0].repr == 1.0);
  CHECK(reports[0].sur == 0.5);
  CHECK(reports[1].method == "baseline");
  CHECK(reports[1].repr == 0.0);
  CHECK(!reports[1].sms);
  const std::string md = to_markdown(reports, 0.05, 0.01);
  CHECK(md.find("| rev | reach-via | 2 | 100.0% | 50.0% |") != std::string::npos);
  const auto j = to_json(reports, 0.05, 0.01);
  CHECK(j["reports"].size() == 2);
  CHECK_THROWS_AS(evaluate({}, 0.05, 0.01), Error);
  CHECK(format_percent(0.123) == "12.3%");
}

TEST_CASE("demo and record files round-trip") {
  const Task task = make_task("pick-place-via");
  const std::vector<Demonstration> demos{expert_demo(task, 1), expert_demo(task, 2)};
  const auto dpath = temp_file("refsteer_demos_test.jsonl");
  write_demos(dpath.string(), demos);
  const auto back = read_demos(dpath.string());
  REQUIRE(back.size() == 2);
  CHECK(back[1].task == "pick-place-via");
  CHECK(back[1].seed == 2u);
  CHECK(back[1].actions == demos[1].actions);
  CHECK(back[1].observations == demos[1].observations);

  auto r = line_record(Vec3(0.5, 0.1, 0.1), true);
  r.anchors = {r.trajectory.front(), r.trajectory.back()};
  r.seed = 77;
  const auto rpath = temp_file("refsteer_records_test.jsonl");
  write_records(rpath.string(), {r, line_record(std::nullopt, false)});
  const auto rs = read_records(rpath.string());
  REQUIRE(rs.size() == 2);
  CHECK(rs[0].referring == r.referring);
  CHECK(rs[0].trajectory == r.trajectory);
  CHECK(rs[0].anchors == r.anchors);
  CHECK(rs[0].seed == 77u);
  CHECK(rs[0].success);
  CHECK(!rs[1].referring);
  CHECK(rs[1].k == 0);

  {
    std::ofstream out(rpath);
    out << record_to_json(r).dump() << "\n\n{not json\n";
  }
  try {
    read_records(rpath.string());
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(".jsonl:3:") != std::string::npos);
  }
  CHECK_THROWS_AS(read_records("/nonexistent/records.jsonl"), Error);
  {
    std::ofstream out(rpath);
    out << R"({"task":"reach-via","method":"rev","seed":1,"referring":[0,0],"k":0,"trajectory":[],"anchors":[],"success":0})" << "\n";
  }
  CHECK_THROWS_AS(read_records(rpath.string()), Error);
  std::filesystem::remove(dpath);
  std::filesystem::remove(rpath);
}
