#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "refsteer/core.hpp"

namespace refsteer {

/// One finished episode.
struct RolloutRecord {
  std::string task;
  std::string method = "rev";
  std::uint64_t seed = 0;
  std::optional<Vec3> referring;
  int k = 0;  // 0 when no referring point was assigned
  Trajectory trajectory;
  AnchorSequence anchors;
  bool success = false;
};

double min_distance(const Trajectory& trajectory, const Vec3& p);

/// Mean consecutive end-effector displacement; 0 for trajectories shorter than 2.
double mean_step_length(const Trajectory& trajectory);

/// Records without a referring point count as d = infinity.
double record_distance(const RolloutRecord& record);

double repr_metric(const std::vector<RolloutRecord>& records, double eps = 0.05);
double sur_metric(const std::vector<RolloutRecord>& records, double eps = 0.05);
/// Mean exp(-J / lambda) over episodes that both penetrate and succeed;
/// empty when there are none.
std::optional<double> sms_metric(const std::vector<RolloutRecord>& records, double lambda,
                                 double eps = 0.05);
double smoothness_score(double mean_step, double lambda);

/// lambda for which the mean of exp(-J_i / lambda) over the given
/// trajectories equals `target` (bisection on log lambda).
double calibrate_sms_lambda(const std::vector<Trajectory>& trajectories, double target = 0.99);

struct EvalReport {
  std::string task;
  std::string method;
  int episodes = 0;
  int sur_count = 0;
  double repr = 0.0;
  double sur = 0.0;
  std::optional<double> sms;
  double success_rate = 0.0;
  std::vector<double> distances;
};

/// Groups records by (method, task) in order of first appearance.
/// Throws on an empty record set.
std::vector<EvalReport> evaluate(const std::vector<RolloutRecord>& records, double eps, double lambda);

std::string format_percent(double fraction);
std::string to_markdown(const std::vector<EvalReport>& reports, double eps, double lambda);
nlohmann::json to_json(const std::vector<EvalReport>& reports, double eps, double lambda);

}  // namespace refsteer
