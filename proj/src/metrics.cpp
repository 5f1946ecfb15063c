#include "refsteer/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace refsteer {

double min_distance(const Trajectory& trajectory, const Vec3& p) {
  if (trajectory.empty()) {
    throw Error("min_distance of an empty trajectory");
  }
  double best = std::numeric_limits<double>::infinity();
  for (const Action& a : trajectory) {
    best = std::min(best, (a.trans - p).norm());
  }
  return best;
}

double mean_step_length(const Trajectory& trajectory) {
  if (trajectory.size() < 2) {
    return 0.0;
  }
  double sum = 0.0;
  for (std::size_t t = 1; t < trajectory.size(); ++t) {
    sum += (trajectory[t].trans - trajectory[t - 1].trans).norm();
  }
  return sum / static_cast<double>(trajectory.size() - 1);
}

double record_distance(const RolloutRecord& record) {
  if (!record.referring || record.trajectory.empty()) {
    return std::numeric_limits<double>::infinity();
  }
  return min_distance(record.trajectory, *record.referring);
}

double repr_metric(const std::vector<RolloutRecord>& records, double eps) {
  if (records.empty()) {
    throw Error("RePR needs at least one record");
  }
  int hits = 0;
  for (const auto& r : records) {
    hits += record_distance(r) <= eps ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double sur_metric(const std::vector<RolloutRecord>& records, double eps) {
  if (records.empty()) {
    throw Error("SuR needs at least one record");
  }
  int hits = 0;
  for (const auto& r : records) {
    hits += (r.success && record_distance(r) <= eps) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double smoothness_score(double mean_step, double lambda) {
  return std::exp(-mean_step / lambda);
}

std::optional<double> sms_metric(const std::vector<RolloutRecord>& records, double lambda,
                                 double eps) {
  double sum = 0.0;
  int count = 0;
  for (const auto& r : records) {
    if (r.success && record_distance(r) <= eps) {
      sum += smoothness_score(mean_step_length(r.trajectory), lambda);
      ++count;
    }
  }
  if (count == 0) {
    return std::nullopt;
  }
  return sum / count;
}

double calibrate_sms_lambda(const std::vector<Trajectory>& trajectories, double target) {
  if (trajectories.empty() || !(target > 0.0 && target < 1.0)) {
    throw Error("lambda calibration needs trajectories and a target in (0, 1)");
  }
  std::vector<double> j;
  for (const auto& t : trajectories) {
    j.push_back(mean_step_length(t));
  }
  auto mean_score = [&](double lambda) {
    double s = 0.0;
    for (double v : j) {
      s += std::exp(-v / lambda);
    }
    return s / static_cast<double>(j.size());
  };
  double lo = std::log(1e-9);
  double hi = std::log(1e9);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mean_score(std::exp(mid)) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::exp(0.5 * (lo + hi));
}

std::vector<EvalReport> evaluate(const std::vector<RolloutRecord>& records, double eps, double lambda) {
  if (records.empty()) {
    throw Error("no rollout records to evaluate");
  }
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<RolloutRecord>> groups;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.method, r.task);
    if (!groups.contains(key)) {
      order.push_back(key);
    }
    groups[key].push_back(r);
  }
  std::vector<EvalReport> out;
  for (const auto& key : order) {
    const auto& group = groups[key];
    EvalReport rep;
    rep.method = key.first;
    rep.task = key.second;
    rep.episodes = static_cast<int>(group.size());
    rep.repr = repr_metric(group, eps);
    rep.sur = sur_metric(group, eps);
    rep.sms = sms_metric(group, lambda, eps);
    int successes = 0;
    for (const auto& r : group) {
      const double d = record_distance(r);
      rep.distances.push_back(d);
      successes += r.success ? 1 : 0;
      rep.sur_count += (r.success && d <= eps) ? 1 : 0;
    }
    rep.success_rate = static_cast<double>(successes) / rep.episodes;
    out.push_back(std::move(rep));
  }
  return out;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * fraction);
  return buf;
}

std::string to_markdown(const std::vector<EvalReport>& reports, double eps, double lambda) {
  std::ostringstream md;
  md << "| Method | Task | Episodes | RePR | SuR | SmS |\n";
  md << "|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    char sms[32] = "-";
    if (r.sms) {
      std::snprintf(sms, sizeof(sms), "%.3f", *r.sms);
    }
    md << "| " << r.method << " | " << r.task << " | " << r.episodes << " | "
       << format_percent(r.repr) << " | " << format_percent(r.sur) << " | " << sms << " |\n";
  }
  md << "\neps = " << eps << " m, lambda = " << lambda << " m\n";
  return md.str();
}

nlohmann::json to_json(const std::vector<EvalReport>& reports, double eps, double lambda) {
  nlohmann::json out;
  out["eps"] = eps;
  out["lambda"] = lambda;
  out["reports"] = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json d = nlohmann::json::array();
    for (double v : r.distances) {
      d.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    }
    out["reports"].push_back({{"method", r.method},
                              {"task", r.task},
                              {"episodes", r.episodes},
                              {"repr", r.repr},
                              {"sur", r.sur},
                              {"sur_count", r.sur_count},
                              {"sms", r.sms ? nlohmann::json(*r.sms) : nlohmann::json(nullptr)},
                              {"success_rate", r.success_rate},
                              {"distances", std::move(d)}});
  }
  return out;
}

}  // namespace refsteer
