#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "refsteer/env.hpp"
#include "refsteer/io.hpp"
#include "refsteer/metrics.hpp"
#include "refsteer/policy.hpp"
#include "refsteer/runtime.hpp"
#include "refsteer/service.hpp"

using namespace refsteer;

namespace {

Vec3 parse_point(const std::string& text) {
  std::stringstream ss(text);
  std::string part;
  std::vector<double> v;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) {
        throw std::invalid_argument(part);
      }
    } catch (const std::exception&) {
      throw Error("cannot parse '" + part + "' in --refer (expected X,Y,Z)");
    }
  }
  if (v.size() != 3) {
    throw Error("--refer expects three comma-separated numbers");
  }
  return {v[0], v[1], v[2]};
}

std::vector<Demonstration> generate_demos(const Task& task, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Demonstration> demos;
  int failures = 0;
  while (static_cast<int>(demos.size()) < count) {
    const std::uint64_t s = rng.fork() % 1000000007ULL;
    try {
      demos.push_back(expert_demo(task, s));
    } catch (const Error& e) {
      std::cerr << "warning: " << e.what() << "; resampling\n";
      if (++failures > 10 * count + 100) {
        throw Error("scripted expert keeps failing on " + task.name);
      }
    }
  }
  return demos;
}

std::string json_path_for(const std::string& report) {
  std::filesystem::path p(report);
  if (p.extension() == ".json") {
    return report + ".json";
  }
  p.replace_extension(".json");
  return p.string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Referring-point steered diffusion policy: demos, training, rollouts, metrics, service"};
  app.require_subcommand(1);

  // gen-demos
  auto* gen = app.add_subcommand("gen-demos", "Write scripted expert demonstrations as JSON lines");
  std::string gen_task, gen_out;
  int gen_n = 50;
  std::uint64_t gen_seed = 0;
  gen->add_option("--task", gen_task, "Task name (reach-via, pick-place-via, push-t-via)")->required();
  gen->add_option("--n", gen_n, "Number of demonstrations")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "Output JSON-lines file")->required();
  gen->add_option("--seed", gen_seed, "Random seed");

  // train
  auto* train = app.add_subcommand("train", "Train both heads, the slot classifier and the baseline");
  std::string train_demos, train_config, train_out;
  bool train_separate = false, train_no_baseline = false, train_quiet = false, train_no_decay = false;
  int train_log_every = 100;
  train->add_option("--demos", train_demos, "Demonstration JSON-lines file")->required();
  train->add_option("--config", train_config, "Training config JSON file")->required();
  train->add_option("--out", train_out, "Checkpoint directory")->required();
  train->add_flag("--separate", train_separate, "Train the slot classifier after the heads instead of jointly");
  train->add_flag("--no-baseline", train_no_baseline, "Skip the concat-conditioning baseline");
  train->add_flag("--no-lr-decay", train_no_decay, "Keep the learning rate constant after warmup");
  train->add_option("--log-every", train_log_every, "Progress interval in steps (0 disables)");
  train->add_flag("--quiet", train_quiet, "Suppress progress output");

  // rollout
  auto* rollout = app.add_subcommand("rollout", "Run closed-loop episodes and write rollout records");
  std::string ro_ckpt, ro_task, ro_mode = "via", ro_refer, ro_record, ro_method = "rev",
                                ro_infeasible = "out_of_reach";
  int ro_episodes = 100, ro_jobs = 1, ro_repredict = 0;
  double ro_via_sigma = 0.05;
  std::uint64_t ro_seed = 0;
  rollout->add_option("--ckpt", ro_ckpt, "Checkpoint directory")->required();
  rollout->add_option("--task", ro_task, "Task name")->required();
  rollout->add_option("--episodes", ro_episodes, "Number of episodes")->check(CLI::PositiveNumber);
  rollout->add_option("--refer-mode", ro_mode, "Referring point source")
      ->check(CLI::IsMember({"none", "via", "ood", "infeasible", "fixed"}));
  rollout->add_option("--refer", ro_refer, "Fixed referring point X,Y,Z (with --refer-mode fixed)");
  rollout->add_option("--record", ro_record, "Output rollout-record JSON-lines file")->required();
  rollout->add_option("--seed", ro_seed, "Random seed");
  rollout->add_option("--jobs", ro_jobs, "Parallel workers")->check(CLI::PositiveNumber);
  rollout->add_option("--method", ro_method, "rev (coupled heads) or baseline (concat conditioning)")
      ->check(CLI::IsMember({"rev", "baseline"}));
  rollout->add_option("--infeasible-kind", ro_infeasible, "out_of_reach or blocked")
      ->check(CLI::IsMember({"out_of_reach", "blocked"}));
  rollout->add_option("--via-sigma", ro_via_sigma, "Std of via-point sampling in meters");
  rollout->add_option("--tp-repredict", ro_repredict,
                      "Re-predict the slot every n steps (0 = once per referring point)");

  // eval
  auto* eval = app.add_subcommand("eval", "Compute RePR / SuR / SmS from rollout records");
  std::string ev_records, ev_out;
  double ev_eps = 0.05, ev_lambda = 0.01;
  eval->add_option("--records", ev_records, "Rollout-record JSON-lines file")->required();
  eval->add_option("--eps", ev_eps, "Penetration radius in meters");
  eval->add_option("--lambda", ev_lambda, "Smoothness scale in meters");
  eval->add_option("--out", ev_out, "Markdown report path; JSON goes next to it")->required();

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP session API for interactive steering");
  std::string sv_ckpt, sv_task, sv_host = "127.0.0.1";
  int sv_port = 8080;
  double sv_timeout = 600.0, sv_rate = 10.0;
  srv->add_option("--ckpt", sv_ckpt, "Checkpoint directory")->required();
  srv->add_option("--task", sv_task, "Default task for new sessions")->required();
  srv->add_option("--port", sv_port, "TCP port")->check(CLI::Range(1, 65535));
  srv->add_option("--host", sv_host, "Bind address");
  srv->add_option("--idle-timeout", sv_timeout, "Session idle expiry in seconds");
  srv->add_option("--auto-rate", sv_rate, "Auto-step speed in actions per second");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const Task task = make_task(gen_task);
      write_demos(gen_out, generate_demos(task, gen_n, gen_seed));
      std::cerr << "wrote " << gen_n << " " << task.name << " demonstrations to " << gen_out << "\n";
    } else if (*train) {
      const auto demos = read_demos(train_demos);
      if (demos.empty()) {
        throw Error("no demonstrations in " + train_demos);
      }
      for (const auto& d : demos) {
        if (d.task != demos.front().task) {
          throw Error("demonstrations mix tasks " + demos.front().task + " and " + d.task);
        }
      }
      const TrainConfig config = TrainConfig::load(train_config);
      PolicyStats stats{ActionNormalizer::fit(demos), ObsNormalizer::fit(demos)};
      Policy policy(config, stats, demos.front().task);
      TrainOptions opts;
      opts.joint = !train_separate;
      opts.train_baseline = !train_no_baseline;
      opts.cosine_decay = !train_no_decay;
      opts.log_every = train_quiet ? 0 : train_log_every;
      opts.log = [](const std::string& line) { std::cerr << line << "\n"; };
      Trainer trainer(policy, demos, opts);
      Rng rng(config.seed + 1);
      const auto start = std::chrono::steady_clock::now();
      const auto history = trainer.fit(rng);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::vector<Trajectory> trajs;
      for (const auto& d : demos) {
        trajs.push_back(d.actions);
      }
      policy.training_summary = {
          {"steps", history.size()},
          {"seconds", seconds},
          {"final", {{"gdh", history.back().mse_gdh},
                     {"ldh", history.back().mse_ldh},
                     {"baseline", history.back().mse_baseline},
                     {"cce", history.back().cce},
                     {"tp_accuracy", history.back().tp_accuracy}}},
          {"validation_action_mse", trainer.validation_action_mse(8, rng)},
          {"calibrated_sms_lambda", calibrate_sms_lambda(trajs, 0.99)}};
      policy.save(train_out);
      std::cerr << "saved checkpoint to " << train_out << " after " << history.size() << " steps ("
                << seconds << " s)\n";
    } else if (*rollout) {
      const auto policy = Policy::load(ro_ckpt);
      const Task task = make_task(ro_task);
      RolloutSpec spec;
      spec.mode = parse_refer_mode(ro_mode);
      spec.method = ro_method;
      spec.via_sigma = ro_via_sigma;
      spec.engine.tp_repredict_every = ro_repredict;
      spec.infeasible = ro_infeasible == "blocked" ? InfeasibleKind::Blocked : InfeasibleKind::OutOfReach;
      if (spec.mode == ReferMode::Fixed) {
        if (ro_refer.empty()) {
          throw Error("--refer-mode fixed needs --refer X,Y,Z");
        }
        spec.fixed = parse_point(ro_refer);
      } else if (!ro_refer.empty()) {
        throw Error("--refer is only valid with --refer-mode fixed");
      }
      Rng rng(ro_seed);
      std::vector<std::uint64_t> seeds;
      for (int e = 0; e < ro_episodes; ++e) {
        seeds.push_back(rng.fork() % 1000000007ULL);
      }
      const auto records = run_episodes(*policy, task, seeds, spec, ro_jobs);
      write_records(ro_record, records);
      std::cerr << "wrote " << records.size() << " records to " << ro_record << "\n";
    } else if (*eval) {
      const auto records = read_records(ev_records);
      if (records.empty()) {
        throw Error("record file " + ev_records + " contains no episodes");
      }
      const auto reports = evaluate(records, ev_eps, ev_lambda);
      const std::string md = to_markdown(reports, ev_eps, ev_lambda);
      {
        std::ofstream out(ev_out);
        if (!out) {
          throw Error("cannot write " + ev_out);
        }
        out << md;
      }
      const std::string json_path = json_path_for(ev_out);
      {
        std::ofstream out(json_path);
        if (!out) {
          throw Error("cannot write " + json_path);
        }
        out << to_json(reports, ev_eps, ev_lambda).dump(2) << "\n";
      }
      std::cout << md;
    } else if (*srv) {
      const auto policy = Policy::load(sv_ckpt);
      ServiceOptions opts;
      opts.default_task = sv_task;
      opts.idle_timeout_s = sv_timeout;
      opts.auto_rate = sv_rate;
      if (!(make_task(sv_task).horizon == policy->horizon())) {
        throw Error("checkpoint horizon does not match task " + sv_task);
      }
      serve(*policy, opts, sv_host, sv_port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
