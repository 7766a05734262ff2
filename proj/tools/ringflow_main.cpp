// Command-line pipeline: collect -> train-gen -> train-policy -> eval ->
// scenario. Every artifact is written atomically with a sibling manifest.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ringflow/config.hpp"
#include "ringflow/dataset_io.hpp"
#include "ringflow/errors.hpp"
#include "ringflow/eval.hpp"
#include "ringflow/io_util.hpp"
#include "ringflow/manifest.hpp"
#include "ringflow/model_io.hpp"
#include "ringflow/version.hpp"

namespace {

using namespace ringflow;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed_flag;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Config file path");
  cmd->add_option("--set", args.sets,
                  "Override a config key, e.g. --set policy.eta=0.2");
  cmd->add_option("--seed", args.seed_flag, "Master seed (overrides config)");
}

ConfigOverrides to_overrides(const CommonArgs& args) {
  ConfigOverrides overrides;
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got: " + s);
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!args.seed_flag.empty())
    overrides.emplace_back("run.seed", args.seed_flag);
  return overrides;
}

std::vector<std::pair<std::string, std::string>> manifest_base(
    const Config& config) {
  return {{"config_hash", config_hash(config)},
          {"seed", std::to_string(config.seed)}};
}

void log_line(const std::string& stage, const std::string& message) {
  std::cerr << "[" << stage << "] " << message << "\n";
}

std::string curve_text_generator(const GeneratorTrainResult& result) {
  std::ostringstream out;
  out << "# columns: iteration loss\n";
  for (const auto& p : result.curve)
    out << p.iteration << '\t' << format_double(p.loss) << '\n';
  return out.str();
}

std::string curve_text_policy(const PolicyTrainResult& result) {
  std::ostringstream out;
  out << "# columns: iteration j micro macro clip_fraction approx_kl\n";
  for (const auto& p : result.curve)
    out << p.iteration << '\t' << format_double(p.j) << '\t'
        << format_double(p.micro) << '\t' << format_double(p.macro) << '\t'
        << format_double(p.clip_fraction) << '\t'
        << format_double(p.approx_kl) << '\n';
  return out.str();
}

MacroDescriptor resolve_descriptor(const Config& config,
                                   const Dataset& dataset) {
  MacroDescriptor d = config.descriptor;
  d.v_min = config.bounds.v_min;
  d.v_max = config.bounds.v_max;
  if (config.descriptor_from_data) {
    d = compute_descriptor(dataset, d);
    log_line("descriptor", "from data: v_bar_gt=" + format_double(d.v_bar_gt) +
                               " d_bar=" + format_double(d.d_bar));
  }
  validate_descriptor(d);
  return d;
}

int cmd_collect(const CommonArgs& common, const std::string& out_path) {
  const Config config = load_config(common.config_path, to_overrides(common));
  log_line("collect", "simulating " + std::to_string(config.collect_runs) +
                          " runs x " + std::to_string(config.collect_steps) +
                          " steps");
  const Dataset dataset =
      collect_runs(config.collect_config(), stream_seed(config.seed, "collect"));
  write_dataset(dataset, out_path);
  auto entries = manifest_base(config);
  entries.emplace_back("kind", "dataset");
  write_manifest(out_path, entries);
  log_line("collect", "wrote " + out_path);
  return 0;
}

int cmd_train_gen(const CommonArgs& common, const std::string& data_path,
                  const std::string& out_path, int iterations_flag) {
  Config config = load_config(common.config_path, to_overrides(common));
  if (iterations_flag >= 0) config.generator.iterations = iterations_flag;
  const Dataset dataset = read_dataset(data_path);
  const MacroDescriptor descriptor = resolve_descriptor(config, dataset);

  GeneratorHyper hyper = config.generator;
  hyper.weights = config.weights;
  log_line("train-gen",
           "training for " + std::to_string(hyper.iterations) + " iterations");
  const GeneratorTrainResult result = train_generator(
      dataset, descriptor, hyper, stream_seed(config.seed, "gen"));
  if (!result.curve.empty())
    log_line("train-gen", "final windowed loss = " +
                              format_double(result.curve.back().loss));

  // Post-training constraint audit on held-out completions.
  const CompletionBatchResult audit = completion_batch(
      result.model, dataset, 200, 1,
      std::max(1, std::min(config.generator.k_max, config.n_vehicles - 1)),
      config.generator.frame_window_frac, config.completion, config.parallel,
      stream_seed(config.seed, "gen-audit"));
  log_line("train-gen",
           "completion audit: projection rate = " +
               format_double(audit.projection_rate()) +
               ", bound violations = " + std::to_string(audit.bound_violations));

  save_generator(result.model, out_path);
  atomic_write_file(out_path + ".curve.tsv", curve_text_generator(result));
  auto entries = manifest_base(config);
  entries.emplace_back("data", data_path);
  auto model_entries = entries;
  model_entries.emplace_back("kind", "generator-model");
  write_manifest(out_path, model_entries);
  entries.emplace_back("kind", "training-curve");
  write_manifest(out_path + ".curve.tsv", entries);
  log_line("train-gen", "wrote " + out_path);
  return 0;
}

int cmd_train_policy(const CommonArgs& common, const std::string& data_path,
                     const std::string& gen_path, const std::string& out_path,
                     int iterations_flag) {
  Config config = load_config(common.config_path, to_overrides(common));
  if (iterations_flag >= 0) config.policy.iterations = iterations_flag;
  const Dataset dataset = read_dataset(data_path);
  const GeneratorModel generator = load_generator(gen_path);
  const MacroDescriptor descriptor = generator.descriptor;

  PpoHyper hyper = config.policy;
  hyper.parallel = config.parallel;
  log_line("train-policy", "training for up to " +
                               std::to_string(hyper.iterations) +
                               " iterations of " +
                               std::to_string(hyper.batch_episodes) +
                               " episodes");
  const PolicyTrainResult result =
      train_policy(dataset, generator, descriptor, config.bounds, hyper,
                   config.completion, config.weights,
                   stream_seed(config.seed, "policy"));
  if (!result.curve.empty()) {
    log_line("train-policy",
             "iterations run = " + std::to_string(result.curve.size()) +
                 ", final J = " + format_double(result.curve.back().j) +
                 ", macro " + format_double(result.initial_macro) + " -> " +
                 format_double(result.curve.back().macro));
  }
  save_policy(result.model, out_path);
  atomic_write_file(out_path + ".curve.tsv", curve_text_policy(result));
  auto entries = manifest_base(config);
  entries.emplace_back("data", data_path);
  entries.emplace_back("generator", gen_path);
  auto model_entries = entries;
  model_entries.emplace_back("kind", "policy-model");
  write_manifest(out_path, model_entries);
  entries.emplace_back("kind", "training-curve");
  write_manifest(out_path + ".curve.tsv", entries);
  log_line("train-policy", "wrote " + out_path);
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& data_path,
             const std::string& gen_path, const std::string& policy_path,
             const std::string& out_path, const std::string& k_spec,
             int rollouts_flag) {
  auto overrides = to_overrides(common);
  if (!k_spec.empty()) overrides.emplace_back("eval.ks", k_spec);
  Config config = load_config(common.config_path, overrides);
  if (rollouts_flag > 0) config.eval.n_rollouts = rollouts_flag;
  config.eval.parallel = config.parallel;

  const Dataset dataset = read_dataset(data_path);
  const GeneratorModel generator = load_generator(gen_path);
  const PolicyModel policy = load_policy(policy_path);

  log_line("eval", "running " + std::to_string(config.eval.ks.size()) +
                       " K settings x " +
                       std::to_string(config.eval.n_rollouts) + " rollouts");
  std::vector<AlignmentRow> rows;
  rows.push_back(ground_truth_row(dataset));
  const auto policy_rows =
      macro_alignment(policy, generator, dataset, config.eval,
                      config.completion, stream_seed(config.seed, "eval"));
  rows.insert(rows.end(), policy_rows.begin(), policy_rows.end());

  std::vector<std::string> metadata;
  metadata.push_back("pooling: per-step speeds and gaps over all vehicles, "
                     "steps and rollouts; std is population form");
  metadata.push_back("horizon_steps: " + std::to_string(config.eval.horizon));
  metadata.push_back("row k=-1: ground-truth dataset statistics");
  export_alignment(rows, out_path, metadata);
  auto entries = manifest_base(config);
  entries.emplace_back("kind", "alignment-table");
  entries.emplace_back("data", data_path);
  write_manifest(out_path, entries);
  for (const auto& r : rows)
    log_line("eval", "k=" + std::to_string(r.k) +
                         " mean_speed=" + format_double(r.mean_speed) +
                         " std_speed=" + format_double(r.std_speed) +
                         " mean_gap=" + format_double(r.mean_gap) +
                         " std_gap=" + format_double(r.std_gap));
  log_line("eval", "wrote " + out_path);
  return 0;
}

int cmd_scenario(const CommonArgs& common, const std::string& policy_path,
                 bool use_idm, const std::string& mode,
                 const std::string& out_path, int trials_flag) {
  Config config = load_config(common.config_path, to_overrides(common));
  if (trials_flag > 0) config.scenario.trials = trials_flag;
  if (mode != "accel" && mode != "decel")
    throw ConfigError("scenario --mode must be accel or decel");

  ScenarioSpec spec;
  spec.duration = config.scenario.duration;
  spec.initial_gap = config.scenario.initial_gap;
  spec.v_limit = config.scenario.v_limit;
  spec.leader.ramp_start = config.scenario.ramp_start;
  spec.leader.ramp_duration = config.scenario.ramp_duration;
  if (mode == "accel") {
    spec.leader.v_start = 11.0;
    spec.leader.v_end = 13.0;
  } else {
    spec.leader.v_start = 13.0;
    spec.leader.v_end = 11.0;
  }

  PolicyModel policy;
  if (use_idm) {
    spec.controller = FollowerController::kIdm;
    spec.idm = IdmParams{};  // mid-range ground-truth parameters
  } else {
    if (policy_path.empty())
      throw ConfigError("scenario: provide --policy or --idm");
    policy = load_policy(policy_path);
    spec.controller = FollowerController::kPolicy;
  }

  const ScenarioSeries series = leader_follower_mean(
      spec, use_idm ? nullptr : &policy, config.dt, config.bounds,
      config.scenario.trials, stream_seed(config.seed, "scenario"));
  std::vector<std::string> metadata;
  metadata.push_back("mode: " + mode);
  metadata.push_back("controller: " + std::string(use_idm ? "idm" : "policy"));
  metadata.push_back("trials: " + std::to_string(config.scenario.trials) +
                     " (follower_v and gap are trial means)");
  export_series(series, out_path, metadata);
  auto entries = manifest_base(config);
  entries.emplace_back("kind", "scenario-series");
  entries.emplace_back("mode", mode);
  write_manifest(out_path, entries);
  log_line("scenario", "wrote " + out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ring-road traffic learning pipeline"};
  app.set_version_flag("--version", ringflow::kToolVersion);
  app.require_subcommand(1);

  CommonArgs common;
  std::string out_path, data_path, gen_path, policy_path;
  std::string k_spec, mode = "accel";
  int iterations_flag = -1, rollouts_flag = -1, trials_flag = -1;
  int runs_flag = -1, steps_flag = -1;
  bool use_idm = false;

  auto* collect = app.add_subcommand("collect", "Simulate training data");
  add_common(collect, common);
  collect->add_option("--out", out_path, "Dataset output path")->required();
  collect->add_option("--runs", runs_flag, "Number of runs");
  collect->add_option("--steps", steps_flag, "Steps per run");

  auto* train_gen =
      app.add_subcommand("train-gen", "Train the scene completer");
  add_common(train_gen, common);
  train_gen->add_option("--data", data_path, "Dataset path")->required();
  train_gen->add_option("--out", out_path, "Model output path")->required();
  train_gen->add_option("--iterations", iterations_flag, "Training steps");

  auto* train_policy =
      app.add_subcommand("train-policy", "Train the shared driving policy");
  add_common(train_policy, common);
  train_policy->add_option("--data", data_path, "Dataset path")->required();
  train_policy->add_option("--gen", gen_path, "Generator model path")
      ->required();
  train_policy->add_option("--out", out_path, "Model output path")->required();
  train_policy->add_option("--iterations", iterations_flag, "PPO iterations");

  auto* eval = app.add_subcommand("eval", "Macroscopic alignment sweep");
  add_common(eval, common);
  eval->add_option("--data", data_path, "Dataset path")->required();
  eval->add_option("--gen", gen_path, "Generator model path")->required();
  eval->add_option("--policy", policy_path, "Policy model path")->required();
  eval->add_option("--out", out_path, "Table output path")->required();
  eval->add_option("--k", k_spec, "Hidden counts, e.g. 1..4 or 1,3");
  eval->add_option("--rollouts", rollouts_flag, "Rollouts per K");

  auto* scenario =
      app.add_subcommand("scenario", "Leader-follower trace export");
  add_common(scenario, common);
  scenario->add_option("--policy", policy_path, "Policy model path");
  scenario->add_flag("--idm", use_idm, "Use the ground-truth IDM follower");
  scenario->add_option("--mode", mode, "accel or decel");
  scenario->add_option("--out", out_path, "Series output path")->required();
  scenario->add_option("--trials", trials_flag, "Stochastic trials to average");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;
  }

  try {
    if (collect->parsed()) {
      if (runs_flag > 0)
        common.sets.push_back("collect.runs=" + std::to_string(runs_flag));
      if (steps_flag > 0)
        common.sets.push_back("collect.steps=" + std::to_string(steps_flag));
      return cmd_collect(common, out_path);
    }
    if (train_gen->parsed())
      return cmd_train_gen(common, data_path, out_path, iterations_flag);
    if (train_policy->parsed())
      return cmd_train_policy(common, data_path, gen_path, out_path,
                              iterations_flag);
    if (eval->parsed())
      return cmd_eval(common, data_path, gen_path, policy_path, out_path,
                      k_spec, rollouts_flag);
    if (scenario->parsed())
      return cmd_scenario(common, policy_path, use_idm, mode, out_path,
                          trials_flag);
  } catch (const ringflow::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
