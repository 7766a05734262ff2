// End-to-end acceptance suite. Runs the default pipeline (collect, train
// both stages, evaluate, scenario traces) plus the numeric oracles, and
// prints one PASS/FAIL line per criterion. Exit code is the failure count.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "ringflow/config.hpp"
#include "ringflow/dataset_io.hpp"
#include "ringflow/eval.hpp"
#include "ringflow/generator.hpp"
#include "ringflow/io_util.hpp"
#include "ringflow/macro_stats.hpp"
#include "ringflow/model_io.hpp"
#include "ringflow/policy.hpp"

using namespace ringflow;

namespace {

struct CriterionResult {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<CriterionResult> g_results;

void record(int id, const std::string& name, bool pass,
            const std::string& detail) {
  g_results.push_back({id, name, pass, detail});
  std::fprintf(stderr, "  -> [%2d] %s: %s\n", id, pass ? "pass" : "FAIL",
               detail.c_str());
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

double grad_rel_err(const std::vector<double>& a,
                    const std::vector<double>& b) {
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    da += a[i] * a[i];
    db += b[i] * b[i];
  }
  return std::sqrt(num) / std::max({std::sqrt(da), std::sqrt(db), 1e-12});
}

// ---------------------------------------------------------------- C5
void criterion5_loss_oracles() {
  bool ok = true;
  std::ostringstream detail;
  auto expect = [&](const char* label, double got, double want) {
    const bool hit = std::abs(got - want) <= 1e-9;
    if (!hit) {
      ok = false;
      detail << label << " got " << got << " want " << want << "; ";
    }
  };
  expect("l_speed(13.266)", l_speed(std::vector<double>{13.266}, 12.06), 0.01);
  expect("l_speed(11.55)", l_speed(std::vector<double>{11.55}, 12.06),
         0.0017883220712358583);
  MacroDescriptor d;
  expect("l_min(110)", l_dist(std::vector<double>{110.0}, d).min,
         0.0018903591682419658);
  const SpacingPenalty two = l_dist(std::vector<double>{120.0, 130.0}, d);
  expect("l_mean(120,130)", two.mean, 6.298815822625302e-05);
  expect("l_var(120,130)", two.var, 0.03968253968253968);
  expect("l_dist(126*3)",
         l_dist(std::vector<double>{126, 126, 126}, d).total(), 0.0);

  // r_macro(L_speed=0.01, L_dist=0.03; 0.5, 0.5) through a constructed scene:
  // speeds 13.266 against 12.06, equal gaps d_bar*(1+sqrt(0.03)) inside wide
  // bounds.
  MacroDescriptor wide = d;
  wide.d_min = 50.0;
  wide.d_max = 500.0;
  wide.v_min = 10.0;
  wide.v_max = 20.0;
  const double g = 126.0 * (1.0 + std::sqrt(0.03));
  const RingGeometry geom{5.0 * g / kTwoPi};
  Snapshot s;
  for (int i = 0; i < 5; ++i) {
    s.vehicles.push_back({i * kTwoPi / 5.0, 13.266});
    s.observed.push_back(1);
  }
  expect("r_macro(0.01,0.03)", macro_reward(s, wide, PenaltyWeights{}, geom),
         0.9803921568627451);

  std::vector<VehicleState> pa{{1.1, 12.2}};
  std::vector<VehicleState> pb{{1.0, 12.0}};
  expect("l_rec(single)", l_rec(pa, pb), 0.05);

  if (ok) detail << "all frozen macro-stats values within 1e-9";
  record(5, "loss-term unit oracles", ok, detail.str());
}

// ---------------------------------------------------------------- C6
void criterion6_gradients() {
  bool ok = true;
  std::ostringstream detail;

  {  // dense net backward vs central differences
    RngStream rng(601);
    DenseNet net = make_dense_net({4, 8, 6, 2}, rng);
    std::vector<double> x{0.3, -0.7, 0.1, 0.9};
    std::vector<double> c{0.8, -0.4};
    ForwardCache cache;
    net_forward(net, x, &cache);
    NetGradients grads = make_zero_gradients(net);
    net_backward(net, cache, c, grads);
    auto objective = [&](const DenseNet& n) {
      const Tensor y = net_forward(n, x);
      return c[0] * y[0] + c[1] * y[1];
    };
    std::vector<double> analytic, fd;
    const double h = 1e-5;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      for (auto* tensor : {&net.weights[l], &net.biases[l]}) {
        const Tensor& gt =
            tensor == &net.weights[l] ? grads.weights[l] : grads.biases[l];
        for (std::size_t i = 0; i < tensor->size(); ++i) {
          const double keep = (*tensor)[i];
          (*tensor)[i] = keep + h;
          const double up = objective(net);
          (*tensor)[i] = keep - h;
          const double dn = objective(net);
          (*tensor)[i] = keep;
          analytic.push_back(gt[i]);
          fd.push_back((up - dn) / (2.0 * h));
        }
      }
    }
    const double err = grad_rel_err(analytic, fd);
    if (err > 1e-4) {
      ok = false;
      detail << "net_backward rel err " << err << "; ";
    } else {
      detail << "net " << fmt(err);
    }
  }

  {  // generator loss through reparameterized proposals (K = 1)
    RngStream rng(602);
    GeneratorModel model =
        make_generator_model(MacroDescriptor{}, 5, 5, 8, rng);
    Snapshot partial;
    for (int k = 0; k < 4; ++k) {
      partial.vehicles.push_back({k * kTwoPi / 5.0, 12.0});
      partial.observed.push_back(1);
    }
    const RingGeometry geom{100.0};
    const PenaltyWeights weights;
    const std::vector<EpsPair> eps{{0.2, -0.3}};
    const TrainingLoss base =
        generator_training_loss(model, partial, geom, weights, eps);
    std::vector<double> analytic, fd;
    const double h = 1e-6;
    auto probe = [&](Tensor& param, const Tensor& grad) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param[i];
        param[i] = keep + h;
        const double up =
            generator_training_loss(model, partial, geom, weights, eps).loss;
        param[i] = keep - h;
        const double dn =
            generator_training_loss(model, partial, geom, weights, eps).loss;
        param[i] = keep;
        analytic.push_back(grad[i]);
        fd.push_back((up - dn) / (2.0 * h));
      }
    };
    for (std::size_t l = 0; l < model.trunk.layer_count(); ++l) {
      probe(model.trunk.weights[l], base.trunk_grads.weights[l]);
      probe(model.trunk.biases[l], base.trunk_grads.biases[l]);
    }
    probe(model.log_std, base.log_std_grads);
    const double err = grad_rel_err(analytic, fd);
    if (err > 1e-3) {
      ok = false;
      detail << "generator-loss rel err " << err << "; ";
    } else {
      detail << ", generator " << fmt(err);
    }
  }

  {  // squash-corrected policy log-prob
    RngStream rng(603);
    PolicyModel model =
        make_policy_model(MacroDescriptor{}, ActionBounds{}, 8, rng);
    const Observation obs{12.0, 13.0, 120.0, 0.5};
    const double action = -0.42;
    const auto feat = policy_features(model, obs);
    ForwardCache cache;
    const Tensor mu = net_forward(model.actor, feat, &cache);
    const double stddev = std::exp(model.log_std[0]);
    const double range = model.bounds.a_max - model.bounds.a_min;
    const double p = (action - model.bounds.a_min) / range;
    const double z = std::log(p / (1.0 - p));
    NetGradients agrads = make_zero_gradients(model.actor);
    const double dmu[1] = {(z - mu[0]) / (stddev * stddev)};
    net_backward(model.actor, cache, std::span<const double>(dmu, 1), agrads);
    Tensor lsgrad{(z - mu[0]) * (z - mu[0]) / (stddev * stddev) - 1.0};

    std::vector<double> analytic, fd;
    const double h = 1e-6;
    auto probe = [&](Tensor& param, const Tensor& grad) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param[i];
        param[i] = keep + h;
        const double up = action_log_prob(model, obs, action);
        param[i] = keep - h;
        const double dn = action_log_prob(model, obs, action);
        param[i] = keep;
        analytic.push_back(grad[i]);
        fd.push_back((up - dn) / (2.0 * h));
      }
    };
    for (std::size_t l = 0; l < model.actor.layer_count(); ++l) {
      probe(model.actor.weights[l], agrads.weights[l]);
      probe(model.actor.biases[l], agrads.biases[l]);
    }
    probe(model.log_std, lsgrad);
    const double err = grad_rel_err(analytic, fd);
    if (err > 1e-4) {
      ok = false;
      detail << "policy log-prob rel err " << err << "; ";
    } else {
      detail << ", policy " << fmt(err);
    }
  }
  record(6, "gradient correctness", ok,
         ok ? "rel errs (" + detail.str() + ") within tolerance"
            : detail.str());
}

// ---------------------------------------------------------------- C7
void criterion7_gae_oracle() {
  RngStream rng(701);
  bool ok = true;
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + rng.uniform_index(10);
    std::vector<double> r(n), v(n);
    for (auto& x : r) x = rng.uniform(-1.0, 1.0);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    const double bootstrap = rng.uniform(-1.0, 1.0);
    const double gamma = rng.uniform(0.5, 1.0);
    const double lambda = rng.uniform(0.5, 1.0);
    const GaeResult g = gae(r, v, bootstrap, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      double expected = 0.0;
      for (std::size_t k = t; k < n; ++k) {
        const double next = (k + 1 == n) ? bootstrap : v[k + 1];
        expected += std::pow(gamma * lambda, static_cast<double>(k - t)) *
                    (r[k] + gamma * next - v[k]);
      }
      const double rel = std::abs(g.advantages[t] - expected) /
                         std::max(1.0, std::abs(expected));
      worst = std::max(worst, rel);
      ok = ok && rel <= 1e-12;
    }
  }
  record(7, "GAE oracle equivalence", ok,
         "100 instances, worst rel err " + fmt(worst));
}

// ---------------------------------------------------------------- C8
void criterion8_idm_equilibrium() {
  const RingGeometry geom{100.0};
  const ActionBounds bounds;
  const IdmParams p{1.0, 1.5, 12.5, 4.0, 3.0, 1.5};
  const double gap = geom.circumference() / 5.0;
  const double v_eq = idm_equilibrium_speed(p, gap, p.v0);
  Snapshot s;
  for (int i = 0; i < 5; ++i) {
    s.vehicles.push_back({i * kTwoPi / 5.0, v_eq});
    s.observed.push_back(1);
  }
  const SpeedLimitProfile profile{{{0.0, 13.5}}};
  double max_accel = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> u(5);
    for (int i = 0; i < 5; ++i) {
      const Observation obs = observe(s, i, geom, profile);
      u[i] = std::clamp(idm_accel(p, obs.v, obs.d_pre, obs.dv,
                                  std::min(p.v0, obs.v_limit)),
                        bounds.a_min, bounds.a_max);
      max_accel = std::max(max_accel, std::abs(u[i]));
    }
    s = step_dynamics(s, u, 0.1, geom, bounds);
  }
  record(8, "IDM equilibrium fixed point", max_accel < 1e-6,
         "max |accel| over 100 steps = " + fmt(max_accel));
}

// ---------------------------------------------------------------- C10
void criterion10_reproducibility(const Config& base) {
  namespace fs = std::filesystem;
  Config config = base;
  config.collect_runs = 6;
  config.collect_steps = 300;
  config.generator.iterations = 800;
  config.policy.iterations = 6;
  config.policy.batch_episodes = 8;
  config.eval.ks = {1, 3};
  config.eval.n_rollouts = 4;
  config.eval.horizon = 100;

  auto run_once = [&](const std::string& dir) {
    fs::create_directories(dir);
    const Dataset dataset = collect_runs(config.collect_config(),
                                         stream_seed(config.seed, "collect"));
    write_dataset(dataset, dir + "/data.tsv");
    MacroDescriptor descriptor = config.descriptor;
    GeneratorHyper ghyper = config.generator;
    ghyper.weights = config.weights;
    const GeneratorTrainResult gen = train_generator(
        dataset, descriptor, ghyper, stream_seed(config.seed, "gen"));
    save_generator(gen.model, dir + "/gen.bin");
    PpoHyper phyper = config.policy;
    const PolicyTrainResult pol =
        train_policy(dataset, gen.model, descriptor, config.bounds, phyper,
                     config.completion, config.weights,
                     stream_seed(config.seed, "policy"));
    save_policy(pol.model, dir + "/pol.bin");
    std::vector<AlignmentRow> rows;
    rows.push_back(ground_truth_row(dataset));
    const auto policy_rows = macro_alignment(
        pol.model, gen.model, dataset, config.eval, config.completion,
        stream_seed(config.seed, "eval"));
    rows.insert(rows.end(), policy_rows.begin(), policy_rows.end());
    export_alignment(rows, dir + "/align.tsv");
  };

  run_once("acceptance_artifacts/rep1");
  run_once("acceptance_artifacts/rep2");
  bool ok = true;
  std::string mismatches;
  for (const char* name : {"data.tsv", "gen.bin", "pol.bin", "align.tsv"}) {
    const std::string a =
        read_text_file(std::string("acceptance_artifacts/rep1/") + name);
    const std::string b =
        read_text_file(std::string("acceptance_artifacts/rep2/") + name);
    if (a != b) {
      ok = false;
      mismatches += std::string(name) + " ";
    }
  }
  record(10, "end-to-end reproducibility", ok,
         ok ? "dataset, both models and eval table byte-identical across runs"
            : "artifacts differ: " + mismatches);
}

}  // namespace

int main() {
  std::fprintf(stderr, "== fast numeric criteria ==\n");
  criterion5_loss_oracles();
  criterion6_gradients();
  criterion7_gae_oracle();
  criterion8_idm_equilibrium();

  const Config config = default_config();

  std::fprintf(stderr, "== pipeline: collect (%d runs x %d steps) ==\n",
               config.collect_runs, config.collect_steps);
  const Dataset dataset = collect_runs(config.collect_config(),
                                       stream_seed(config.seed, "collect"));
  const AlignmentRow gt = ground_truth_row(dataset);
  std::fprintf(stderr, "   ground truth: mean v %.3f, gap std %.2f\n",
               gt.mean_speed, gt.std_gap);

  std::fprintf(stderr, "== pipeline: train generator (%d iterations) ==\n",
               config.generator.iterations);
  GeneratorHyper ghyper = config.generator;
  ghyper.weights = config.weights;
  const GeneratorTrainResult gen = train_generator(
      dataset, config.descriptor, ghyper, stream_seed(config.seed, "gen"));

  {  // Criterion 4: constraint satisfaction over 1000 completions.
    const CompletionBatchResult audit = completion_batch(
        gen.model, dataset, 1000, 1, 4, config.generator.frame_window_frac,
        config.completion, config.parallel,
        stream_seed(config.seed, "acceptance-completions"));
    const bool ok =
        audit.bound_violations == 0 && audit.projection_rate() <= 0.05;
    record(4, "generator constraint satisfaction", ok,
           "accepted insertions violating bounds: " +
               std::to_string(audit.bound_violations) +
               ", projection rate " + fmt(audit.projection_rate()) + " (" +
               std::to_string(audit.projected) + "/" +
               std::to_string(audit.insertions) + " insertions)");
  }

  std::fprintf(stderr, "== pipeline: train policy (%d iterations x %d episodes) ==\n",
               config.policy.iterations, config.policy.batch_episodes);
  PpoHyper phyper = config.policy;
  phyper.parallel = config.parallel;
  const PolicyTrainResult pol =
      train_policy(dataset, gen.model, config.descriptor, config.bounds,
                   phyper, config.completion, config.weights,
                   stream_seed(config.seed, "policy"));
  std::fprintf(stderr, "   macro reward %.4f -> %.4f over %zu iterations\n",
               pol.initial_macro, pol.curve.back().macro, pol.curve.size());

  std::fprintf(stderr, "== pipeline: eval (%d rollouts per K, horizon %d) ==\n",
               config.eval.n_rollouts, config.eval.horizon);
  EvalConfig eval = config.eval;
  eval.parallel = config.parallel;
  const auto rows =
      macro_alignment(pol.model, gen.model, dataset, eval, config.completion,
                      stream_seed(config.seed, "eval"));
  for (const auto& r : rows)
    std::fprintf(stderr,
                 "   K=%d: mean v %.3f (std %.3f), mean gap %.3f (std %.2f)\n",
                 r.k, r.mean_speed, r.std_speed, r.mean_gap, r.std_gap);

  {  // Criterion 1: geometric spacing pin, trained and untrained.
    bool ok = true;
    std::string detail;
    for (const auto& r : rows) {
      if (std::abs(r.mean_gap - 125.664) > 0.05) {
        ok = false;
        detail += "K=" + std::to_string(r.k) + " mean gap " +
                  fmt(r.mean_gap) + "; ";
      }
    }
    RngStream fresh(424242);
    PolicyModel untrained =
        make_policy_model(config.descriptor, config.bounds, 16, fresh);
    EvalConfig quick = eval;
    quick.n_rollouts = 2;
    quick.horizon = 50;
    const auto quick_rows = macro_alignment(untrained, gen.model, dataset,
                                            quick, config.completion, 5);
    for (const auto& r : quick_rows)
      if (std::abs(r.mean_gap - 125.664) > 0.05) {
        ok = false;
        detail += "untrained K=" + std::to_string(r.k) + " mean gap " +
                  fmt(r.mean_gap) + "; ";
      }
    record(1, "geometric spacing pin", ok,
           ok ? "mean gap 125.664 +/- 0.05 for all K, trained and untrained"
              : detail);
  }

  {  // Criterion 2: mean-speed alignment.
    bool ok = true;
    std::string detail = "per-K mean speeds:";
    for (const auto& r : rows) {
      detail += " " + fmt(r.mean_speed);
      if (std::abs(r.mean_speed - 12.06) > 0.8) ok = false;
    }
    record(2, "mean-speed alignment", ok,
           detail + " (target 12.06 +/- 0.8, " +
               std::to_string(eval.n_rollouts) + " rollouts per K)");
  }

  {  // Criterion 3: spacing dispersion band.
    bool ok = true;
    std::string detail = "per-K gap stds:";
    for (const auto& r : rows) {
      detail += " " + fmt(r.std_gap);
      if (r.std_gap < 30.0 || r.std_gap > 40.0) ok = false;
    }
    record(3, "spacing dispersion band", ok, detail + " (band [30, 40] m)");
  }

  {  // Criterion 9: leader-follower directional response.
    bool ok = true;
    std::ostringstream detail;
    for (const bool accel : {true, false}) {
      ScenarioSpec spec;
      spec.duration = config.scenario.duration;
      spec.initial_gap = config.scenario.initial_gap;
      spec.v_limit = config.scenario.v_limit;
      spec.leader.ramp_start = config.scenario.ramp_start;
      spec.leader.ramp_duration = config.scenario.ramp_duration;
      spec.leader.v_start = accel ? 11.0 : 13.0;
      spec.leader.v_end = accel ? 13.0 : 11.0;
      spec.controller = FollowerController::kPolicy;

      const std::uint64_t seed =
          stream_seed(config.seed, accel ? "scenario-accel" : "scenario-decel");
      std::vector<ScenarioSeries> trials;
      bool gaps_ok = true;
      for (int i = 0; i < config.scenario.trials; ++i) {
        RngStream rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
        trials.push_back(
            leader_follower(spec, &pol.model, config.dt, config.bounds, rng));
        for (const auto& pt : trials.back().points)
          gaps_ok = gaps_ok && pt.gap > 0.0;
        gaps_ok = gaps_ok && !trials.back().collision;
      }
      std::size_t len = trials[0].points.size();
      for (const auto& t : trials) len = std::min(len, t.points.size());
      std::vector<double> mean_v(len, 0.0);
      for (const auto& t : trials)
        for (std::size_t i = 0; i < len; ++i)
          mean_v[i] += t.points[i].follower_v / trials.size();
      const std::size_t q = len / 4;
      double first = 0.0, last = 0.0;
      for (std::size_t i = 0; i < q; ++i) first += mean_v[i] / q;
      for (std::size_t i = len - q; i < len; ++i) last += mean_v[i] / q;
      const double delta = last - first;
      const bool directional = accel ? delta >= 0.5 : delta <= -0.5;
      ok = ok && gaps_ok && directional;
      detail << (accel ? "accel" : "decel") << " delta " << fmt(delta)
             << (gaps_ok ? "" : " (gap violation!)") << "; ";
    }
    record(9, "leader-follower directional response", ok,
           detail.str() + "required |delta| >= 0.5 with gap > 0");
  }

  std::fprintf(stderr, "== reduced-scale reproducibility ==\n");
  criterion10_reproducibility(config);

  std::sort(g_results.begin(), g_results.end(),
            [](const CriterionResult& a, const CriterionResult& b) {
              return a.id < b.id;
            });
  int failures = 0;
  std::printf("\nacceptance criteria:\n");
  for (const auto& r : g_results) {
    std::printf("[%2d] %-38s %s  (%s)\n", r.id, r.name.c_str(),
                r.pass ? "PASS" : "FAIL", r.detail.c_str());
    failures += r.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(g_results.size()) - failures,
              g_results.size());
  return failures;
}
