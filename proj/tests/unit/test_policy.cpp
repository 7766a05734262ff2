#include <doctest.h>

#include <stdexcept>
#include <cmath>
#include <vector>

#include "ringflow/policy.hpp"
#include "ringflow/rng.hpp"

using namespace ringflow;

namespace {

PolicyModel tiny_policy(std::uint64_t seed, int hidden = 16) {
  RngStream rng(seed);
  return make_policy_model(MacroDescriptor{}, ActionBounds{}, hidden, rng);
}

GeneratorModel tiny_generator(std::uint64_t seed) {
  RngStream rng(seed);
  return make_generator_model(MacroDescriptor{}, 5, 5, 16, rng);
}

Dataset tiny_dataset(std::uint64_t seed, int runs = 2, int steps = 40) {
  CollectConfig cc;
  cc.runs = runs;
  cc.steps = steps;
  cc.parallel = false;
  return collect_runs(cc, seed);
}

Observation sample_obs() { return {12.0, 13.0, 120.0, 0.5}; }

}  // namespace

TEST_CASE("policy_act: squashed range and degenerate center") {
  PolicyModel model = tiny_policy(1);
  SUBCASE("zero-weight actor centers on the action midpoint") {
    for (auto& w : model.actor.weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : model.actor.biases) std::fill(b.begin(), b.end(), 0.0);
    CHECK(policy_mean_action(model, sample_obs()) ==
          doctest::Approx(-0.3).epsilon(1e-12));
  }
  SUBCASE("sampled actions stay strictly inside the bounds") {
    RngStream rng(3);
    for (int i = 0; i < 500; ++i) {
      const ActResult r = policy_act(model, sample_obs(), rng);
      CHECK(r.action > -1.1);
      CHECK(r.action < 0.5);
      CHECK(std::isfinite(r.log_prob));
      CHECK(std::isfinite(r.value));
    }
  }
  SUBCASE("fixed seed reproduces action and log prob") {
    RngStream a(9), b(9);
    const ActResult ra = policy_act(model, sample_obs(), a);
    const ActResult rb = policy_act(model, sample_obs(), b);
    CHECK(ra.action == rb.action);
    CHECK(ra.log_prob == rb.log_prob);
  }
  SUBCASE("log prob at the sampled action matches action_log_prob") {
    RngStream rng(11);
    const ActResult r = policy_act(model, sample_obs(), rng);
    CHECK(action_log_prob(model, sample_obs(), r.action) ==
          doctest::Approx(r.log_prob).epsilon(1e-9));
  }
}

TEST_CASE("squash-corrected density integrates to one") {
  PolicyModel model = tiny_policy(5);
  model.log_std[0] = std::log(0.8);
  const Observation obs = sample_obs();
  const double a_min = model.bounds.a_min, a_max = model.bounds.a_max;
  const int n = 20000;  // Simpson needs even count
  const double margin = 1e-9;
  const double h = (a_max - a_min - 2.0 * margin) / n;
  auto pdf = [&](double a) { return std::exp(action_log_prob(model, obs, a)); };
  double integral = pdf(a_min + margin) + pdf(a_max - margin);
  for (int i = 1; i < n; ++i)
    integral += pdf(a_min + margin + i * h) * (i % 2 ? 4.0 : 2.0);
  integral *= h / 3.0;
  CHECK(std::abs(integral - 1.0) < 1e-4);
}

TEST_CASE("policy log-prob gradient matches finite differences") {
  PolicyModel model = tiny_policy(7, 8);
  const Observation obs = sample_obs();
  const double action = -0.42;

  // Analytic gradient of log pi(action | obs) wrt actor params and log_std.
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
  const double dls =
      (z - mu[0]) * (z - mu[0]) / (stddev * stddev) - 1.0;

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
  Tensor ls_grad{dls};
  probe(model.log_std, ls_grad);

  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    num += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
    da += analytic[i] * analytic[i];
    db += fd[i] * fd[i];
  }
  CHECK(std::sqrt(num) / std::max({std::sqrt(da), std::sqrt(db), 1e-12}) <
        1e-4);
}

TEST_CASE("gae: frozen examples and brute-force oracle") {
  SUBCASE("undiscounted single step") {
    const GaeResult g = gae(std::vector<double>{1.0}, std::vector<double>{0.0},
                            0.0, 1.0, 1.0);
    CHECK(g.advantages[0] == 1.0);
    CHECK(g.returns[0] == 1.0);
  }
  SUBCASE("hand recursion") {
    const GaeResult g =
        gae(std::vector<double>{1.0, 1.0}, std::vector<double>{0.0, 0.0}, 0.0,
            0.99, 0.95);
    CHECK(g.advantages[0] == doctest::Approx(1.9405).epsilon(1e-12));
    CHECK(g.advantages[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("zeros give zeros") {
    const GaeResult g =
        gae(std::vector<double>{0, 0, 0}, std::vector<double>{0, 0, 0}, 0.0,
            0.99, 0.95);
    for (double a : g.advantages) CHECK(a == 0.0);
  }
  SUBCASE("matches the discounted double-sum oracle") {
    RngStream rng(13);
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
          const double delta = r[k] + gamma * next - v[k];
          expected += std::pow(gamma * lambda, static_cast<double>(k - t)) *
                      delta;
        }
        CHECK(std::abs(g.advantages[t] - expected) <=
              1e-12 * std::max(1.0, std::abs(expected)));
      }
    }
  }
}

TEST_CASE("clipped surrogate arithmetic and branch gradients") {
  CHECK(clipped_surrogate(1.0, 1.0, 0.2) == 1.0);
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));

  // Where the clipped branch is active the surrogate is flat in log-prob.
  auto surrogate_of_logp = [](double logp, double adv, double clip) {
    return clipped_surrogate(std::exp(logp), adv, clip);
  };
  const double h = 1e-6;
  {
    // ratio 1.5, A=1: clipped active -> zero gradient
    const double g = (surrogate_of_logp(std::log(1.5) + h, 1.0, 0.2) -
                      surrogate_of_logp(std::log(1.5) - h, 1.0, 0.2)) /
                     (2.0 * h);
    CHECK(std::abs(g) < 1e-9);
  }
  {
    // ratio 1.05, A=1: unclipped active -> gradient ratio*A
    const double g = (surrogate_of_logp(std::log(1.05) + h, 1.0, 0.2) -
                      surrogate_of_logp(std::log(1.05) - h, 1.0, 0.2)) /
                     (2.0 * h);
    CHECK(g == doctest::Approx(1.05).epsilon(1e-5));
  }
  {
    // ratio 0.5, A=-1: clipped active -> zero gradient
    const double g = (surrogate_of_logp(std::log(0.5) + h, -1.0, 0.2) -
                      surrogate_of_logp(std::log(0.5) - h, -1.0, 0.2)) /
                     (2.0 * h);
    CHECK(std::abs(g) < 1e-9);
  }
}

TEST_CASE("rollout: counting, rewards, replay fidelity") {
  const Dataset data = tiny_dataset(51);
  PolicyModel policy = tiny_policy(3);
  GeneratorModel generator = tiny_generator(5);
  const PenaltyWeights weights;

  SUBCASE("transition and micro-pair counts for K=2, H=10") {
    RngStream rng(1);
    const Episode ep = rollout(policy, generator, data, 0, 2, {1, 3}, 10,
                               CompletionOptions{}, weights, rng);
    std::size_t transitions = 0;
    for (const auto& v : ep.hidden) transitions += v.steps.size();
    CHECK(transitions == 20);
    CHECK(ep.micro.size() == 30);
    CHECK(ep.macro_rewards.size() == 10);
    for (double r : ep.macro_rewards) {
      CHECK(r > 0.0);
      CHECK(r <= 1.0);
    }
    for (const auto& v : ep.hidden)
      for (const auto& tr : v.steps) {
        CHECK(tr.action >= -1.1);
        CHECK(tr.action <= 0.5);
      }
  }
  SUBCASE("K=0 replays the recorded scene exactly") {
    RngStream rng(2);
    const Episode ep = rollout(policy, generator, data, 0, 5, {}, 8,
                               CompletionOptions{}, weights, rng);
    CHECK(ep.hidden.empty());
    CHECK(ep.micro.size() == 40);
    for (int t = 0; t < 8; ++t) {
      const double expected =
          macro_reward(data.runs[0].snapshots[5 + t + 1], policy.descriptor,
                       weights, data.geometry);
      CHECK(ep.macro_rewards[t] == expected);
    }
  }
  SUBCASE("observed vehicles match ground truth at every step") {
    RngStream rng(3);
    std::vector<Snapshot> trace;
    const Episode ep = rollout(policy, generator, data, 1, 4, {0, 2}, 10,
                               CompletionOptions{}, weights, rng, &trace);
    (void)ep;
    REQUIRE(trace.size() == 11);
    const std::vector<int> observed{1, 3, 4};
    for (int t = 0; t <= 10; ++t)
      for (std::size_t i = 0; i < observed.size(); ++i) {
        const auto& gt = data.runs[1].snapshots[4 + t].vehicles[observed[i]];
        CHECK(trace[t].vehicles[i].theta == gt.theta);
        CHECK(trace[t].vehicles[i].v == gt.v);
      }
  }
  SUBCASE("frame shorter than the horizon is rejected") {
    RngStream rng(4);
    CHECK_THROWS_AS(rollout(policy, generator, data, 0, 35, {1}, 10,
                            CompletionOptions{}, weights, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("ppo_update: smoke, determinism, stats") {
  const Dataset data = tiny_dataset(61);
  PolicyModel policy = tiny_policy(13);
  GeneratorModel generator = tiny_generator(15);
  const PenaltyWeights weights;
  PpoHyper hyper;
  hyper.minibatch = 16;

  std::vector<Episode> episodes;
  RngStream rng(7);
  for (int e = 0; e < 4; ++e) {
    const int k = 1 + static_cast<int>(rng.uniform_index(3));
    std::vector<int> hidden;
    for (int i = 0; i < k; ++i) hidden.push_back(i);
    episodes.push_back(rollout(policy, generator, data, 0, e, hidden, 10,
                               CompletionOptions{}, weights, rng));
  }

  PolicyModel m1 = policy, m2 = policy;
  auto p1 = policy_params(m1);
  AdamState adam1 = make_adam_state({p1.begin(), p1.end()}, AdamConfig{});
  RngStream u1(99);
  const PpoStats s1 = ppo_update(m1, episodes, hyper, adam1, u1);
  CHECK(std::isfinite(s1.policy_loss));
  CHECK(std::isfinite(s1.value_loss));
  CHECK(s1.clip_fraction >= 0.0);
  CHECK(s1.clip_fraction <= 1.0);
  CHECK(s1.micro_loglik < 0.0);

  auto p2 = policy_params(m2);
  AdamState adam2 = make_adam_state({p2.begin(), p2.end()}, AdamConfig{});
  RngStream u2(99);
  ppo_update(m2, episodes, hyper, adam2, u2);
  for (std::size_t l = 0; l < m1.actor.layer_count(); ++l)
    CHECK(m1.actor.weights[l] == m2.actor.weights[l]);

  // parameters moved
  bool changed = false;
  for (std::size_t l = 0; l < m1.actor.layer_count(); ++l)
    changed = changed || m1.actor.weights[l] != policy.actor.weights[l];
  CHECK(changed);

  CHECK_THROWS_AS(ppo_update(m1, {}, hyper, adam1, u1), std::invalid_argument);
}

TEST_CASE("train_policy: zero iterations and determinism") {
  const Dataset data = tiny_dataset(71, 2, 30);
  GeneratorModel generator = tiny_generator(17);
  PpoHyper hyper;
  hyper.iterations = 0;
  hyper.batch_episodes = 2;
  hyper.hidden = 8;
  hyper.parallel = false;

  const PolicyTrainResult zero =
      train_policy(data, generator, MacroDescriptor{}, ActionBounds{}, hyper,
                   CompletionOptions{}, PenaltyWeights{}, 77);
  RngStream init(stream_seed(77, "policy-init"));
  const PolicyModel fresh =
      make_policy_model(MacroDescriptor{}, ActionBounds{}, 8, init);
  for (std::size_t l = 0; l < fresh.actor.layer_count(); ++l)
    CHECK(zero.model.actor.weights[l] == fresh.actor.weights[l]);

  hyper.iterations = 3;
  const PolicyTrainResult a =
      train_policy(data, generator, MacroDescriptor{}, ActionBounds{}, hyper,
                   CompletionOptions{}, PenaltyWeights{}, 78);
  const PolicyTrainResult b =
      train_policy(data, generator, MacroDescriptor{}, ActionBounds{}, hyper,
                   CompletionOptions{}, PenaltyWeights{}, 78);
  for (std::size_t l = 0; l < a.model.actor.layer_count(); ++l)
    CHECK(a.model.actor.weights[l] == b.model.actor.weights[l]);
  CHECK(a.curve.size() == 3);
  CHECK(a.curve[0].j == b.curve[0].j);
}

TEST_CASE("ppo hyper validation") {
  PpoHyper h;
  CHECK_NOTHROW(validate_ppo_hyper(h));
  h.clip = 1.5;
  CHECK_THROWS_AS(validate_ppo_hyper(h), std::invalid_argument);
  h = PpoHyper{};
  h.eta = -0.1;
  CHECK_THROWS_AS(validate_ppo_hyper(h), std::invalid_argument);
}
