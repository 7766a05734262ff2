#include "ringflow/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ringflow/parallel.hpp"

namespace ringflow {

namespace {
// Pre-squash samples beyond this are treated as saturated; keeps the
// imitation term finite when a recorded control sits on an action bound.
constexpr double kZClamp = 8.0;

double policy_std(const PolicyModel& model) {
  return std::exp(std::clamp(model.log_std[0], kLogStdLo, kLogStdHi));
}

double action_to_z(const PolicyModel& model, double action) {
  const double range = model.bounds.a_max - model.bounds.a_min;
  double p = (action - model.bounds.a_min) / range;
  const double p_lo = sigmoid(-kZClamp);
  p = std::clamp(p, p_lo, 1.0 - p_lo);
  return std::log(p / (1.0 - p));
}

// log |da/dz| at pre-squash z = log sigmoid(z) + log sigmoid(-z) + log range.
double squash_log_det(const PolicyModel& model, double z) {
  const double range = model.bounds.a_max - model.bounds.a_min;
  return log_sigmoid(z) + log_sigmoid(-z) + std::log(range);
}
}  // namespace

PolicyModel make_policy_model(const MacroDescriptor& descriptor,
                              const ActionBounds& bounds, int hidden,
                              RngStream& rng) {
  validate_descriptor(descriptor);
  if (!(bounds.a_min < 0.0 && 0.0 < bounds.a_max))
    throw std::invalid_argument("policy: requires a_min < 0 < a_max");
  PolicyModel model;
  model.descriptor = descriptor;
  model.bounds = bounds;
  model.actor = make_dense_net({4, hidden, hidden, 1}, rng);
  model.critic = make_dense_net({4, hidden, hidden, 1}, rng);
  model.log_std.assign(1, -0.5);
  return model;
}

std::vector<Tensor*> policy_params(PolicyModel& model) {
  std::vector<Tensor*> params;
  for (auto& w : model.actor.weights) params.push_back(&w);
  for (auto& b : model.actor.biases) params.push_back(&b);
  params.push_back(&model.log_std);
  for (auto& w : model.critic.weights) params.push_back(&w);
  for (auto& b : model.critic.biases) params.push_back(&b);
  return params;
}

std::array<double, 4> policy_features(const PolicyModel& model,
                                      const Observation& obs) {
  const MacroDescriptor& d = model.descriptor;
  return {obs.v / d.v_bar_gt - 1.0, obs.v_limit / d.v_bar_gt - 1.0,
          obs.d_pre / d.d_bar - 1.0, obs.dv};
}

ActResult policy_act(const PolicyModel& model, const Observation& obs,
                     RngStream& rng) {
  const auto feat = policy_features(model, obs);
  const Tensor mu = net_forward(model.actor, feat);
  const double stddev = policy_std(model);
  const GaussianSample sample = gaussian_sample(mu[0], stddev, rng);
  const double z = sample.value;
  const double range = model.bounds.a_max - model.bounds.a_min;

  ActResult r;
  r.mean = mu[0];
  r.z = z;
  r.action = model.bounds.a_min + sigmoid(z) * range;
  r.log_prob = gaussian_log_prob(mu[0], stddev, z) - squash_log_det(model, z);
  r.value = net_forward(model.critic, feat)[0];
  return r;
}

double policy_mean_action(const PolicyModel& model, const Observation& obs) {
  const auto feat = policy_features(model, obs);
  const Tensor mu = net_forward(model.actor, feat);
  const double range = model.bounds.a_max - model.bounds.a_min;
  return model.bounds.a_min + sigmoid(mu[0]) * range;
}

double action_log_prob(const PolicyModel& model, const Observation& obs,
                       double action) {
  const auto feat = policy_features(model, obs);
  const Tensor mu = net_forward(model.actor, feat);
  const double z = action_to_z(model, action);
  return gaussian_log_prob(mu[0], policy_std(model), z) -
         squash_log_det(model, z);
}

double state_value(const PolicyModel& model, const Observation& obs) {
  const auto feat = policy_features(model, obs);
  return net_forward(model.critic, feat)[0];
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              double bootstrap_value, double gamma, double lambda) {
  if (rewards.size() != values.size())
    throw std::invalid_argument("gae: length mismatch");
  const std::size_t n = rewards.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = (i + 1 == n) ? bootstrap_value : values[i + 1];
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * running;
    out.advantages[i] = running;
    out.returns[i] = running + values[i];
  }
  return out;
}

Episode rollout(const PolicyModel& policy, const GeneratorModel& generator,
                const Dataset& dataset, int run_index, int t0,
                const std::vector<int>& hidden_ids, int horizon,
                const CompletionOptions& completion,
                const PenaltyWeights& weights, RngStream& rng,
                std::vector<Snapshot>* trace) {
  if (run_index < 0 || run_index >= static_cast<int>(dataset.runs.size()))
    throw std::invalid_argument("rollout: run index out of range");
  const Run& run = dataset.runs[run_index];
  if (t0 < 0 || t0 + horizon >= static_cast<int>(run.snapshots.size()))
    throw std::invalid_argument("rollout: frame shorter than horizon");

  const int n = dataset.n_vehicles;
  std::vector<std::uint8_t> is_hidden(n, 0);
  for (int h : hidden_ids) {
    if (h < 0 || h >= n)
      throw std::invalid_argument("rollout: hidden id out of range");
    is_hidden[static_cast<std::size_t>(h)] = 1;
  }
  std::vector<int> observed_ids;
  for (int i = 0; i < n; ++i)
    if (!is_hidden[static_cast<std::size_t>(i)]) observed_ids.push_back(i);

  Episode ep;
  ep.k = static_cast<int>(hidden_ids.size());
  ep.run = run_index;
  ep.t0 = t0;

  Snapshot partial;
  for (int id : observed_ids) {
    partial.vehicles.push_back(run.snapshots[t0].vehicles[id]);
    partial.observed.push_back(1);
  }

  Snapshot state;
  int n_policy = 0;
  if (partial.size() == static_cast<std::size_t>(n)) {
    state = partial;
  } else {
    const Completion comp = complete_scene(generator, partial,
                                           dataset.geometry, n, completion, rng);
    state = comp.snapshot;
    n_policy = static_cast<int>(state.size() - partial.size());
  }
  const std::size_t m = partial.size();
  ep.hidden.resize(n_policy);
  if (trace) {
    trace->clear();
    trace->push_back(state);
  }

  const RingGeometry& geom = dataset.geometry;
  const ActionBounds& bounds = policy.bounds;
  for (int t = 0; t < horizon; ++t) {
    std::vector<double> controls(state.size(), 0.0);
    for (int j = 0; j < n_policy; ++j) {
      const std::size_t idx = m + static_cast<std::size_t>(j);
      const Observation obs = observe(state, idx, geom, run.profile);
      const ActResult act = policy_act(policy, obs, rng);
      controls[idx] = act.action;
      ep.hidden[j].steps.push_back({obs, act.action, act.log_prob, act.value});
    }
    Snapshot next = step_dynamics(state, controls, dataset.dt, geom, bounds);
    // Observed vehicles replay their recorded ground truth exactly.
    for (std::size_t i = 0; i < m; ++i)
      next.vehicles[i] = run.snapshots[t0 + t + 1].vehicles[observed_ids[i]];
    ep.macro_rewards.push_back(
        macro_reward(next, policy.descriptor, weights, geom));
    state = std::move(next);
    if (trace) trace->push_back(state);
  }
  for (int j = 0; j < n_policy; ++j) {
    const std::size_t idx = m + static_cast<std::size_t>(j);
    const Observation obs = observe(state, idx, geom, run.profile);
    ep.hidden[j].bootstrap_value = state_value(policy, obs);
  }

  // Imitation supervision from the fully observed recording.
  for (int t = t0; t < t0 + horizon; ++t) {
    for (int id : observed_ids) {
      const Observation obs =
          observe(run.snapshots[t], static_cast<std::size_t>(id), geom,
                  run.profile);
      ep.micro.push_back({obs, run.controls[t][static_cast<std::size_t>(id)]});
    }
  }
  return ep;
}

void validate_ppo_hyper(const PpoHyper& h) {
  if (!(h.clip > 0.0 && h.clip < 1.0))
    throw std::invalid_argument("ppo: clip must be in (0, 1)");
  if (!(h.gamma > 0.0 && h.gamma <= 1.0))
    throw std::invalid_argument("ppo: gamma must be in (0, 1]");
  if (!(h.gae_lambda > 0.0 && h.gae_lambda <= 1.0))
    throw std::invalid_argument("ppo: gae_lambda must be in (0, 1]");
  if (h.eta < 0.0) throw std::invalid_argument("ppo: eta must be >= 0");
  if (h.epochs < 1 || h.minibatch < 1 || h.horizon < 1 ||
      h.batch_episodes < 1)
    throw std::invalid_argument("ppo: counts must be >= 1");
  if (h.k_lo < 0 || h.k_hi < h.k_lo)
    throw std::invalid_argument("ppo: bad K range");
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

namespace {

struct FlatBatch {
  std::vector<const PolicyTransition*> transitions;
  std::vector<double> advantages;
  std::vector<double> returns;
};

FlatBatch flatten(const std::vector<Episode>& episodes, const PpoHyper& h) {
  FlatBatch flat;
  for (const auto& ep : episodes) {
    std::vector<double> rewards(ep.macro_rewards.size());
    for (std::size_t t = 0; t < rewards.size(); ++t)
      rewards[t] = h.eta * ep.macro_rewards[t];
    for (const auto& veh : ep.hidden) {
      std::vector<double> values;
      values.reserve(veh.steps.size());
      for (const auto& tr : veh.steps) values.push_back(tr.value);
      const GaeResult g =
          gae(rewards, values, veh.bootstrap_value, h.gamma, h.gae_lambda);
      for (std::size_t t = 0; t < veh.steps.size(); ++t) {
        flat.transitions.push_back(&veh.steps[t]);
        flat.advantages.push_back(g.advantages[t]);
        flat.returns.push_back(g.returns[t]);
      }
    }
  }
  if (!flat.advantages.empty()) {
    double mean = std::accumulate(flat.advantages.begin(),
                                  flat.advantages.end(), 0.0) /
                  static_cast<double>(flat.advantages.size());
    double var = 0.0;
    for (double a : flat.advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(flat.advantages.size());
    const double denom = std::max(std::sqrt(var), 1e-8);
    for (double& a : flat.advantages) a = (a - mean) / denom;
  }
  return flat;
}

void shuffle_indices(std::vector<std::size_t>& idx, RngStream& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

PpoStats ppo_update(PolicyModel& model, const std::vector<Episode>& episodes,
                    const PpoHyper& hyper, AdamState& adam, RngStream& rng) {
  validate_ppo_hyper(hyper);
  if (episodes.empty())
    throw std::invalid_argument("ppo_update: empty batch");

  const FlatBatch flat = flatten(episodes, hyper);
  std::vector<const MicroPair*> micro;
  for (const auto& ep : episodes)
    for (const auto& p : ep.micro) micro.push_back(&p);
  if (flat.transitions.empty() && micro.empty())
    throw std::invalid_argument("ppo_update: batch has no samples");

  auto params = policy_params(model);
  NetGradients actor_grads = make_zero_gradients(model.actor);
  NetGradients critic_grads = make_zero_gradients(model.critic);
  Tensor log_std_grads(1, 0.0);

  PpoStats stats;
  long long pg_samples = 0, clipped = 0;
  double kl_sum = 0.0, pg_loss_sum = 0.0, v_loss_sum = 0.0, micro_sum = 0.0;
  long long micro_n = 0;

  std::vector<std::size_t> order(flat.transitions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> micro_order(micro.size());
  std::iota(micro_order.begin(), micro_order.end(), std::size_t{0});

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle_indices(order, rng);
    shuffle_indices(micro_order, rng);
    const std::size_t n_chunks = std::max<std::size_t>(
        1, (order.size() + hyper.minibatch - 1) / hyper.minibatch);
    const std::size_t micro_per_chunk =
        micro.empty() ? 0 : (micro.size() + n_chunks - 1) / n_chunks;

    for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
      zero_gradients(actor_grads);
      zero_gradients(critic_grads);
      log_std_grads[0] = 0.0;

      const double stddev = policy_std(model);
      const double var = stddev * stddev;

      const std::size_t lo = chunk * hyper.minibatch;
      const std::size_t hi =
          std::min(order.size(), lo + static_cast<std::size_t>(hyper.minibatch));
      const double nb = static_cast<double>(std::max<std::size_t>(1, hi - lo));
      for (std::size_t s = lo; s < hi; ++s) {
        const std::size_t i = order[s];
        const PolicyTransition& tr = *flat.transitions[i];
        const double adv = flat.advantages[i];
        const auto feat = policy_features(model, tr.obs);
        ForwardCache cache;
        const Tensor mu = net_forward(model.actor, feat, &cache);
        const double z = action_to_z(model, tr.action);
        const double new_logp = gaussian_log_prob(mu[0], stddev, z) -
                                squash_log_det(model, z);
        const double log_ratio = new_logp - tr.log_prob;
        const double ratio = std::exp(log_ratio);
        const double unclipped = ratio * adv;
        const double clipped_obj =
            std::clamp(ratio, 1.0 - hyper.clip, 1.0 + hyper.clip) * adv;
        pg_loss_sum += -clipped_surrogate(ratio, adv, hyper.clip);
        kl_sum += (ratio - 1.0) - log_ratio;
        if (std::abs(ratio - 1.0) > hyper.clip) ++clipped;
        ++pg_samples;

        // Gradient flows only through the unclipped branch when it is the
        // active minimum.
        if (unclipped <= clipped_obj) {
          const double dlogp = -adv * ratio / nb;
          const double dmu = dlogp * (z - mu[0]) / var;
          log_std_grads[0] += dlogp * ((z - mu[0]) * (z - mu[0]) / var - 1.0);
          const double dy[1] = {dmu};
          net_backward(model.actor, cache, std::span<const double>(dy, 1),
                       actor_grads);
        }

        ForwardCache vcache;
        const Tensor v = net_forward(model.critic, feat, &vcache);
        const double verr = v[0] - flat.returns[i];
        v_loss_sum += 0.5 * verr * verr;
        const double dv[1] = {hyper.value_coef * verr / nb};
        net_backward(model.critic, vcache, std::span<const double>(dv, 1),
                     critic_grads);
      }

      // Entropy bonus on the pre-squash Gaussian: dH/dlog_std = 1.
      if (hi > lo) log_std_grads[0] += -hyper.entropy_coef;

      if (micro_per_chunk > 0) {
        const std::size_t mlo = chunk * micro_per_chunk;
        const std::size_t mhi =
            std::min(micro.size(), mlo + micro_per_chunk);
        const double mn = static_cast<double>(std::max<std::size_t>(1, mhi - mlo));
        for (std::size_t s = mlo; s < mhi; ++s) {
          const MicroPair& pair = *micro[micro_order[s]];
          const auto feat = policy_features(model, pair.obs);
          ForwardCache cache;
          const Tensor mu = net_forward(model.actor, feat, &cache);
          const double z = action_to_z(model, pair.u);
          const double logp = gaussian_log_prob(mu[0], stddev, z) -
                              squash_log_det(model, z);
          micro_sum += logp;
          ++micro_n;
          const double dlogp = -hyper.micro_weight / mn;
          const double dmu = dlogp * (z - mu[0]) / var;
          log_std_grads[0] += dlogp * ((z - mu[0]) * (z - mu[0]) / var - 1.0);
          const double dy[1] = {dmu};
          net_backward(model.actor, cache, std::span<const double>(dy, 1),
                       actor_grads);
        }
      }

      std::vector<const Tensor*> grads;
      for (const auto& w : actor_grads.weights) grads.push_back(&w);
      for (const auto& b : actor_grads.biases) grads.push_back(&b);
      grads.push_back(&log_std_grads);
      for (const auto& w : critic_grads.weights) grads.push_back(&w);
      for (const auto& b : critic_grads.biases) grads.push_back(&b);
      adam_step(params, grads, adam);
      model.log_std[0] = std::clamp(model.log_std[0], kLogStdLo, kLogStdHi);
    }
  }

  if (pg_samples > 0) {
    stats.policy_loss = pg_loss_sum / static_cast<double>(pg_samples);
    stats.value_loss = v_loss_sum / static_cast<double>(pg_samples);
    stats.clip_fraction =
        static_cast<double>(clipped) / static_cast<double>(pg_samples);
    stats.approx_kl = kl_sum / static_cast<double>(pg_samples);
  }
  stats.entropy = 0.5 * std::log(2.0 * 3.141592653589793 * 2.718281828459045) +
                  std::clamp(model.log_std[0], kLogStdLo, kLogStdHi);
  if (micro_n > 0)
    stats.micro_loglik = micro_sum / static_cast<double>(micro_n);
  return stats;
}

PolicyTrainResult train_policy(const Dataset& dataset,
                               const GeneratorModel& generator,
                               const MacroDescriptor& descriptor,
                               const ActionBounds& bounds,
                               const PpoHyper& hyper,
                               const CompletionOptions& completion,
                               const PenaltyWeights& weights,
                               std::uint64_t seed) {
  validate_ppo_hyper(hyper);
  if (dataset.runs.empty())
    throw std::invalid_argument("train_policy: empty dataset");
  if (hyper.horizon + 1 > dataset.steps)
    throw std::invalid_argument("train_policy: runs shorter than horizon");
  if (hyper.k_hi > dataset.n_vehicles)
    throw std::invalid_argument("train_policy: k_hi exceeds N");

  RngStream init_rng(stream_seed(seed, "policy-init"));
  PolicyTrainResult result;
  result.model = make_policy_model(descriptor, bounds, hyper.hidden, init_rng);
  PolicyModel& model = result.model;

  auto params = policy_params(model);
  AdamState adam = make_adam_state(
      {params.begin(), params.end()},
      AdamConfig{hyper.learning_rate, 0.9, 0.999, 1e-8});

  const std::uint64_t episode_master = stream_seed(seed, "policy-episodes");
  RngStream update_rng(stream_seed(seed, "policy-update"));

  double best_window = -1e300;
  int stale_windows = 0;
  double window_sum = 0.0;
  int window_n = 0;

  for (int iter = 0; iter < hyper.iterations; ++iter) {
    if (hyper.anneal_lr) {
      const double frac =
          1.0 - static_cast<double>(iter) / static_cast<double>(hyper.iterations);
      adam.config.step_size = hyper.learning_rate * std::max(frac, 0.05);
    }
    std::vector<Episode> episodes(hyper.batch_episodes);
    par::for_each_index(
        static_cast<std::size_t>(hyper.batch_episodes), hyper.parallel,
        [&](std::size_t e) {
          RngStream rng(stream_seed(
              episode_master,
              static_cast<std::uint64_t>(iter) * 1000003ull + e));
          const int run_index =
              static_cast<int>(rng.uniform_index(dataset.runs.size()));
          const int t0 = static_cast<int>(rng.uniform_index(
              static_cast<std::uint64_t>(dataset.steps - hyper.horizon)));
          const int k =
              hyper.k_lo +
              static_cast<int>(rng.uniform_index(
                  static_cast<std::uint64_t>(hyper.k_hi - hyper.k_lo + 1)));
          std::vector<int> pool(dataset.n_vehicles);
          std::iota(pool.begin(), pool.end(), 0);
          for (int i = 0; i < k; ++i) {
            const int j = i + static_cast<int>(rng.uniform_index(
                                  static_cast<std::uint64_t>(
                                      dataset.n_vehicles - i)));
            std::swap(pool[static_cast<std::size_t>(i)],
                      pool[static_cast<std::size_t>(j)]);
          }
          pool.resize(k);
          episodes[e] = rollout(model, generator, dataset, run_index, t0, pool,
                                hyper.horizon, completion, weights, rng);
        });

    // Trajectory-level score of the batch before the update.
    double j_sum = 0.0, macro_sum = 0.0;
    long long macro_n = 0;
    for (const auto& ep : episodes) {
      double micro_ll = 0.0;
      for (const auto& pair : ep.micro)
        micro_ll += action_log_prob(model, pair.obs, pair.u);
      double macro_total = 0.0;
      for (double r : ep.macro_rewards) {
        macro_total += r;
        macro_sum += r;
        ++macro_n;
      }
      j_sum += micro_ll + hyper.eta * macro_total;
    }
    const double j = j_sum / static_cast<double>(episodes.size());
    const double macro_mean =
        macro_n > 0 ? macro_sum / static_cast<double>(macro_n) : 0.0;
    if (iter == 0) {
      result.initial_macro = macro_mean;
      result.initial_j = j;
    }

    const PpoStats stats = ppo_update(model, episodes, hyper, adam, update_rng);
    result.curve.push_back({iter + 1, j, stats.micro_loglik, macro_mean,
                            stats.clip_fraction, stats.approx_kl});

    // Convergence: windowed mean of J must keep improving by eps.
    window_sum += j;
    ++window_n;
    if (window_n == hyper.convergence_window) {
      const double mean_j = window_sum / window_n;
      if (mean_j > best_window + hyper.convergence_eps) {
        best_window = mean_j;
        stale_windows = 0;
      } else {
        ++stale_windows;
      }
      window_sum = 0.0;
      window_n = 0;
      if (stale_windows >= hyper.patience) break;
    }
  }
  return result;
}

}  // namespace ringflow
