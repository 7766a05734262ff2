#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ringflow/generator.hpp"
#include "ringflow/idm.hpp"
#include "ringflow/macro_stats.hpp"
#include "ringflow/neural.hpp"
#include "ringflow/ring.hpp"

namespace ringflow {

// Shared actor-critic. The actor emits a pre-squash Gaussian mean; actions
// are squashed into [a_min, a_max] through a sigmoid, and log-densities
// carry the change-of-variables correction.
struct PolicyModel {
  DenseNet actor;
  Tensor log_std;  // 1, shared across states
  DenseNet critic;
  MacroDescriptor descriptor;
  ActionBounds bounds;
};

PolicyModel make_policy_model(const MacroDescriptor& descriptor,
                              const ActionBounds& bounds, int hidden,
                              RngStream& rng);

std::vector<Tensor*> policy_params(PolicyModel& model);

// Observation scaled around the descriptor targets.
std::array<double, 4> policy_features(const PolicyModel& model,
                                      const Observation& obs);

struct ActResult {
  double action = 0.0;
  double log_prob = 0.0;
  double value = 0.0;
  double z = 0.0;     // pre-squash sample
  double mean = 0.0;  // actor output
};

ActResult policy_act(const PolicyModel& model, const Observation& obs,
                     RngStream& rng);

// Mean action (no sampling); used for deterministic evaluation traces.
double policy_mean_action(const PolicyModel& model, const Observation& obs);

// Squash-corrected log-density of `action` under the policy at `obs`.
double action_log_prob(const PolicyModel& model, const Observation& obs,
                       double action);

double state_value(const PolicyModel& model, const Observation& obs);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma V_{t+1} - V_t; A_t = sum_k (gamma lambda)^k
// delta_{t+k}; returns = A + V.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              double bootstrap_value, double gamma, double lambda);

struct PolicyTransition {
  Observation obs;
  double action = 0.0;
  double log_prob = 0.0;
  double value = 0.0;
};

struct VehicleTrajectory {
  std::vector<PolicyTransition> steps;
  double bootstrap_value = 0.0;
};

struct MicroPair {
  Observation obs;
  double u = 0.0;
};

// One mixed replay/policy episode: hidden vehicles act through the policy,
// observed vehicles are pinned to their recorded states, and the recorded
// (obs, u) pairs feed the imitation term.
struct Episode {
  std::vector<VehicleTrajectory> hidden;
  std::vector<double> macro_rewards;  // per step, in (0, 1]
  std::vector<MicroPair> micro;
  int k = 0;
  int run = 0;
  int t0 = 0;
};

Episode rollout(const PolicyModel& policy, const GeneratorModel& generator,
                const Dataset& dataset, int run_index, int t0,
                const std::vector<int>& hidden_ids, int horizon,
                const CompletionOptions& completion,
                const PenaltyWeights& weights, RngStream& rng,
                std::vector<Snapshot>* trace = nullptr);

struct PpoHyper {
  double clip = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 4;
  int minibatch = 64;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double micro_weight = 1.0;
  double eta = 0.3;  // macro reward weight
  int horizon = 10;
  int batch_episodes = 32;
  int iterations = 400;
  int hidden = 64;
  double learning_rate = 3e-4;
  bool anneal_lr = true;
  int k_lo = 1;
  int k_hi = 4;
  double convergence_eps = 0.01;
  int convergence_window = 20;
  int patience = 10;
  bool parallel = true;
};

void validate_ppo_hyper(const PpoHyper& hyper);

// min(ratio * adv, clamp(ratio, 1 - clip, 1 + clip) * adv); the quantity PPO
// maximizes per sample.
double clipped_surrogate(double ratio, double advantage, double clip);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double micro_loglik = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

// Clipped-surrogate update over the batch: advantages from the eta-scaled
// macro reward stream via GAE, imitation log-likelihood differentiated
// directly, value regression and an entropy bonus on the pre-squash
// Gaussian.
PpoStats ppo_update(PolicyModel& model, const std::vector<Episode>& episodes,
                    const PpoHyper& hyper, AdamState& adam, RngStream& rng);

struct PolicyCurvePoint {
  int iteration = 0;
  double j = 0.0;
  double micro = 0.0;
  double macro = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

struct PolicyTrainResult {
  PolicyModel model;
  std::vector<PolicyCurvePoint> curve;
  double initial_macro = 0.0;  // mean per-step macro reward before training
  double initial_j = 0.0;
};

PolicyTrainResult train_policy(const Dataset& dataset,
                               const GeneratorModel& generator,
                               const MacroDescriptor& descriptor,
                               const ActionBounds& bounds,
                               const PpoHyper& hyper,
                               const CompletionOptions& completion,
                               const PenaltyWeights& weights,
                               std::uint64_t seed);

}  // namespace ringflow
