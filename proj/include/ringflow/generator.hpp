#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ringflow/macro_stats.hpp"
#include "ringflow/neural.hpp"
#include "ringflow/ring.hpp"
#include "ringflow/rng.hpp"

namespace ringflow {

// Stochastic autoregressive completer of hidden vehicles. The trunk maps a
// scene context to two Gaussian means (gap-fraction logit, speed pre-squash);
// log_std is learned per output and kept in [-5, 2].
struct GeneratorModel {
  DenseNet trunk;
  Tensor log_std;  // 2
  MacroDescriptor descriptor;
  int n_vehicles = 5;
  int k_max = 5;
};

inline constexpr double kLogStdLo = -5.0;
inline constexpr double kLogStdHi = 2.0;

int generator_context_dim(int n_vehicles);

GeneratorModel make_generator_model(const MacroDescriptor& descriptor,
                                    int n_vehicles, int k_max, int hidden,
                                    RngStream& rng);

std::vector<Tensor*> generator_params(GeneratorModel& model);

// The gap an insertion is aimed at: from the anchor vehicle to its angular
// successor. anchor == -1 encodes the empty ring (whole circle, theta 0).
struct GapTarget {
  int anchor = -1;
  int successor = -1;
  double anchor_theta = 0.0;
  double arc = kTwoPi;
  int slot = 0;  // anchor's position in sorted order
};

// Largest gap of the current scene; snapshot may have one vehicle (whole
// ring measured from it) or be empty (default target).
GapTarget select_largest_gap(const Snapshot& snapshot,
                             const RingGeometry& geometry);

// Gap list that also covers degenerate scenes: one vehicle owns the whole
// circumference; an empty scene has no gaps.
std::vector<double> scene_gaps(const Snapshot& snapshot,
                               const RingGeometry& geometry);

// Fixed-length conditioning vector: per sorted slot (gap/d_bar, v/v_bar_gt,
// presence), the descriptor fields, remaining hidden count, targeted slot.
std::vector<double> encode_context(const Snapshot& partial,
                                   const MacroDescriptor& descriptor,
                                   const RingGeometry& geometry,
                                   int n_vehicles, int target_slot,
                                   int remaining_k);

struct Proposal {
  double theta = 0.0;
  double v = 0.0;
  double f = 0.0;  // gap fraction in (0, 1)
  double z_f = 0.0, z_v = 0.0;
  double eps_f = 0.0, eps_v = 0.0;
  double mu_f = 0.0, mu_v = 0.0;
  GapTarget target;
  ForwardCache cache;
};

// Deterministic proposal given the reparameterization noise; rng-driven
// overload draws the noise pair from the stream.
Proposal propose_with_eps(const GeneratorModel& model, const Snapshot& partial,
                          const RingGeometry& geometry, int remaining_k,
                          double eps_f, double eps_v);
Proposal propose(const GeneratorModel& model, const Snapshot& partial,
                 const RingGeometry& geometry, int remaining_k,
                 RngStream& rng);

// Spacing band: j >= 0 when (j+1)*d_min <= d <= (j+1)*d_max with j <=
// max_band, else -1. Band j means the gap can host exactly j more vehicles
// with every final piece inside [d_min, d_max].
int spacing_band(double d, double d_min, double d_max, int max_band);

// True when `remaining` further insertions can bring every gap into
// [d_min, d_max]: all gaps banded and the band capacities sum to remaining.
bool completable(std::span<const double> gaps, int remaining, double d_min,
                 double d_max);

enum class InfeasiblePolicy { kProject, kAbort };

// kFinal accepts a candidate only if the whole scene stays completable, so
// accepted insertions end up inside the bounds once the scene is full. With
// no insertions left it coincides with kImmediate, which demands both
// adjacent gaps in [d_min, d_max] right away.
enum class GapTestMode { kFinal, kImmediate };

struct CompletionOptions {
  int t_max = 20;
  InfeasiblePolicy on_infeasible = InfeasiblePolicy::kProject;
  GapTestMode gap_test = GapTestMode::kFinal;
};

struct CompletionStats {
  int inserted = 0;
  int accepted = 0;
  int projected = 0;
  int trials = 0;
};

struct Completion {
  Snapshot snapshot;
  CompletionStats stats;
  std::vector<std::uint8_t> projected;  // per inserted vehicle
};

// Autoregressive rollout with rejection; observed vehicles pass through
// unchanged. On t_max exhaustion the last candidate is projected (speed
// clamped; theta placed so the tighter adjacent gap equals d_min when the
// gap allows it, else at the gap midpoint) or, under kAbort, insertion
// stops and a partial scene is returned.
Completion complete_scene(const GeneratorModel& model, const Snapshot& partial,
                          const RingGeometry& geometry, int total_vehicles,
                          const CompletionOptions& options, RngStream& rng);

struct EpsPair {
  double f = 0.0;
  double v = 0.0;
};

struct TrainingLoss {
  double loss = 0.0;
  NetGradients trunk_grads;
  Tensor log_std_grads;  // 2
  Snapshot completed;
  std::vector<std::size_t> affected_gaps;
};

// One training completion with frozen noise: inserts eps.size() candidates
// without rejection, evaluates the weighted scene loss over the affected
// gaps, and backpropagates through the placement and squashing maps down to
// the trunk parameters. Gradients treat each step's context encoding as
// constant (exact for a single insertion); the geometric coupling between
// insertions is kept.
TrainingLoss generator_training_loss(const GeneratorModel& model,
                                     const Snapshot& partial,
                                     const RingGeometry& geometry,
                                     const PenaltyWeights& weights,
                                     std::span<const EpsPair> eps);

struct GeneratorHyper {
  int iterations = 20000;
  int hidden = 64;
  int k_max = 5;
  double learning_rate = 1e-3;
  PenaltyWeights weights;
  double frame_window_frac = 0.02;
  int log_every = 200;
};

struct CurvePoint {
  int iteration = 0;
  double loss = 0.0;
};

struct GeneratorTrainResult {
  GeneratorModel model;
  std::vector<CurvePoint> curve;
};

GeneratorTrainResult train_generator(const Dataset& dataset,
                                     const MacroDescriptor& descriptor,
                                     const GeneratorHyper& hyper,
                                     std::uint64_t seed);

struct CompletionBatchResult {
  long long completions = 0;
  long long insertions = 0;
  long long accepted = 0;
  long long projected = 0;
  long long bound_violations = 0;  // accepted insertions off-bounds in the
                                   // final scene, projections excluded
  double projection_rate() const {
    return insertions == 0
               ? 0.0
               : static_cast<double>(projected) / static_cast<double>(insertions);
  }
};

// Runs n_completions frame completions drawn from the dataset (frames from
// the leading window of each run, matching the initial-state semantics of
// scene completion; hidden subsets uniform, K uniform in [k_lo, k_hi]) and
// audits every accepted insertion against the final-scene bounds.
// Completions are independent; the kernel parallelizes over them.
CompletionBatchResult completion_batch(const GeneratorModel& model,
                                       const Dataset& dataset,
                                       int n_completions, int k_lo, int k_hi,
                                       double frame_window_frac,
                                       const CompletionOptions& options,
                                       bool parallel, std::uint64_t seed);

}  // namespace ringflow
