#pragma once

#include <span>
#include <vector>

#include "ringflow/idm.hpp"
#include "ringflow/ring.hpp"

namespace ringflow {

// Scene-level targets: fleet-average speed, mean spacing, and admissible
// spacing/speed envelopes.
struct MacroDescriptor {
  double v_bar_gt = 12.06;
  double d_bar = 126.0;
  double d_min = 115.0;
  double d_max = 140.0;
  double v_min = 10.5;
  double v_max = 14.0;
};

struct PenaltyWeights {
  double lambda_v = 0.5;
  double lambda_d = 0.5;
};

// Spacing penalty decomposition, returned for logging.
struct SpacingPenalty {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double var = 0.0;
  double total() const { return mean + min + max + var; }
};

void validate_descriptor(const MacroDescriptor& descriptor);
void validate_weights(const PenaltyWeights& weights);

// Empirical fleet-average speed and mean gap over every (run, step, vehicle);
// the admissible envelopes come from `envelope`, not the data.
MacroDescriptor compute_descriptor(const Dataset& dataset,
                                   const MacroDescriptor& envelope);

// ((mean(speeds) / v_bar_gt) - 1)^2
double l_speed(std::span<const double> speeds, double v_bar_gt);
// Gradient of l_speed with respect to each speed.
void l_speed_grad(std::span<const double> speeds, double v_bar_gt,
                  std::span<double> grad_out);

// Composite spacing penalty over the gaps influenced by generated vehicles.
SpacingPenalty l_dist(std::span<const double> gaps,
                      const MacroDescriptor& descriptor);
// Gradient of l_dist's total with respect to each gap (subgradient 0 at the
// hinge kinks and at zero dispersion).
void l_dist_grad(std::span<const double> gaps,
                 const MacroDescriptor& descriptor,
                 std::span<double> grad_out);

// Mean squared (theta, v) error over matched hidden vehicles.
double l_rec(std::span<const VehicleState> predicted,
             std::span<const VehicleState> reference);

// lambda_v * L_speed + lambda_d * L_dist over the affected gap set. An empty
// `affected_gaps` means every gap is affected.
double generator_loss(const Snapshot& completed,
                      std::span<const std::size_t> affected_gaps,
                      const MacroDescriptor& descriptor,
                      const PenaltyWeights& weights,
                      const RingGeometry& geometry);

// Bounded per-step reward 1 / (1 + lambda_v L_speed + lambda_d L_dist), with
// the spacing penalty taken over all gaps.
double macro_reward(const Snapshot& snapshot,
                    const MacroDescriptor& descriptor,
                    const PenaltyWeights& weights,
                    const RingGeometry& geometry);

}  // namespace ringflow
