#pragma once

#include <cstdint>
#include <vector>

#include "ringflow/ring.hpp"
#include "ringflow/rng.hpp"

namespace ringflow {

struct IdmParams {
  double a_cap = 1.0;  // max acceleration, m/s^2
  double b = 1.5;      // comfortable deceleration, m/s^2
  double v0 = 12.5;    // desired speed, m/s
  double delta = 4.0;  // acceleration exponent
  double s0 = 3.0;     // jam distance, m
  double T = 1.5;      // time headway, s
};

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct IdmRanges {
  ParamRange a_cap{0.8, 1.2};
  ParamRange b{1.2, 2.0};
  ParamRange v0{11.5, 13.5};
  ParamRange s0{2.0, 4.0};
  ParamRange T{1.2, 1.8};
  double delta = 4.0;
};

// IDM acceleration; caller clamps the result to the action bounds.
double idm_accel(const IdmParams& params, double v, double gap, double dv,
                 double v_desired);

// Speed at which idm_accel(.., gap, dv=0, v_desired) vanishes; bisection on
// (0, v_desired). Requires gap > s0.
double idm_equilibrium_speed(const IdmParams& params, double gap,
                             double v_desired);

// Gap at which a follower at speed v with zero closing speed is stationary.
double idm_equilibrium_gap(const IdmParams& params, double v,
                           double v_desired);

IdmParams sample_idm_params(RngStream& rng, const IdmRanges& ranges);

// One closed-loop simulation run. Snapshots and the controls applied to them
// are index-aligned: controls[t] maps snapshots[t] to the next state.
struct Run {
  SpeedLimitProfile profile;
  std::vector<IdmParams> params;  // per vehicle; collection-time only
  std::vector<Snapshot> snapshots;
  std::vector<std::vector<double>> controls;
};

struct Dataset {
  std::vector<Run> runs;
  RingGeometry geometry;
  double dt = 0.1;
  int n_vehicles = 0;
  int steps = 0;
  std::uint64_t seed = 0;
};

struct CollectConfig {
  RingGeometry geometry;
  ActionBounds bounds;
  IdmRanges ranges;
  int n_vehicles = 5;
  int runs = 200;
  int steps = 2200;
  double dt = 0.1;
  int limit_segments_min = 1;
  int limit_segments_max = 3;
  double limit_lo = 11.5;
  double limit_hi = 13.5;
  double min_segment_arc = 0.5;     // radians between segment starts
  double init_jitter = 6.0;         // meters around equal spacing
  double init_gap_margin = 5.0;     // initial gaps > max s0 + margin
  int max_place_retries = 10000;
  bool parallel = true;
};

// Randomized piecewise-constant speed limits along the ring.
SpeedLimitProfile sample_limit_profile(RngStream& rng,
                                       const CollectConfig& config);

// Simulates IDM closed loop for every run; runs execute independently, so
// the kernel parallelizes over runs with one rng stream per run. Results do
// not depend on thread count.
Dataset collect_runs(const CollectConfig& config, std::uint64_t seed);

}  // namespace ringflow
