#include "ringflow/idm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ringflow/parallel.hpp"

namespace ringflow {

double idm_accel(const IdmParams& params, double v, double gap, double dv,
                 double v_desired) {
  if (!(gap > 0.0)) throw std::invalid_argument("idm_accel: gap <= 0");
  if (!(v >= 0.0)) throw std::invalid_argument("idm_accel: v < 0");
  const double interaction =
      v * params.T + v * dv / (2.0 * std::sqrt(params.a_cap * params.b));
  const double s_star = params.s0 + std::max(0.0, interaction);
  const double free_term = std::pow(v / v_desired, params.delta);
  const double gap_term = (s_star / gap) * (s_star / gap);
  return params.a_cap * (1.0 - free_term - gap_term);
}

double idm_equilibrium_speed(const IdmParams& params, double gap,
                             double v_desired) {
  if (!(gap > params.s0))
    throw std::invalid_argument("idm_equilibrium_speed: gap <= s0");
  auto residual = [&](double v) {
    const double s_star = params.s0 + v * params.T;
    return 1.0 - std::pow(v / v_desired, params.delta) -
           (s_star / gap) * (s_star / gap);
  };
  double lo = 0.0, hi = v_desired;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double idm_equilibrium_gap(const IdmParams& params, double v,
                           double v_desired) {
  const double s_star = params.s0 + v * params.T;
  const double denom = 1.0 - std::pow(v / v_desired, params.delta);
  if (!(denom > 0.0))
    throw std::invalid_argument(
        "idm_equilibrium_gap: v at or above desired speed");
  return s_star / std::sqrt(denom);
}

IdmParams sample_idm_params(RngStream& rng, const IdmRanges& ranges) {
  auto draw = [&](const ParamRange& r, const char* name) {
    if (r.lo > r.hi)
      throw std::invalid_argument(std::string("idm range inverted: ") + name);
    return rng.uniform(r.lo, r.hi);
  };
  IdmParams p;
  p.a_cap = draw(ranges.a_cap, "a_cap");
  p.b = draw(ranges.b, "b");
  p.v0 = draw(ranges.v0, "v0");
  p.s0 = draw(ranges.s0, "s0");
  p.T = draw(ranges.T, "T");
  p.delta = ranges.delta;
  return p;
}

SpeedLimitProfile sample_limit_profile(RngStream& rng,
                                       const CollectConfig& config) {
  const int lo = config.limit_segments_min;
  const int hi = config.limit_segments_max;
  const int n_seg = lo + static_cast<int>(rng.uniform_index(
                             static_cast<std::uint64_t>(hi - lo + 1)));
  SpeedLimitProfile profile;
  if (n_seg <= 1) {
    profile.segments.push_back(
        {0.0, rng.uniform(config.limit_lo, config.limit_hi)});
    return profile;
  }
  // Starts separated by at least min_segment_arc so every zone has extent.
  std::vector<double> starts(n_seg);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (auto& s : starts) s = rng.uniform(0.0, kTwoPi);
    std::sort(starts.begin(), starts.end());
    bool ok = true;
    for (int i = 0; i + 1 < n_seg; ++i)
      ok = ok && (starts[i + 1] - starts[i] >= config.min_segment_arc);
    ok = ok && (starts[0] + kTwoPi - starts[n_seg - 1] >=
                config.min_segment_arc);
    if (ok) break;
    if (attempt == 999)
      throw std::runtime_error("sample_limit_profile: placement failed");
  }
  for (double s : starts)
    profile.segments.push_back(
        {s, rng.uniform(config.limit_lo, config.limit_hi)});
  return profile;
}

namespace {

Snapshot initial_snapshot(RngStream& rng, const CollectConfig& config,
                          const std::vector<IdmParams>& params) {
  const int n = config.n_vehicles;
  double max_s0 = 0.0;
  for (const auto& p : params) max_s0 = std::max(max_s0, p.s0);
  const double min_gap = max_s0 + config.init_gap_margin;

  Snapshot snap;
  snap.vehicles.resize(n);
  snap.observed.assign(n, 1);
  const RingGeometry& geom = config.geometry;
  // Equal spacing with bounded jitter, randomly rotated. Speeds stay fully
  // randomized; the heterogeneous desired speeds then drive the scene away
  // from this configuration toward platoons.
  const double slot = kTwoPi / n;
  const double jitter_arc = config.init_jitter / geom.radius;
  for (int attempt = 0; attempt < config.max_place_retries; ++attempt) {
    const double rotation = rng.uniform(0.0, kTwoPi);
    for (int i = 0; i < n; ++i) {
      auto& s = snap.vehicles[static_cast<std::size_t>(i)];
      s.theta = wrap_angle(rotation + i * slot +
                           rng.uniform(-jitter_arc, jitter_arc));
      s.v = rng.uniform(config.bounds.v_min, config.bounds.v_max);
    }
    bool ok = true;
    try {
      const auto gaps = angular_gaps(snap, geom);
      for (double g : gaps) ok = ok && g > min_gap;
    } catch (const std::invalid_argument&) {
      ok = false;  // duplicate thetas; redraw
    }
    if (ok) return snap;
  }
  throw std::runtime_error(
      "collect_runs: could not place vehicles without overlap");
}

Run simulate_run(const CollectConfig& config, RngStream rng) {
  Run run;
  run.params.reserve(config.n_vehicles);
  for (int i = 0; i < config.n_vehicles; ++i)
    run.params.push_back(sample_idm_params(rng, config.ranges));
  run.profile = sample_limit_profile(rng, config);
  Snapshot state = initial_snapshot(rng, config, run.params);

  const RingGeometry& geom = config.geometry;
  const ActionBounds& bounds = config.bounds;
  run.snapshots.reserve(config.steps);
  run.controls.reserve(config.steps);
  for (int t = 0; t < config.steps; ++t) {
    std::vector<double> controls(config.n_vehicles);
    for (int i = 0; i < config.n_vehicles; ++i) {
      const Observation obs = observe(state, i, geom, run.profile);
      const double v_des = std::min(run.params[i].v0, obs.v_limit);
      const double raw =
          idm_accel(run.params[i], obs.v, obs.d_pre, obs.dv, v_des);
      controls[i] = std::clamp(raw, bounds.a_min, bounds.a_max);
    }
    run.snapshots.push_back(state);
    run.controls.push_back(controls);
    state = step_dynamics(state, controls, config.dt, geom, bounds);
    // Allocation-free safety scan; duplicate thetas mean a closed gap.
    for (std::size_t i = 0; i < state.size(); ++i)
      for (std::size_t j = i + 1; j < state.size(); ++j)
        if (state.vehicles[i].theta == state.vehicles[j].theta)
          throw std::runtime_error("collect_runs: gap collapsed to zero");
  }
  return run;
}

}  // namespace

Dataset collect_runs(const CollectConfig& config, std::uint64_t seed) {
  if (config.n_vehicles < 2)
    throw std::invalid_argument("collect_runs: need at least 2 vehicles");
  if (config.runs < 1 || config.steps < 1)
    throw std::invalid_argument("collect_runs: runs and steps must be >= 1");

  Dataset dataset;
  dataset.geometry = config.geometry;
  dataset.dt = config.dt;
  dataset.n_vehicles = config.n_vehicles;
  dataset.steps = config.steps;
  dataset.seed = seed;
  dataset.runs.resize(config.runs);

  par::for_each_index(
      static_cast<std::size_t>(config.runs), config.parallel,
      [&](std::size_t r) {
        dataset.runs[r] = simulate_run(
            config, RngStream(stream_seed(seed, static_cast<std::uint64_t>(r))));
      });
  return dataset;
}

}  // namespace ringflow
