#include "ringflow/ring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ringflow {

std::size_t Snapshot::observed_count() const {
  std::size_t n = 0;
  for (auto flag : observed) n += flag ? 1 : 0;
  return n;
}

double wrap_angle(double theta) {
  double w = std::fmod(theta, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;  // fmod can land exactly on 2pi after the add
  return w;
}

void validate_snapshot(const Snapshot& snapshot) {
  const std::size_t n = snapshot.size();
  if (n == 0) throw std::invalid_argument("snapshot: no vehicles");
  if (snapshot.observed.size() != n)
    throw std::invalid_argument("snapshot: observed mask size mismatch");
  for (const auto& s : snapshot.vehicles) {
    if (!(s.theta >= 0.0 && s.theta < kTwoPi))
      throw std::invalid_argument("snapshot: theta outside [0, 2pi)");
    if (!std::isfinite(s.v))
      throw std::invalid_argument("snapshot: non-finite speed");
  }
  std::vector<double> thetas;
  thetas.reserve(n);
  for (const auto& s : snapshot.vehicles) thetas.push_back(s.theta);
  std::sort(thetas.begin(), thetas.end());
  for (std::size_t i = 1; i < n; ++i)
    if (thetas[i] == thetas[i - 1])
      throw std::invalid_argument("snapshot: duplicate thetas");
}

void validate_profile(const SpeedLimitProfile& profile) {
  if (profile.segments.empty())
    throw std::invalid_argument("speed limit profile: no segments");
  double prev = -1.0;
  for (const auto& seg : profile.segments) {
    if (!(seg.start_angle >= 0.0 && seg.start_angle < kTwoPi))
      throw std::invalid_argument(
          "speed limit profile: segment start outside [0, 2pi)");
    if (seg.start_angle <= prev)
      throw std::invalid_argument(
          "speed limit profile: starts not strictly increasing");
    if (!(seg.limit > 0.0))
      throw std::invalid_argument("speed limit profile: non-positive limit");
    prev = seg.start_angle;
  }
}

std::vector<std::size_t> order_by_theta(const Snapshot& snapshot) {
  std::vector<std::size_t> order(snapshot.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return snapshot.vehicles[a].theta < snapshot.vehicles[b].theta;
  });
  return order;
}

std::vector<double> angular_gaps(const Snapshot& snapshot,
                                 const RingGeometry& geometry) {
  const std::size_t n = snapshot.size();
  if (n < 2)
    throw std::invalid_argument("angular_gaps: need at least 2 vehicles");
  validate_snapshot(snapshot);

  const auto order = order_by_theta(snapshot);
  std::vector<double> gaps(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    const std::size_t j = order[(k + 1) % n];
    double dtheta = snapshot.vehicles[j].theta - snapshot.vehicles[i].theta;
    if (k + 1 == n) dtheta += kTwoPi;  // wrap from the last back to the first
    gaps[i] = geometry.radius * dtheta;
  }
  return gaps;
}

std::size_t preceding_index(const Snapshot& snapshot, std::size_t index) {
  const std::size_t n = snapshot.size();
  if (index >= n) throw std::invalid_argument("preceding_index: out of range");
  if (n < 2)
    throw std::invalid_argument("preceding_index: no preceding vehicle");
  const double theta = snapshot.vehicles[index].theta;
  // Smallest theta strictly greater than ours; wraps to the global minimum.
  std::size_t best = n;
  std::size_t min_idx = index == 0 ? 1 : 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == index) continue;
    const double tj = snapshot.vehicles[j].theta;
    if (snapshot.vehicles[min_idx].theta > tj || min_idx == index) min_idx = j;
    if (tj > theta && (best == n || tj < snapshot.vehicles[best].theta))
      best = j;
  }
  return best == n ? min_idx : best;
}

Snapshot step_dynamics(const Snapshot& snapshot,
                       const std::vector<double>& controls, double dt,
                       const RingGeometry& geometry,
                       const ActionBounds& bounds) {
  if (controls.size() != snapshot.size())
    throw std::invalid_argument("step_dynamics: control count mismatch");
  if (!(dt > 0.0)) throw std::invalid_argument("step_dynamics: dt <= 0");
  for (double u : controls) {
    if (!(u >= bounds.a_min && u <= bounds.a_max))
      throw std::invalid_argument(
          "step_dynamics: control outside [a_min, a_max]; clamp before "
          "stepping");
  }
  Snapshot next = snapshot;
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    double v = snapshot.vehicles[i].v + controls[i] * dt;
    v = std::clamp(v, bounds.v_min, bounds.v_max);
    next.vehicles[i].v = v;
    next.vehicles[i].theta =
        wrap_angle(snapshot.vehicles[i].theta + v * dt / geometry.radius);
  }
  return next;
}

double speed_limit_at(const SpeedLimitProfile& profile, double theta) {
  const auto& segs = profile.segments;
  // Last segment whose start is <= theta; anything before the first start
  // wraps onto the final segment.
  std::size_t idx = segs.size() - 1;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].start_angle <= theta)
      idx = i;
    else
      break;
  }
  if (segs[0].start_angle > theta) idx = segs.size() - 1;
  return segs[idx].limit;
}

Observation observe(const Snapshot& snapshot, std::size_t index,
                    const RingGeometry& geometry,
                    const SpeedLimitProfile& profile) {
  validate_snapshot(snapshot);
  if (index >= snapshot.size())
    throw std::invalid_argument("observe: index out of range");
  if (snapshot.size() < 2)
    throw std::invalid_argument("observe: no preceding vehicle");

  const std::size_t pre = preceding_index(snapshot, index);
  const auto& ego = snapshot.vehicles[index];
  const auto& ahead = snapshot.vehicles[pre];
  double dtheta = ahead.theta - ego.theta;
  if (dtheta <= 0.0) dtheta += kTwoPi;

  Observation obs;
  obs.v = ego.v;
  obs.v_limit = speed_limit_at(profile, ego.theta);
  obs.d_pre = geometry.radius * dtheta;
  obs.dv = ego.v - ahead.v;  // positive when closing in
  return obs;
}

}  // namespace ringflow
