#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ringflow {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Circular single-lane road.
struct RingGeometry {
  double radius = 100.0;  // meters
  double circumference() const { return kTwoPi * radius; }
};

struct VehicleState {
  double theta = 0.0;  // angular position, [0, 2pi)
  double v = 0.0;      // speed, m/s
};

// Joint microscopic state. `observed[i]` marks instrumented vehicles.
struct Snapshot {
  std::vector<VehicleState> vehicles;
  std::vector<std::uint8_t> observed;

  std::size_t size() const { return vehicles.size(); }
  std::size_t observed_count() const;
};

// Piecewise-constant speed limit along the ring. Segments are left-closed,
// right-open arcs in ascending start order; the arc before the first start
// belongs to the last segment (wrap-around).
struct SpeedLimitSegment {
  double start_angle = 0.0;  // radians, [0, 2pi)
  double limit = 0.0;        // m/s
};
struct SpeedLimitProfile {
  std::vector<SpeedLimitSegment> segments;
};

// Local observation of one vehicle: [ego speed, local limit, headway to the
// preceding vehicle, relative speed ego - preceding].
struct Observation {
  double v = 0.0;
  double v_limit = 0.0;
  double d_pre = 0.0;
  double dv = 0.0;
};

struct ActionBounds {
  double a_min = -1.1;
  double a_max = 0.5;
  double v_min = 10.5;
  double v_max = 14.0;
};

// Maps any angle into [0, 2pi).
double wrap_angle(double theta);

// Throws std::invalid_argument when the snapshot breaks its invariants
// (empty, theta out of range, duplicate thetas, mask size mismatch).
void validate_snapshot(const Snapshot& snapshot);

// Throws std::invalid_argument on empty profile or starts that are not
// strictly increasing within [0, 2pi).
void validate_profile(const SpeedLimitProfile& profile);

// Arc length from each vehicle to its successor in driving direction
// (ascending theta, wrapping). Entry i belongs to input vehicle i; the
// gaps always sum to the circumference.
std::vector<double> angular_gaps(const Snapshot& snapshot,
                                 const RingGeometry& geometry);

// Index of the vehicle ahead of `index` in driving direction.
std::size_t preceding_index(const Snapshot& snapshot, std::size_t index);

// Vehicle indices in ascending theta order.
std::vector<std::size_t> order_by_theta(const Snapshot& snapshot);

// Semi-implicit step: speeds update and clamp first, then positions move by
// the new speed. Controls must already lie within [a_min, a_max].
Snapshot step_dynamics(const Snapshot& snapshot,
                       const std::vector<double>& controls, double dt,
                       const RingGeometry& geometry,
                       const ActionBounds& bounds);

double speed_limit_at(const SpeedLimitProfile& profile, double theta);

Observation observe(const Snapshot& snapshot, std::size_t index,
                    const RingGeometry& geometry,
                    const SpeedLimitProfile& profile);

}  // namespace ringflow
