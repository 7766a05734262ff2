#include "ringflow/macro_stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ringflow {

void validate_descriptor(const MacroDescriptor& d) {
  if (!(d.d_min < d.d_bar && d.d_bar < d.d_max))
    throw std::invalid_argument(
        "descriptor: requires d_min < d_bar < d_max");
  if (!(d.v_min < d.v_bar_gt && d.v_bar_gt < d.v_max))
    throw std::invalid_argument(
        "descriptor: requires v_min < v_bar_gt < v_max");
}

void validate_weights(const PenaltyWeights& w) {
  if (w.lambda_v < 0.0 || w.lambda_d < 0.0)
    throw std::invalid_argument("penalty weights must be non-negative");
}

MacroDescriptor compute_descriptor(const Dataset& dataset,
                                   const MacroDescriptor& envelope) {
  if (dataset.runs.empty())
    throw std::invalid_argument("compute_descriptor: empty dataset");
  double speed_sum = 0.0, gap_sum = 0.0;
  long long speed_n = 0, gap_n = 0;
  for (const auto& run : dataset.runs) {
    for (const auto& snap : run.snapshots) {
      for (const auto& s : snap.vehicles) {
        speed_sum += s.v;
        ++speed_n;
      }
      for (double g : angular_gaps(snap, dataset.geometry)) {
        gap_sum += g;
        ++gap_n;
      }
    }
  }
  if (speed_n == 0)
    throw std::invalid_argument("compute_descriptor: empty dataset");
  MacroDescriptor out = envelope;
  out.v_bar_gt = speed_sum / static_cast<double>(speed_n);
  out.d_bar = gap_sum / static_cast<double>(gap_n);
  validate_descriptor(out);
  return out;
}

double l_speed(std::span<const double> speeds, double v_bar_gt) {
  if (speeds.empty()) throw std::invalid_argument("l_speed: empty speeds");
  if (!(v_bar_gt > 0.0)) throw std::invalid_argument("l_speed: v_bar_gt <= 0");
  double mean = 0.0;
  for (double v : speeds) mean += v;
  mean /= static_cast<double>(speeds.size());
  const double r = mean / v_bar_gt - 1.0;
  return r * r;
}

void l_speed_grad(std::span<const double> speeds, double v_bar_gt,
                  std::span<double> grad_out) {
  if (grad_out.size() != speeds.size())
    throw std::invalid_argument("l_speed_grad: size mismatch");
  double mean = 0.0;
  for (double v : speeds) mean += v;
  const double n = static_cast<double>(speeds.size());
  mean /= n;
  const double g = 2.0 * (mean / v_bar_gt - 1.0) / (v_bar_gt * n);
  for (auto& x : grad_out) x = g;
}

SpacingPenalty l_dist(std::span<const double> gaps,
                      const MacroDescriptor& d) {
  if (gaps.empty()) throw std::invalid_argument("l_dist: empty gap set");
  const double n = static_cast<double>(gaps.size());

  double mean = 0.0;
  for (double g : gaps) mean += g;
  mean /= n;

  SpacingPenalty p;
  const double rm = mean / d.d_bar - 1.0;
  p.mean = rm * rm;

  double sq_dev = 0.0;
  for (double g : gaps) {
    const double under = std::max(0.0, d.d_min - g) / d.d_min;
    const double over = std::max(0.0, g - d.d_max) / d.d_max;
    p.min += under * under / n;
    p.max += over * over / n;
    sq_dev += (g - mean) * (g - mean);
  }
  p.var = std::sqrt(sq_dev / n) / d.d_bar;  // population std
  return p;
}

void l_dist_grad(std::span<const double> gaps, const MacroDescriptor& d,
                 std::span<double> grad_out) {
  if (gaps.empty()) throw std::invalid_argument("l_dist_grad: empty gap set");
  if (grad_out.size() != gaps.size())
    throw std::invalid_argument("l_dist_grad: size mismatch");
  const double n = static_cast<double>(gaps.size());

  double mean = 0.0;
  for (double g : gaps) mean += g;
  mean /= n;

  double sq_dev = 0.0;
  for (double g : gaps) sq_dev += (g - mean) * (g - mean);
  const double std_pop = std::sqrt(sq_dev / n);

  const double dmean_common = 2.0 * (mean / d.d_bar - 1.0) / (d.d_bar * n);
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    double g = dmean_common;
    const double under = std::max(0.0, d.d_min - gaps[i]);
    const double over = std::max(0.0, gaps[i] - d.d_max);
    g += -2.0 * under / (d.d_min * d.d_min * n);
    g += 2.0 * over / (d.d_max * d.d_max * n);
    if (std_pop > 0.0)
      g += (gaps[i] - mean) / (n * std_pop * d.d_bar);
    grad_out[i] = g;
  }
}

double l_rec(std::span<const VehicleState> predicted,
             std::span<const VehicleState> reference) {
  if (predicted.size() != reference.size())
    throw std::invalid_argument("l_rec: cardinality mismatch");
  if (predicted.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double dt = predicted[i].theta - reference[i].theta;
    const double dv = predicted[i].v - reference[i].v;
    sum += dt * dt + dv * dv;
  }
  return sum / static_cast<double>(predicted.size());
}

namespace {

double dist_total(const Snapshot& snapshot,
                  std::span<const std::size_t> affected_gaps,
                  const MacroDescriptor& descriptor,
                  const RingGeometry& geometry) {
  const auto gaps = angular_gaps(snapshot, geometry);
  std::vector<double> selected;
  if (affected_gaps.empty()) {
    selected = gaps;
  } else {
    selected.reserve(affected_gaps.size());
    for (std::size_t idx : affected_gaps) {
      if (idx >= gaps.size())
        throw std::invalid_argument("generator_loss: gap index out of range");
      selected.push_back(gaps[idx]);
    }
  }
  return l_dist(selected, descriptor).total();
}

}  // namespace

double generator_loss(const Snapshot& completed,
                      std::span<const std::size_t> affected_gaps,
                      const MacroDescriptor& descriptor,
                      const PenaltyWeights& weights,
                      const RingGeometry& geometry) {
  std::vector<double> speeds;
  speeds.reserve(completed.size());
  for (const auto& s : completed.vehicles) speeds.push_back(s.v);
  const double speed_term = l_speed(speeds, descriptor.v_bar_gt);
  const double dist_term =
      dist_total(completed, affected_gaps, descriptor, geometry);
  return weights.lambda_v * speed_term + weights.lambda_d * dist_term;
}

double macro_reward(const Snapshot& snapshot,
                    const MacroDescriptor& descriptor,
                    const PenaltyWeights& weights,
                    const RingGeometry& geometry) {
  std::vector<double> speeds;
  speeds.reserve(snapshot.size());
  for (const auto& s : snapshot.vehicles) speeds.push_back(s.v);
  const double speed_term = l_speed(speeds, descriptor.v_bar_gt);
  const double dist_term = dist_total(snapshot, {}, descriptor, geometry);
  return 1.0 /
         (1.0 + weights.lambda_v * speed_term + weights.lambda_d * dist_term);
}

}  // namespace ringflow
