#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ringflow/generator.hpp"
#include "ringflow/idm.hpp"
#include "ringflow/policy.hpp"

namespace ringflow {

// Pooled speed/gap statistics for one hidden-count setting. k = -1 labels
// the ground-truth dataset row.
struct AlignmentRow {
  int k = 0;
  double mean_speed = 0.0;
  double std_speed = 0.0;
  double mean_gap = 0.0;
  double std_gap = 0.0;
  int rollouts = 0;
};

struct EvalConfig {
  std::vector<int> ks{1, 2, 3, 4};
  int n_rollouts = 50;
  int horizon = 1500;
  bool parallel = true;
};

// Mixed replay/policy closed-loop statistics: frames are drawn uniformly,
// K vehicles hidden uniformly, scenes completed by the generator, and every
// post-step speed and gap pooled over steps, vehicles and rollouts.
std::vector<AlignmentRow> macro_alignment(const PolicyModel& policy,
                                          const GeneratorModel& generator,
                                          const Dataset& dataset,
                                          const EvalConfig& eval,
                                          const CompletionOptions& completion,
                                          std::uint64_t seed);

// Pooled statistics of the raw dataset.
AlignmentRow ground_truth_row(const Dataset& dataset);

// Straightened two-vehicle scenario: the leader tracks a piecewise-linear
// speed profile, the follower is driven by IDM or the learned policy.
struct LeaderProfile {
  double v_start = 11.0;
  double v_end = 13.0;
  double ramp_start = 10.0;     // seconds
  double ramp_duration = 10.0;  // seconds
  double speed_at(double t) const;
};

enum class FollowerController { kIdm, kPolicy };

struct ScenarioSpec {
  LeaderProfile leader;
  double initial_gap = 126.0;
  double duration = 60.0;
  double v_limit = 13.5;
  FollowerController controller = FollowerController::kIdm;
  IdmParams idm;
  bool deterministic_policy = false;  // mean action instead of sampling
};

struct ScenarioPoint {
  double t = 0.0;
  double leader_v = 0.0;
  double follower_v = 0.0;
  double gap = 0.0;
};

struct ScenarioSeries {
  std::vector<ScenarioPoint> points;
  bool collision = false;
};

ScenarioSeries leader_follower(const ScenarioSpec& spec,
                               const PolicyModel* policy, double dt,
                               const ActionBounds& bounds, RngStream& rng);

// Pointwise mean of several stochastic trials of the same scspec.
ScenarioSeries leader_follower_mean(const ScenarioSpec& spec,
                                    const PolicyModel* policy, double dt,
                                    const ActionBounds& bounds, int trials,
                                    std::uint64_t seed);

// Tabular text exports with a documented header; writing is atomic and
// deterministic, and each table parses back exactly.
void export_alignment(const std::vector<AlignmentRow>& rows,
                      const std::string& path,
                      const std::vector<std::string>& metadata = {});
std::vector<AlignmentRow> parse_alignment(const std::string& path);

void export_series(const ScenarioSeries& series, const std::string& path,
                   const std::vector<std::string>& metadata = {});
ScenarioSeries parse_series(const std::string& path);

}  // namespace ringflow
