#include "ringflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ringflow/io_util.hpp"
#include "ringflow/parallel.hpp"

namespace ringflow {

namespace {

struct Pooled {
  double sum = 0.0, sumsq = 0.0;
  long long n = 0;
  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  void merge(const Pooled& other) {
    sum += other.sum;
    sumsq += other.sumsq;
    n += other.n;
  }
  double mean() const { return n > 0 ? sum / static_cast<double>(n) : 0.0; }
  double std_pop() const {
    if (n == 0) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sumsq / static_cast<double>(n) - m * m));
  }
};

std::vector<int> sample_hidden(RngStream& rng, int n, int k) {
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.uniform_index(
                          static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)],
              pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

std::vector<AlignmentRow> macro_alignment(const PolicyModel& policy,
                                          const GeneratorModel& generator,
                                          const Dataset& dataset,
                                          const EvalConfig& eval,
                                          const CompletionOptions& completion,
                                          std::uint64_t seed) {
  if (dataset.runs.empty())
    throw std::invalid_argument("macro_alignment: empty dataset");
  if (eval.horizon + 1 > dataset.steps)
    throw std::invalid_argument("macro_alignment: runs shorter than horizon");

  std::vector<AlignmentRow> rows;
  const RingGeometry& geom = dataset.geometry;
  const int n = dataset.n_vehicles;

  for (std::size_t ki = 0; ki < eval.ks.size(); ++ki) {
    const int k = eval.ks[ki];
    if (k < 0 || k > n)
      throw std::invalid_argument("macro_alignment: K outside [0, N]");
    std::vector<Pooled> speed_parts(eval.n_rollouts);
    std::vector<Pooled> gap_parts(eval.n_rollouts);
    const std::uint64_t k_seed =
        stream_seed(seed, static_cast<std::uint64_t>(1000 + k));

    par::for_each_index(
        static_cast<std::size_t>(eval.n_rollouts), eval.parallel,
        [&](std::size_t r) {
          RngStream rng(stream_seed(k_seed, static_cast<std::uint64_t>(r)));
          const int run_index =
              static_cast<int>(rng.uniform_index(dataset.runs.size()));
          const Run& run = dataset.runs[run_index];
          const int t0 = static_cast<int>(rng.uniform_index(
              static_cast<std::uint64_t>(dataset.steps - eval.horizon)));
          const auto hidden = sample_hidden(rng, n, k);

          std::vector<std::uint8_t> is_hidden(n, 0);
          for (int h : hidden) is_hidden[static_cast<std::size_t>(h)] = 1;
          std::vector<int> observed_ids;
          for (int i = 0; i < n; ++i)
            if (!is_hidden[static_cast<std::size_t>(i)])
              observed_ids.push_back(i);

          Snapshot partial;
          for (int id : observed_ids) {
            partial.vehicles.push_back(run.snapshots[t0].vehicles[id]);
            partial.observed.push_back(1);
          }
          Snapshot state;
          if (partial.size() == static_cast<std::size_t>(n)) {
            state = partial;
          } else {
            state = complete_scene(generator, partial, geom, n, completion,
                                   rng)
                        .snapshot;
          }
          const std::size_t m = partial.size();
          const int n_policy = static_cast<int>(state.size() - m);

          for (int t = 0; t < eval.horizon; ++t) {
            std::vector<double> controls(state.size(), 0.0);
            for (int j = 0; j < n_policy; ++j) {
              const std::size_t idx = m + static_cast<std::size_t>(j);
              const Observation obs = observe(state, idx, geom, run.profile);
              controls[idx] = policy_act(policy, obs, rng).action;
            }
            Snapshot next =
                step_dynamics(state, controls, dataset.dt, geom, policy.bounds);
            for (std::size_t i = 0; i < m; ++i)
              next.vehicles[i] =
                  run.snapshots[t0 + t + 1].vehicles[observed_ids[i]];
            for (const auto& s : next.vehicles) speed_parts[r].add(s.v);
            for (double g : angular_gaps(next, geom)) gap_parts[r].add(g);
            state = std::move(next);
          }
        });

    Pooled speeds, gaps;
    for (int r = 0; r < eval.n_rollouts; ++r) {
      speeds.merge(speed_parts[static_cast<std::size_t>(r)]);
      gaps.merge(gap_parts[static_cast<std::size_t>(r)]);
    }
    rows.push_back({k, speeds.mean(), speeds.std_pop(), gaps.mean(),
                    gaps.std_pop(), eval.n_rollouts});
  }
  return rows;
}

AlignmentRow ground_truth_row(const Dataset& dataset) {
  if (dataset.runs.empty())
    throw std::invalid_argument("ground_truth_row: empty dataset");
  Pooled speeds, gaps;
  for (const auto& run : dataset.runs) {
    for (const auto& snap : run.snapshots) {
      for (const auto& s : snap.vehicles) speeds.add(s.v);
      for (double g : angular_gaps(snap, dataset.geometry)) gaps.add(g);
    }
  }
  return {-1, speeds.mean(), speeds.std_pop(), gaps.mean(), gaps.std_pop(),
          static_cast<int>(dataset.runs.size())};
}

double LeaderProfile::speed_at(double t) const {
  if (t <= ramp_start) return v_start;
  if (t >= ramp_start + ramp_duration) return v_end;
  const double frac = (t - ramp_start) / ramp_duration;
  return v_start + frac * (v_end - v_start);
}

ScenarioSeries leader_follower(const ScenarioSpec& spec,
                               const PolicyModel* policy, double dt,
                               const ActionBounds& bounds, RngStream& rng) {
  if (!(spec.initial_gap > 0.0))
    throw std::invalid_argument("leader_follower: initial gap <= 0");
  if (spec.controller == FollowerController::kPolicy && policy == nullptr)
    throw std::invalid_argument("leader_follower: policy missing");

  const int steps = static_cast<int>(std::llround(spec.duration / dt));
  ScenarioSeries series;
  double v_leader = spec.leader.speed_at(0.0);
  double v_follower = v_leader;
  double gap = spec.initial_gap;
  series.points.push_back({0.0, v_leader, v_follower, gap});

  for (int t = 0; t < steps; ++t) {
    Observation obs;
    obs.v = v_follower;
    obs.v_limit = spec.v_limit;
    obs.d_pre = gap;
    obs.dv = v_follower - v_leader;

    double u = 0.0;
    if (spec.controller == FollowerController::kIdm) {
      const double v_des = std::min(spec.idm.v0, spec.v_limit);
      u = idm_accel(spec.idm, obs.v, obs.d_pre, obs.dv, v_des);
    } else if (spec.deterministic_policy) {
      u = policy_mean_action(*policy, obs);
    } else {
      u = policy_act(*policy, obs, rng).action;
    }
    u = std::clamp(u, bounds.a_min, bounds.a_max);

    const double time_next = (t + 1) * dt;
    const double v_leader_next = spec.leader.speed_at(time_next);
    const double v_follower_next =
        std::clamp(v_follower + u * dt, bounds.v_min, bounds.v_max);
    gap += (v_leader_next - v_follower_next) * dt;
    v_leader = v_leader_next;
    v_follower = v_follower_next;
    series.points.push_back({time_next, v_leader, v_follower, gap});
    if (gap <= 0.0) {
      series.collision = true;
      break;
    }
  }
  return series;
}

ScenarioSeries leader_follower_mean(const ScenarioSpec& spec,
                                    const PolicyModel* policy, double dt,
                                    const ActionBounds& bounds, int trials,
                                    std::uint64_t seed) {
  if (trials < 1)
    throw std::invalid_argument("leader_follower_mean: trials < 1");
  std::vector<ScenarioSeries> all(trials);
  for (int i = 0; i < trials; ++i) {
    RngStream rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
    all[static_cast<std::size_t>(i)] =
        leader_follower(spec, policy, dt, bounds, rng);
  }
  ScenarioSeries mean;
  std::size_t max_len = 0;
  for (const auto& s : all) {
    mean.collision = mean.collision || s.collision;
    max_len = std::max(max_len, s.points.size());
  }
  for (std::size_t p = 0; p < max_len; ++p) {
    ScenarioPoint acc;
    int count = 0;
    for (const auto& s : all) {
      if (p >= s.points.size()) continue;
      acc.t = s.points[p].t;
      acc.leader_v = s.points[p].leader_v;
      acc.follower_v += s.points[p].follower_v;
      acc.gap += s.points[p].gap;
      ++count;
    }
    acc.follower_v /= count;
    acc.gap /= count;
    mean.points.push_back(acc);
  }
  return mean;
}

void export_alignment(const std::vector<AlignmentRow>& rows,
                      const std::string& path,
                      const std::vector<std::string>& metadata) {
  std::ostringstream out;
  out << "# ringflow alignment table v1\n";
  for (const auto& m : metadata) out << "# " << m << "\n";
  out << "# columns: k mean_speed std_speed mean_gap std_gap rollouts\n";
  for (const auto& r : rows) {
    out << r.k << '\t' << format_double(r.mean_speed) << '\t'
        << format_double(r.std_speed) << '\t' << format_double(r.mean_gap)
        << '\t' << format_double(r.std_gap) << '\t' << r.rollouts << '\n';
  }
  atomic_write_file(path, out.str());
}

std::vector<AlignmentRow> parse_alignment(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<AlignmentRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    AlignmentRow r;
    if (!(ls >> r.k >> r.mean_speed >> r.std_speed >> r.mean_gap >>
          r.std_gap >> r.rollouts))
      throw std::runtime_error("malformed alignment row in " + path);
    rows.push_back(r);
  }
  return rows;
}

void export_series(const ScenarioSeries& series, const std::string& path,
                   const std::vector<std::string>& metadata) {
  std::ostringstream out;
  out << "# ringflow scenario series v1\n";
  for (const auto& m : metadata) out << "# " << m << "\n";
  out << "# collision=" << (series.collision ? 1 : 0) << "\n";
  out << "# columns: t leader_v follower_v gap\n";
  for (const auto& p : series.points) {
    out << format_double(p.t) << '\t' << format_double(p.leader_v) << '\t'
        << format_double(p.follower_v) << '\t' << format_double(p.gap)
        << '\n';
  }
  atomic_write_file(path, out.str());
}

ScenarioSeries parse_series(const std::string& path) {
  std::istringstream in(read_text_file(path));
  ScenarioSeries series;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# collision=", 0) == 0) {
      series.collision = line.back() == '1';
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ScenarioPoint p;
    if (!(ls >> p.t >> p.leader_v >> p.follower_v >> p.gap))
      throw std::runtime_error("malformed series row in " + path);
    series.points.push_back(p);
  }
  return series;
}

}  // namespace ringflow
