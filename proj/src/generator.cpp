#include "ringflow/generator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "ringflow/parallel.hpp"

namespace ringflow {

int generator_context_dim(int n_vehicles) { return n_vehicles * 3 + 6 + 2; }

GeneratorModel make_generator_model(const MacroDescriptor& descriptor,
                                    int n_vehicles, int k_max, int hidden,
                                    RngStream& rng) {
  validate_descriptor(descriptor);
  if (n_vehicles < 1)
    throw std::invalid_argument("make_generator_model: n_vehicles < 1");
  if (k_max < 0 || k_max > n_vehicles)
    throw std::invalid_argument("make_generator_model: k_max outside [0, N]");
  GeneratorModel model;
  model.descriptor = descriptor;
  model.n_vehicles = n_vehicles;
  model.k_max = k_max;
  model.trunk = make_dense_net(
      {generator_context_dim(n_vehicles), hidden, hidden, 2}, rng);
  model.log_std.assign(2, -0.5);
  return model;
}

std::vector<Tensor*> generator_params(GeneratorModel& model) {
  std::vector<Tensor*> params;
  for (auto& w : model.trunk.weights) params.push_back(&w);
  for (auto& b : model.trunk.biases) params.push_back(&b);
  params.push_back(&model.log_std);
  return params;
}

std::vector<double> scene_gaps(const Snapshot& snapshot,
                               const RingGeometry& geometry) {
  if (snapshot.size() == 0) return {};
  if (snapshot.size() == 1) return {geometry.circumference()};
  return angular_gaps(snapshot, geometry);
}

GapTarget select_largest_gap(const Snapshot& snapshot,
                             const RingGeometry& geometry) {
  (void)geometry;  // targets are angular; meters only matter to callers
  GapTarget target;
  const std::size_t n = snapshot.size();
  if (n == 0) return target;  // whole ring anchored at theta = 0
  if (n == 1) {
    target.anchor = 0;
    target.successor = 0;
    target.anchor_theta = snapshot.vehicles[0].theta;
    target.arc = kTwoPi;
    target.slot = 0;
    return target;
  }
  const auto order = order_by_theta(snapshot);
  double best_arc = -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    const std::size_t j = order[(k + 1) % n];
    double arc = snapshot.vehicles[j].theta - snapshot.vehicles[i].theta;
    if (k + 1 == n) arc += kTwoPi;
    if (arc > best_arc) {
      best_arc = arc;
      target.anchor = static_cast<int>(i);
      target.successor = static_cast<int>(j);
      target.anchor_theta = snapshot.vehicles[i].theta;
      target.arc = arc;
      target.slot = static_cast<int>(k);
    }
  }
  return target;
}

std::vector<double> encode_context(const Snapshot& partial,
                                   const MacroDescriptor& d,
                                   const RingGeometry& geometry,
                                   int n_vehicles, int target_slot,
                                   int remaining_k) {
  std::vector<double> ctx(generator_context_dim(n_vehicles), 0.0);
  const std::size_t m = partial.size();
  if (m > static_cast<std::size_t>(n_vehicles))
    throw std::invalid_argument("encode_context: more vehicles than slots");
  if (m > 0) {
    const auto order = order_by_theta(partial);
    const auto gaps = scene_gaps(partial, geometry);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = order[k];
      const double gap = m == 1 ? gaps[0] : gaps[i];
      ctx[k * 3 + 0] = gap / d.d_bar;
      ctx[k * 3 + 1] = partial.vehicles[i].v / d.v_bar_gt;
      ctx[k * 3 + 2] = 1.0;
    }
  }
  std::size_t at = static_cast<std::size_t>(n_vehicles) * 3;
  ctx[at++] = d.v_bar_gt / 10.0;
  ctx[at++] = d.d_bar / 100.0;
  ctx[at++] = d.d_min / 100.0;
  ctx[at++] = d.d_max / 100.0;
  ctx[at++] = d.v_min / 10.0;
  ctx[at++] = d.v_max / 10.0;
  ctx[at++] = static_cast<double>(remaining_k) / n_vehicles;
  ctx[at++] = static_cast<double>(target_slot) / n_vehicles;
  return ctx;
}

Proposal propose_with_eps(const GeneratorModel& model, const Snapshot& partial,
                          const RingGeometry& geometry, int remaining_k,
                          double eps_f, double eps_v) {
  Proposal p;
  p.target = select_largest_gap(partial, geometry);
  const auto ctx = encode_context(partial, model.descriptor, geometry,
                                  model.n_vehicles, p.target.slot, remaining_k);
  const Tensor mu = net_forward(model.trunk, ctx, &p.cache);
  p.mu_f = mu[0];
  p.mu_v = mu[1];
  const double std_f = std::exp(std::clamp(model.log_std[0], kLogStdLo, kLogStdHi));
  const double std_v = std::exp(std::clamp(model.log_std[1], kLogStdLo, kLogStdHi));
  p.eps_f = eps_f;
  p.eps_v = eps_v;
  p.z_f = p.mu_f + std_f * eps_f;
  p.z_v = p.mu_v + std_v * eps_v;
  p.f = sigmoid(p.z_f);
  p.theta = wrap_angle(p.target.anchor_theta + p.f * p.target.arc);
  const MacroDescriptor& d = model.descriptor;
  p.v = d.v_min + sigmoid(p.z_v) * (d.v_max - d.v_min);
  return p;
}

Proposal propose(const GeneratorModel& model, const Snapshot& partial,
                 const RingGeometry& geometry, int remaining_k,
                 RngStream& rng) {
  const double eps_f = rng.normal();
  const double eps_v = rng.normal();
  return propose_with_eps(model, partial, geometry, remaining_k, eps_f, eps_v);
}

namespace {

// A gap d can be subdivided by j extra vehicles into pieces within
// [d_min, d_max] iff (j+1) d_min <= d <= (j+1) d_max, i.e. j in
// [ceil(d/d_max)-1, floor(d/d_min)-1].
struct BandRange {
  int lo = 0;
  int hi = -1;
  bool empty() const { return lo > hi; }
};

BandRange band_range(double d, double d_min, double d_max, int max_band) {
  BandRange r;
  r.lo = static_cast<int>(std::ceil(d / d_max - 1e-12)) - 1;
  r.hi = static_cast<int>(std::floor(d / d_min + 1e-12)) - 1;
  r.lo = std::max(r.lo, 0);
  r.hi = std::min(r.hi, max_band);
  return r;
}

}  // namespace

int spacing_band(double d, double d_min, double d_max, int max_band) {
  const BandRange r = band_range(d, d_min, d_max, max_band);
  return r.empty() ? -1 : r.lo;
}

bool completable(std::span<const double> gaps, int remaining, double d_min,
                 double d_max) {
  long long cap_lo = 0, cap_hi = 0;
  for (double g : gaps) {
    const BandRange r = band_range(g, d_min, d_max, remaining);
    if (r.empty()) return false;
    cap_lo += r.lo;
    cap_hi += r.hi;
  }
  return cap_lo <= remaining && remaining <= cap_hi;
}

namespace {

struct InsertionRecord {
  Proposal proposal;
  bool projected = false;
};

bool theta_taken(const Snapshot& snapshot, double theta) {
  for (const auto& s : snapshot.vehicles)
    if (s.theta == theta) return true;
  return false;
}

void insert_vehicle(Snapshot& snapshot, double theta, double v) {
  snapshot.vehicles.push_back({theta, v});
  snapshot.observed.push_back(0);
}

// Acceptance test for a tentative insertion. remaining_after counts the
// insertions still to come once this candidate is placed.
bool candidate_ok(const Snapshot& tentative, const Proposal& p,
                  const RingGeometry& geometry, const MacroDescriptor& d,
                  GapTestMode mode, int remaining_after) {
  if (p.v < d.v_min || p.v > d.v_max) return false;
  if (mode == GapTestMode::kFinal) {
    return completable(scene_gaps(tentative, geometry), remaining_after,
                       d.d_min, d.d_max);
  }
  // Immediate: both gaps adjacent to the candidate within bounds. A first
  // vehicle on an empty ring has no neighbors and passes vacuously.
  const std::size_t n = tentative.size();
  if (n < 2) return true;
  const std::size_t idx = n - 1;  // candidate was appended last
  const auto gaps = angular_gaps(tentative, geometry);
  const auto order = order_by_theta(tentative);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (order[k] == idx) pos = k;
  const std::size_t pred = order[(pos + n - 1) % n];
  const double ahead = gaps[idx];
  const double behind = gaps[pred];
  return ahead >= d.d_min && ahead <= d.d_max && behind >= d.d_min &&
         behind <= d.d_max;
}

// Projection of a failed candidate onto the targeted gap: the tighter
// adjacent gap becomes d_min when the gap is wide enough, else the candidate
// sits at the midpoint.
double project_offset(double last_offset, double gap_len, double d_min) {
  if (gap_len >= 2.0 * d_min) {
    return last_offset <= 0.5 * gap_len ? d_min : gap_len - d_min;
  }
  return 0.5 * gap_len;
}

}  // namespace

Completion complete_scene(const GeneratorModel& model, const Snapshot& partial,
                          const RingGeometry& geometry, int total_vehicles,
                          const CompletionOptions& options, RngStream& rng) {
  const int m = static_cast<int>(partial.size());
  if (total_vehicles < m)
    throw std::invalid_argument(
        "complete_scene: fewer total vehicles than observed");
  if (options.t_max < 1)
    throw std::invalid_argument("complete_scene: t_max must be >= 1");
  const int k = total_vehicles - m;

  Completion result;
  result.snapshot = partial;
  if (k == 0) return result;

  const MacroDescriptor& d = model.descriptor;
  for (int s = 0; s < k; ++s) {
    const int remaining_with_current = k - s;
    Proposal last;
    bool accepted = false;
    for (int trial = 0; trial < options.t_max; ++trial) {
      last = propose(model, result.snapshot, geometry, remaining_with_current,
                     rng);
      ++result.stats.trials;
      if (theta_taken(result.snapshot, last.theta)) continue;
      Snapshot tentative = result.snapshot;
      insert_vehicle(tentative, last.theta, last.v);
      if (candidate_ok(tentative, last, geometry, d, options.gap_test,
                       remaining_with_current - 1)) {
        result.snapshot = std::move(tentative);
        accepted = true;
        break;
      }
    }
    if (accepted) {
      ++result.stats.inserted;
      ++result.stats.accepted;
      result.projected.push_back(0);
      continue;
    }
    if (options.on_infeasible == InfeasiblePolicy::kAbort) break;
    // Projection fallback onto the last candidate's target gap.
    const double gap_len = last.target.arc * geometry.radius;
    const double offset = project_offset(last.f * gap_len, gap_len, d.d_min);
    double theta =
        wrap_angle(last.target.anchor_theta + offset / geometry.radius);
    while (theta_taken(result.snapshot, theta))
      theta = wrap_angle(theta + 1e-9);
    const double v = std::clamp(last.v, d.v_min, d.v_max);
    insert_vehicle(result.snapshot, theta, v);
    ++result.stats.inserted;
    ++result.stats.projected;
    result.projected.push_back(1);
  }
  return result;
}

TrainingLoss generator_training_loss(const GeneratorModel& model,
                                     const Snapshot& partial,
                                     const RingGeometry& geometry,
                                     const PenaltyWeights& weights,
                                     std::span<const EpsPair> eps) {
  const int m = static_cast<int>(partial.size());
  const int k = static_cast<int>(eps.size());
  if (m + k > model.n_vehicles)
    throw std::invalid_argument("generator_training_loss: too many vehicles");
  if (m + k < 2)
    throw std::invalid_argument(
        "generator_training_loss: completed scene needs >= 2 vehicles");

  TrainingLoss out;
  out.trunk_grads = make_zero_gradients(model.trunk);
  out.log_std_grads.assign(2, 0.0);

  // Autoregressive construction without rejection; every step records the
  // proposal so the reverse pass can walk the placement chain.
  std::vector<InsertionRecord> inserted;
  inserted.reserve(k);
  Snapshot scene = partial;
  for (int s = 0; s < k; ++s) {
    InsertionRecord rec;
    rec.proposal = propose_with_eps(model, scene, geometry, k - s, eps[s].f,
                                    eps[s].v);
    insert_vehicle(scene, rec.proposal.theta, rec.proposal.v);
    inserted.push_back(std::move(rec));
  }
  out.completed = scene;

  const std::size_t n = scene.size();
  const auto gaps = angular_gaps(scene, geometry);
  const auto order = order_by_theta(scene);
  std::vector<std::size_t> pos(n);
  for (std::size_t idx = 0; idx < n; ++idx) pos[order[idx]] = idx;

  // Gaps influenced by generated vehicles: the gap each inserted vehicle
  // owns plus its predecessor's. All gaps when nothing was inserted.
  std::set<std::size_t> affected;
  for (int j = 0; j < k; ++j) {
    const std::size_t idx = static_cast<std::size_t>(m + j);
    affected.insert(idx);
    affected.insert(order[(pos[idx] + n - 1) % n]);
  }
  if (affected.empty())
    for (std::size_t i = 0; i < n; ++i) affected.insert(i);
  out.affected_gaps.assign(affected.begin(), affected.end());

  std::vector<double> speeds(n);
  for (std::size_t i = 0; i < n; ++i) speeds[i] = scene.vehicles[i].v;
  std::vector<double> selected;
  selected.reserve(out.affected_gaps.size());
  for (std::size_t idx : out.affected_gaps) selected.push_back(gaps[idx]);

  const double speed_term = l_speed(speeds, model.descriptor.v_bar_gt);
  const double dist_term = l_dist(selected, model.descriptor).total();
  out.loss = weights.lambda_v * speed_term + weights.lambda_d * dist_term;
  if (!std::isfinite(out.loss))
    throw std::runtime_error("generator_training_loss: non-finite loss");
  if (k == 0) return out;

  // dL/d speed_i and dL/d gap_g.
  std::vector<double> dspeed(n, 0.0);
  l_speed_grad(speeds, model.descriptor.v_bar_gt, dspeed);
  for (auto& g : dspeed) g *= weights.lambda_v;

  std::vector<double> dgap_sel(selected.size(), 0.0);
  l_dist_grad(selected, model.descriptor, dgap_sel);

  // Gap g belongs to vehicle i = owner and stretches to its angular
  // successor: d_g = R * (theta_succ - theta_i), so the owner gets -R and
  // the successor +R.
  std::vector<double> dtheta(n, 0.0);
  for (std::size_t t = 0; t < out.affected_gaps.size(); ++t) {
    const std::size_t owner = out.affected_gaps[t];
    const std::size_t succ = order[(pos[owner] + 1) % n];
    const double dg = weights.lambda_d * dgap_sel[t];
    dtheta[owner] += -geometry.radius * dg;
    dtheta[succ] += geometry.radius * dg;
  }

  // Reverse pass over insertions. theta_hat = theta_anchor + f * arc with
  // arc = theta_succ - theta_anchor (mod 2pi); anchors that are themselves
  // inserted vehicles receive the propagated derivative.
  const double range_v = model.descriptor.v_max - model.descriptor.v_min;
  const double std_f =
      std::exp(std::clamp(model.log_std[0], kLogStdLo, kLogStdHi));
  const double std_v =
      std::exp(std::clamp(model.log_std[1], kLogStdLo, kLogStdHi));
  for (int j = k - 1; j >= 0; --j) {
    const Proposal& p = inserted[j].proposal;
    const std::size_t idx = static_cast<std::size_t>(m + j);
    const double dth = dtheta[idx];
    const double dv = dspeed[idx];

    if (p.target.anchor >= 0) {
      const int anchor = p.target.anchor;
      const int succ = p.target.successor;
      if (anchor == succ) {
        // Single-vehicle ring: the gap wraps back to the anchor, whose arc
        // is the full circle, so theta_hat shifts one-for-one with it.
        if (anchor >= m) dtheta[static_cast<std::size_t>(anchor)] += dth;
      } else {
        if (anchor >= m)
          dtheta[static_cast<std::size_t>(anchor)] += dth * (1.0 - p.f);
        if (succ >= m)
          dtheta[static_cast<std::size_t>(succ)] += dth * p.f;
      }
    }

    const double df = dth * p.target.arc;
    const double sig_f = p.f;
    const double dz_f = df * sig_f * (1.0 - sig_f);
    const double sig_v = sigmoid(p.z_v);
    const double dz_v = dv * sig_v * (1.0 - sig_v) * range_v;

    out.log_std_grads[0] += dz_f * std_f * p.eps_f;
    out.log_std_grads[1] += dz_v * std_v * p.eps_v;
    const double dy[2] = {dz_f, dz_v};
    net_backward(model.trunk, p.cache, std::span<const double>(dy, 2),
                 out.trunk_grads);
  }
  return out;
}

namespace {

// Uniform subset of size k from {0, ..., n-1} (partial Fisher-Yates).
std::vector<int> sample_subset(RngStream& rng, int n, int k) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) {
    const int j =
        i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Snapshot hide_vehicles(const Snapshot& full, const std::vector<int>& hidden) {
  Snapshot partial;
  std::vector<std::uint8_t> is_hidden(full.size(), 0);
  for (int h : hidden) is_hidden[static_cast<std::size_t>(h)] = 1;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (is_hidden[i]) continue;
    partial.vehicles.push_back(full.vehicles[i]);
    partial.observed.push_back(1);
  }
  return partial;
}

// Number of leading frames the completion protocol draws from.
int frame_window(const Dataset& dataset, double window_frac) {
  const int hi = static_cast<int>(std::ceil(window_frac * dataset.steps));
  return std::min(std::max(hi, 1), dataset.steps);
}

}  // namespace

GeneratorTrainResult train_generator(const Dataset& dataset,
                                     const MacroDescriptor& descriptor,
                                     const GeneratorHyper& hyper,
                                     std::uint64_t seed) {
  if (dataset.runs.empty())
    throw std::invalid_argument("train_generator: empty dataset");
  validate_weights(hyper.weights);
  if (hyper.k_max > dataset.n_vehicles)
    throw std::invalid_argument("train_generator: k_max exceeds N");

  RngStream init_rng(stream_seed(seed, "generator-init"));
  GeneratorTrainResult result;
  result.model = make_generator_model(descriptor, dataset.n_vehicles,
                                      hyper.k_max, hyper.hidden, init_rng);
  GeneratorModel& model = result.model;

  auto params = generator_params(model);
  AdamState adam = make_adam_state(
      {params.begin(), params.end()},
      AdamConfig{hyper.learning_rate, 0.9, 0.999, 1e-8});

  RngStream rng(stream_seed(seed, "generator-train"));
  const int t_hi = frame_window(dataset, hyper.frame_window_frac);
  double window_sum = 0.0;
  int window_n = 0;
  for (int iter = 0; iter < hyper.iterations; ++iter) {
    const auto& run = dataset.runs[rng.uniform_index(dataset.runs.size())];
    const int t = static_cast<int>(
        rng.uniform_index(static_cast<std::uint64_t>(t_hi)));
    const int k = static_cast<int>(rng.uniform_index(
        static_cast<std::uint64_t>(hyper.k_max + 1)));
    const auto hidden = sample_subset(rng, dataset.n_vehicles, k);
    const Snapshot partial = hide_vehicles(run.snapshots[t], hidden);

    std::vector<EpsPair> eps(k);
    for (auto& e : eps) {
      e.f = rng.normal();
      e.v = rng.normal();
    }
    const TrainingLoss step = generator_training_loss(
        model, partial, dataset.geometry, hyper.weights, eps);

    if (k > 0) {
      std::vector<const Tensor*> grads;
      for (const auto& w : step.trunk_grads.weights) grads.push_back(&w);
      for (const auto& b : step.trunk_grads.biases) grads.push_back(&b);
      grads.push_back(&step.log_std_grads);
      adam_step(params, grads, adam);
      for (auto& ls : model.log_std) ls = std::clamp(ls, kLogStdLo, kLogStdHi);
    }

    window_sum += step.loss;
    ++window_n;
    if ((iter + 1) % hyper.log_every == 0 || iter + 1 == hyper.iterations) {
      result.curve.push_back({iter + 1, window_sum / window_n});
      window_sum = 0.0;
      window_n = 0;
    }
  }
  return result;
}

CompletionBatchResult completion_batch(const GeneratorModel& model,
                                       const Dataset& dataset,
                                       int n_completions, int k_lo, int k_hi,
                                       double frame_window_frac,
                                       const CompletionOptions& options,
                                       bool parallel, std::uint64_t seed) {
  if (dataset.runs.empty())
    throw std::invalid_argument("completion_batch: empty dataset");
  if (k_lo < 0 || k_hi < k_lo || k_hi > dataset.n_vehicles)
    throw std::invalid_argument("completion_batch: bad K range");

  struct PerCompletion {
    int insertions = 0, accepted = 0, projected = 0, violations = 0;
  };
  std::vector<PerCompletion> partial(n_completions);
  const int t_hi = frame_window(dataset, frame_window_frac);
  const MacroDescriptor& d = model.descriptor;
  const double tol = 1e-9;

  par::for_each_index(
      static_cast<std::size_t>(n_completions), parallel, [&](std::size_t c) {
        RngStream rng(stream_seed(seed, static_cast<std::uint64_t>(c)));
        const auto& run = dataset.runs[rng.uniform_index(dataset.runs.size())];
        const int t = static_cast<int>(
            rng.uniform_index(static_cast<std::uint64_t>(t_hi)));
        const int k =
            k_lo + static_cast<int>(rng.uniform_index(
                       static_cast<std::uint64_t>(k_hi - k_lo + 1)));
        const auto hidden = sample_subset(rng, dataset.n_vehicles, k);
        const Snapshot obs = hide_vehicles(run.snapshots[t], hidden);
        const Completion comp = complete_scene(
            model, obs, dataset.geometry, dataset.n_vehicles, options, rng);

        PerCompletion& pc = partial[c];
        pc.insertions = comp.stats.inserted;
        pc.accepted = comp.stats.accepted;
        pc.projected = comp.stats.projected;

        // Audit accepted insertions against the final scene. A violating
        // gap whose other endpoint is a projected vehicle is attributed to
        // the projection, not the accepted insertion.
        const std::size_t m = obs.size();
        const auto& snap = comp.snapshot;
        const std::size_t n = snap.size();
        if (n < 2) return;
        const auto gaps = angular_gaps(snap, dataset.geometry);
        const auto order = order_by_theta(snap);
        std::vector<std::size_t> pos(n);
        for (std::size_t i = 0; i < n; ++i) pos[order[i]] = i;
        auto projected_vehicle = [&](std::size_t idx) {
          return idx >= m && comp.projected[idx - m] != 0;
        };
        for (std::size_t j = 0; j < comp.projected.size(); ++j) {
          if (comp.projected[j]) continue;  // flagged separately
          const std::size_t idx = m + j;
          const double v = snap.vehicles[idx].v;
          bool violated = v < d.v_min - tol || v > d.v_max + tol;
          const std::size_t succ = order[(pos[idx] + 1) % n];
          const std::size_t pred = order[(pos[idx] + n - 1) % n];
          const double ahead = gaps[idx];
          const double behind = gaps[pred];
          if ((ahead < d.d_min - tol || ahead > d.d_max + tol) &&
              !projected_vehicle(succ))
            violated = true;
          if ((behind < d.d_min - tol || behind > d.d_max + tol) &&
              !projected_vehicle(pred))
            violated = true;
          if (violated) ++pc.violations;
        }
      });

  CompletionBatchResult total;
  total.completions = n_completions;
  for (const auto& pc : partial) {
    total.insertions += pc.insertions;
    total.accepted += pc.accepted;
    total.projected += pc.projected;
    total.bound_violations += pc.violations;
  }
  return total;
}

}  // namespace ringflow
