// Times the batch kernels with and without OpenMP and checks that both
// paths produce identical results.

#include <chrono>
#include <cstdio>
#include <functional>

#include "ringflow/dataset_io.hpp"
#include "ringflow/eval.hpp"
#include "ringflow/generator.hpp"
#include "ringflow/io_util.hpp"
#include "ringflow/parallel.hpp"
#include "ringflow/policy.hpp"

using namespace ringflow;

namespace {

double time_of(const std::function<void()>& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count();
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-24s serial %8.3fs  openmp %8.3fs  speedup %5.2fx  %s\n", name,
              serial, parallel, parallel > 0 ? serial / parallel : 0.0,
              same ? "results identical" : "RESULTS DIFFER");
}

}  // namespace

int main() {
  std::printf("threads available: %d (openmp %s)\n", par::max_threads(),
              par::openmp_enabled() ? "on" : "off");

  // Data collection over independent runs.
  CollectConfig cc;
  cc.runs = 256;
  cc.steps = 1200;
  Dataset serial_data, parallel_data;
  cc.parallel = false;
  const double t_collect_s =
      time_of([&] { serial_data = collect_runs(cc, 2024); });
  cc.parallel = true;
  const double t_collect_p =
      time_of([&] { parallel_data = collect_runs(cc, 2024); });
  bool same = true;
  for (std::size_t r = 0; r < serial_data.runs.size() && same; ++r)
    for (int t = 0; t < serial_data.steps && same; ++t)
      for (int i = 0; i < serial_data.n_vehicles && same; ++i)
        same = serial_data.runs[r].snapshots[t].vehicles[i].theta ==
               parallel_data.runs[r].snapshots[t].vehicles[i].theta;
  report("collect_runs", t_collect_s, t_collect_p, same);

  RngStream grng(1);
  const GeneratorModel generator =
      make_generator_model(MacroDescriptor{}, 5, 5, 64, grng);
  RngStream prng(2);
  const PolicyModel policy =
      make_policy_model(MacroDescriptor{}, ActionBounds{}, 64, prng);

  // Scene completions.
  CompletionBatchResult cb_s, cb_p;
  const double t_comp_s = time_of([&] {
    cb_s = completion_batch(generator, serial_data, 4000, 1, 4, 0.25,
                            CompletionOptions{}, false, 7);
  });
  const double t_comp_p = time_of([&] {
    cb_p = completion_batch(generator, serial_data, 4000, 1, 4, 0.25,
                            CompletionOptions{}, true, 7);
  });
  report("completion_batch", t_comp_s, t_comp_p,
         cb_s.accepted == cb_p.accepted && cb_s.projected == cb_p.projected);

  // Mixed replay/policy evaluation rollouts.
  EvalConfig eval;
  eval.ks = {1, 2, 3, 4};
  eval.n_rollouts = 50;
  eval.horizon = 300;
  std::vector<AlignmentRow> rows_s, rows_p;
  eval.parallel = false;
  const double t_eval_s = time_of([&] {
    rows_s = macro_alignment(policy, generator, serial_data, eval,
                             CompletionOptions{}, 11);
  });
  eval.parallel = true;
  const double t_eval_p = time_of([&] {
    rows_p = macro_alignment(policy, generator, serial_data, eval,
                             CompletionOptions{}, 11);
  });
  same = rows_s.size() == rows_p.size();
  for (std::size_t i = 0; i < rows_s.size() && same; ++i)
    same = rows_s[i].mean_speed == rows_p[i].mean_speed &&
           rows_s[i].std_gap == rows_p[i].std_gap;
  report("macro_alignment", t_eval_s, t_eval_p, same);

  // Episode batches as used by policy training.
  PpoHyper hyper;
  hyper.iterations = 8;
  hyper.batch_episodes = 64;
  GeneratorModel gen2 = generator;
  PolicyTrainResult tr_s, tr_p;
  hyper.parallel = false;
  const double t_roll_s = time_of([&] {
    tr_s = train_policy(serial_data, gen2, MacroDescriptor{}, ActionBounds{},
                        hyper, CompletionOptions{}, PenaltyWeights{}, 3);
  });
  hyper.parallel = true;
  const double t_roll_p = time_of([&] {
    tr_p = train_policy(serial_data, gen2, MacroDescriptor{}, ActionBounds{},
                        hyper, CompletionOptions{}, PenaltyWeights{}, 3);
  });
  same = true;
  for (std::size_t l = 0; l < tr_s.model.actor.layer_count() && same; ++l)
    same = tr_s.model.actor.weights[l] == tr_p.model.actor.weights[l];
  report("train_policy batches", t_roll_s, t_roll_p, same);
  return 0;
}
