#include "ringflow/config.hpp"

#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "ringflow/errors.hpp"
#include "ringflow/io_util.hpp"

namespace ringflow {

CollectConfig Config::collect_config() const {
  CollectConfig c;
  c.geometry = geometry;
  c.bounds = bounds;
  c.ranges = idm;
  c.n_vehicles = n_vehicles;
  c.runs = collect_runs;
  c.steps = collect_steps;
  c.dt = dt;
  c.limit_segments_min = limit_segments_min;
  c.limit_segments_max = limit_segments_max;
  c.limit_lo = limit_lo;
  c.limit_hi = limit_hi;
  c.min_segment_arc = min_segment_arc;
  c.init_jitter = init_jitter;
  c.init_gap_margin = init_gap_margin;
  c.max_place_retries = max_place_retries;
  c.parallel = parallel;
  return c;
}

Config default_config() { return Config{}; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad seed for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + value + "'");
}

// "1,2,3" or "1..4"
std::vector<int> parse_int_list(const std::string& key,
                                const std::string& value) {
  std::vector<int> out;
  const auto dots = value.find("..");
  if (dots != std::string::npos) {
    const int lo = parse_int(key, trim(value.substr(0, dots)));
    const int hi = parse_int(key, trim(value.substr(dots + 2)));
    if (hi < lo) throw ConfigError("config: empty range for " + key);
    for (int k = lo; k <= hi; ++k) out.push_back(k);
    return out;
  }
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(key, item));
  }
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

std::string format_int_list(const std::vector<int>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(xs[i]);
  }
  return s;
}

using Setter = std::function<void(Config&, const std::string& key,
                                  const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;

#define RF_DBL(KEY, FIELD)                                              \
  t[KEY] = [](Config& c, const std::string& k, const std::string& v) { \
    c.FIELD = parse_double(k, v);                                      \
  }
#define RF_INT(KEY, FIELD)                                              \
  t[KEY] = [](Config& c, const std::string& k, const std::string& v) { \
    c.FIELD = parse_int(k, v);                                         \
  }
#define RF_BOOL(KEY, FIELD)                                             \
  t[KEY] = [](Config& c, const std::string& k, const std::string& v) { \
    c.FIELD = parse_bool(k, v);                                        \
  }

    RF_DBL("geometry.radius", geometry.radius);
    RF_INT("geometry.n_vehicles", n_vehicles);
    RF_DBL("geometry.dt", dt);

    RF_DBL("bounds.v_min", bounds.v_min);
    RF_DBL("bounds.v_max", bounds.v_max);
    RF_DBL("bounds.a_min", bounds.a_min);
    RF_DBL("bounds.a_max", bounds.a_max);

    RF_DBL("descriptor.v_bar_gt", descriptor.v_bar_gt);
    RF_DBL("descriptor.d_bar", descriptor.d_bar);
    RF_DBL("descriptor.d_min", descriptor.d_min);
    RF_DBL("descriptor.d_max", descriptor.d_max);
    RF_BOOL("descriptor.from_data", descriptor_from_data);

    RF_DBL("weights.lambda_v", weights.lambda_v);
    RF_DBL("weights.lambda_d", weights.lambda_d);

    RF_DBL("idm.a_cap_lo", idm.a_cap.lo);
    RF_DBL("idm.a_cap_hi", idm.a_cap.hi);
    RF_DBL("idm.b_lo", idm.b.lo);
    RF_DBL("idm.b_hi", idm.b.hi);
    RF_DBL("idm.v0_lo", idm.v0.lo);
    RF_DBL("idm.v0_hi", idm.v0.hi);
    RF_DBL("idm.s0_lo", idm.s0.lo);
    RF_DBL("idm.s0_hi", idm.s0.hi);
    RF_DBL("idm.headway_lo", idm.T.lo);
    RF_DBL("idm.headway_hi", idm.T.hi);
    RF_DBL("idm.delta", idm.delta);

    RF_INT("collect.runs", collect_runs);
    RF_INT("collect.steps", collect_steps);
    RF_INT("collect.limit_segments_min", limit_segments_min);
    RF_INT("collect.limit_segments_max", limit_segments_max);
    RF_DBL("collect.limit_lo", limit_lo);
    RF_DBL("collect.limit_hi", limit_hi);
    RF_DBL("collect.min_segment_arc", min_segment_arc);
    RF_DBL("collect.init_jitter", init_jitter);
    RF_DBL("collect.init_gap_margin", init_gap_margin);
    RF_INT("collect.max_place_retries", max_place_retries);

    RF_INT("generator.iterations", generator.iterations);
    RF_INT("generator.hidden", generator.hidden);
    RF_INT("generator.k_max", generator.k_max);
    RF_DBL("generator.learning_rate", generator.learning_rate);
    RF_DBL("generator.frame_window_frac", generator.frame_window_frac);
    RF_INT("generator.log_every", generator.log_every);
    RF_INT("generator.t_max", completion.t_max);
    t["generator.on_infeasible"] = [](Config& c, const std::string& k,
                                      const std::string& v) {
      if (v == "project")
        c.completion.on_infeasible = InfeasiblePolicy::kProject;
      else if (v == "abort")
        c.completion.on_infeasible = InfeasiblePolicy::kAbort;
      else
        throw ConfigError("config: " + k + " must be project or abort");
    };
    t["generator.gap_test"] = [](Config& c, const std::string& k,
                                 const std::string& v) {
      if (v == "final")
        c.completion.gap_test = GapTestMode::kFinal;
      else if (v == "immediate")
        c.completion.gap_test = GapTestMode::kImmediate;
      else
        throw ConfigError("config: " + k + " must be final or immediate");
    };

    RF_INT("policy.iterations", policy.iterations);
    RF_INT("policy.batch_episodes", policy.batch_episodes);
    RF_INT("policy.horizon", policy.horizon);
    RF_INT("policy.hidden", policy.hidden);
    RF_DBL("policy.learning_rate", policy.learning_rate);
    RF_BOOL("policy.anneal_lr", policy.anneal_lr);
    RF_DBL("policy.clip", policy.clip);
    RF_DBL("policy.gamma", policy.gamma);
    RF_DBL("policy.gae_lambda", policy.gae_lambda);
    RF_INT("policy.epochs", policy.epochs);
    RF_INT("policy.minibatch", policy.minibatch);
    RF_DBL("policy.entropy_coef", policy.entropy_coef);
    RF_DBL("policy.value_coef", policy.value_coef);
    RF_DBL("policy.micro_weight", policy.micro_weight);
    RF_DBL("policy.eta", policy.eta);
    RF_INT("policy.k_lo", policy.k_lo);
    RF_INT("policy.k_hi", policy.k_hi);
    RF_DBL("policy.convergence_eps", policy.convergence_eps);
    RF_INT("policy.convergence_window", policy.convergence_window);
    RF_INT("policy.patience", policy.patience);

    t["eval.ks"] = [](Config& c, const std::string& k, const std::string& v) {
      c.eval.ks = parse_int_list(k, v);
    };
    RF_INT("eval.n_rollouts", eval.n_rollouts);
    RF_INT("eval.horizon", eval.horizon);

    RF_DBL("scenario.duration", scenario.duration);
    RF_DBL("scenario.ramp_start", scenario.ramp_start);
    RF_DBL("scenario.ramp_duration", scenario.ramp_duration);
    RF_DBL("scenario.initial_gap", scenario.initial_gap);
    RF_DBL("scenario.v_limit", scenario.v_limit);
    RF_INT("scenario.trials", scenario.trials);

    t["run.seed"] = [](Config& c, const std::string& k, const std::string& v) {
      c.seed = parse_u64(k, v);
    };
    RF_BOOL("run.parallel", parallel);

#undef RF_DBL
#undef RF_INT
#undef RF_BOOL
    return t;
  }();
  return table;
}

void apply_kv(Config& config, const std::string& key,
              const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("config: unknown key: " + key);
  it->second(config, key, value);
}

void apply_file(Config& config, const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: bad section header at " + path + ":" +
                          std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at " + path + ":" +
                        std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    apply_kv(config, full, value);
  }
}

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("config: " + message);
}

}  // namespace

void validate_config(const Config& c) {
  check(c.geometry.radius > 0.0, "geometry.radius must be > 0");
  check(c.n_vehicles >= 2, "geometry.n_vehicles must be >= 2");
  check(c.dt > 0.0, "geometry.dt must be > 0");
  check(c.bounds.v_min < c.bounds.v_max,
        "bounds.v_min must be below bounds.v_max");
  check(c.bounds.a_min < 0.0 && 0.0 < c.bounds.a_max,
        "bounds.a_min must be negative and bounds.a_max positive");
  check(c.descriptor.d_min < c.descriptor.d_bar &&
            c.descriptor.d_bar < c.descriptor.d_max,
        "descriptor requires d_min < d_bar < d_max (descriptor.d_min, "
        "descriptor.d_bar, descriptor.d_max)");
  check(c.bounds.v_min < c.descriptor.v_bar_gt &&
            c.descriptor.v_bar_gt < c.bounds.v_max,
        "descriptor.v_bar_gt must lie inside (bounds.v_min, bounds.v_max)");
  check(c.weights.lambda_v >= 0.0 && c.weights.lambda_d >= 0.0,
        "weights must be non-negative");

  auto range_ok = [&](const ParamRange& r, const std::string& name) {
    check(r.lo <= r.hi, "idm." + name + "_lo must not exceed idm." + name +
                            "_hi");
    check(r.lo > 0.0, "idm." + name + "_lo must be positive");
  };
  range_ok(c.idm.a_cap, "a_cap");
  range_ok(c.idm.b, "b");
  range_ok(c.idm.v0, "v0");
  range_ok(c.idm.s0, "s0");
  range_ok(c.idm.T, "headway");
  check(c.idm.delta > 0.0, "idm.delta must be positive");
  check(c.idm.v0.lo >= c.bounds.v_min && c.idm.v0.hi <= c.bounds.v_max,
        "idm.v0 range must lie within [bounds.v_min, bounds.v_max]");

  check(c.collect_runs >= 1 && c.collect_steps >= 1,
        "collect.runs and collect.steps must be >= 1");
  check(c.limit_segments_min >= 1 &&
            c.limit_segments_max >= c.limit_segments_min,
        "collect.limit_segments_min/max must satisfy 1 <= min <= max");
  check(c.limit_lo <= c.limit_hi,
        "collect.limit_lo must not exceed collect.limit_hi");
  check(c.init_jitter >= 0.0, "collect.init_jitter must be >= 0");
  check(c.limit_lo >= c.bounds.v_min && c.limit_hi <= c.bounds.v_max,
        "speed limits must lie within [bounds.v_min, bounds.v_max] "
        "(collect.limit_lo, collect.limit_hi)");

  check(c.generator.iterations >= 0, "generator.iterations must be >= 0");
  check(c.generator.k_max >= 0 && c.generator.k_max <= c.n_vehicles,
        "generator.k_max must lie in [0, geometry.n_vehicles]");
  check(c.completion.t_max >= 1, "generator.t_max must be >= 1");
  check(c.generator.frame_window_frac > 0.0 &&
            c.generator.frame_window_frac <= 1.0,
        "generator.frame_window_frac must lie in (0, 1]");

  try {
    validate_ppo_hyper(c.policy);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: policy.") + e.what());
  }
  check(c.policy.k_hi <= c.n_vehicles,
        "policy.k_hi must not exceed geometry.n_vehicles");

  check(!c.eval.ks.empty(), "eval.ks must not be empty");
  for (int k : c.eval.ks)
    check(k >= 0 && k <= c.n_vehicles,
          "eval.ks entries must lie in [0, geometry.n_vehicles]");
  check(c.eval.n_rollouts >= 1, "eval.n_rollouts must be >= 1");
  check(c.eval.horizon >= 1, "eval.horizon must be >= 1");

  check(c.scenario.duration > 0.0, "scenario.duration must be > 0");
  check(c.scenario.ramp_duration > 0.0,
        "scenario.ramp_duration must be > 0");
  check(c.scenario.initial_gap > 0.0, "scenario.initial_gap must be > 0");
  check(c.scenario.trials >= 1, "scenario.trials must be >= 1");
}

Config load_config(const std::string& path, const ConfigOverrides& overrides) {
  Config config;
  if (!path.empty()) {
    if (!file_exists(path))
      throw ConfigError("config: file not found: " + path);
    apply_file(config, path);
  }
  if (const char* env = std::getenv("RINGFLOW_SEED"))
    config.seed = parse_u64("RINGFLOW_SEED", env);
  for (const auto& [key, value] : overrides) apply_kv(config, key, value);
  validate_config(config);
  return config;
}

std::string serialize_config(const Config& c) {
  std::ostringstream out;
  auto d = [&](const char* k, double v) {
    out << k << " = " << format_double(v) << "\n";
  };
  auto i = [&](const char* k, long long v) { out << k << " = " << v << "\n"; };
  auto b = [&](const char* k, bool v) {
    out << k << " = " << (v ? "true" : "false") << "\n";
  };
  out << "[geometry]\n";
  d("radius", c.geometry.radius);
  i("n_vehicles", c.n_vehicles);
  d("dt", c.dt);
  out << "[bounds]\n";
  d("v_min", c.bounds.v_min);
  d("v_max", c.bounds.v_max);
  d("a_min", c.bounds.a_min);
  d("a_max", c.bounds.a_max);
  out << "[descriptor]\n";
  d("v_bar_gt", c.descriptor.v_bar_gt);
  d("d_bar", c.descriptor.d_bar);
  d("d_min", c.descriptor.d_min);
  d("d_max", c.descriptor.d_max);
  b("from_data", c.descriptor_from_data);
  out << "[weights]\n";
  d("lambda_v", c.weights.lambda_v);
  d("lambda_d", c.weights.lambda_d);
  out << "[idm]\n";
  d("a_cap_lo", c.idm.a_cap.lo);
  d("a_cap_hi", c.idm.a_cap.hi);
  d("b_lo", c.idm.b.lo);
  d("b_hi", c.idm.b.hi);
  d("v0_lo", c.idm.v0.lo);
  d("v0_hi", c.idm.v0.hi);
  d("s0_lo", c.idm.s0.lo);
  d("s0_hi", c.idm.s0.hi);
  d("headway_lo", c.idm.T.lo);
  d("headway_hi", c.idm.T.hi);
  d("delta", c.idm.delta);
  out << "[collect]\n";
  i("runs", c.collect_runs);
  i("steps", c.collect_steps);
  i("limit_segments_min", c.limit_segments_min);
  i("limit_segments_max", c.limit_segments_max);
  d("limit_lo", c.limit_lo);
  d("limit_hi", c.limit_hi);
  d("min_segment_arc", c.min_segment_arc);
  d("init_jitter", c.init_jitter);
  d("init_gap_margin", c.init_gap_margin);
  i("max_place_retries", c.max_place_retries);
  out << "[generator]\n";
  i("iterations", c.generator.iterations);
  i("hidden", c.generator.hidden);
  i("k_max", c.generator.k_max);
  d("learning_rate", c.generator.learning_rate);
  d("frame_window_frac", c.generator.frame_window_frac);
  i("log_every", c.generator.log_every);
  i("t_max", c.completion.t_max);
  out << "on_infeasible = "
      << (c.completion.on_infeasible == InfeasiblePolicy::kProject ? "project"
                                                                   : "abort")
      << "\n";
  out << "gap_test = "
      << (c.completion.gap_test == GapTestMode::kFinal ? "final" : "immediate")
      << "\n";
  out << "[policy]\n";
  i("iterations", c.policy.iterations);
  i("batch_episodes", c.policy.batch_episodes);
  i("horizon", c.policy.horizon);
  i("hidden", c.policy.hidden);
  d("learning_rate", c.policy.learning_rate);
  b("anneal_lr", c.policy.anneal_lr);
  d("clip", c.policy.clip);
  d("gamma", c.policy.gamma);
  d("gae_lambda", c.policy.gae_lambda);
  i("epochs", c.policy.epochs);
  i("minibatch", c.policy.minibatch);
  d("entropy_coef", c.policy.entropy_coef);
  d("value_coef", c.policy.value_coef);
  d("micro_weight", c.policy.micro_weight);
  d("eta", c.policy.eta);
  i("k_lo", c.policy.k_lo);
  i("k_hi", c.policy.k_hi);
  d("convergence_eps", c.policy.convergence_eps);
  i("convergence_window", c.policy.convergence_window);
  i("patience", c.policy.patience);
  out << "[eval]\n";
  out << "ks = " << format_int_list(c.eval.ks) << "\n";
  i("n_rollouts", c.eval.n_rollouts);
  i("horizon", c.eval.horizon);
  out << "[scenario]\n";
  d("duration", c.scenario.duration);
  d("ramp_start", c.scenario.ramp_start);
  d("ramp_duration", c.scenario.ramp_duration);
  d("initial_gap", c.scenario.initial_gap);
  d("v_limit", c.scenario.v_limit);
  i("trials", c.scenario.trials);
  out << "[run]\n";
  out << "seed = " << c.seed << "\n";
  b("parallel", c.parallel);
  return out.str();
}

std::string config_hash(const Config& config) {
  const std::string text = serialize_config(config);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ringflow
