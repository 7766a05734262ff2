#include "ringflow/dataset_io.hpp"

#include <sstream>
#include <stdexcept>

#include "ringflow/errors.hpp"
#include "ringflow/io_util.hpp"

namespace ringflow {

void write_dataset(const Dataset& dataset, const std::string& path) {
  std::ostringstream out;
  out << "# ringflow dataset v1\n";
  out << "# radius = " << format_double(dataset.geometry.radius) << "\n";
  out << "# dt = " << format_double(dataset.dt) << "\n";
  out << "# n_vehicles = " << dataset.n_vehicles << "\n";
  out << "# runs = " << dataset.runs.size() << "\n";
  out << "# steps = " << dataset.steps << "\n";
  out << "# seed = " << dataset.seed << "\n";
  for (std::size_t r = 0; r < dataset.runs.size(); ++r) {
    out << "# profile " << r;
    for (const auto& seg : dataset.runs[r].profile.segments)
      out << ' ' << format_double(seg.start_angle) << ':'
          << format_double(seg.limit);
    out << "\n";
  }
  out << "# columns: run t vehicle theta v u v_limit\n";
  for (std::size_t r = 0; r < dataset.runs.size(); ++r) {
    const Run& run = dataset.runs[r];
    for (std::size_t t = 0; t < run.snapshots.size(); ++t) {
      const Snapshot& snap = run.snapshots[t];
      for (std::size_t i = 0; i < snap.size(); ++i) {
        out << r << '\t' << t << '\t' << i << '\t'
            << format_double(snap.vehicles[i].theta) << '\t'
            << format_double(snap.vehicles[i].v) << '\t'
            << format_double(run.controls[t][i]) << '\t'
            << format_double(
                   speed_limit_at(run.profile, snap.vehicles[i].theta))
            << '\n';
      }
    }
  }
  atomic_write_file(path, out.str());
}

namespace {

void fail(const std::string& path, const std::string& what) {
  throw ConfigError("dataset " + path + ": " + what);
}

}  // namespace

Dataset read_dataset(const std::string& path) {
  if (!file_exists(path)) throw ConfigError("dataset file not found: " + path);
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "# ringflow dataset v1")
    fail(path, "missing format header");

  Dataset dataset;
  long long runs = -1;
  while (in.peek() == '#') {
    std::getline(in, line);
    std::istringstream ls(line);
    std::string hash, key, eq;
    ls >> hash >> key;
    if (key == "columns:") break;
    if (key == "profile") {
      std::size_t run_index = 0;
      if (!(ls >> run_index) || run_index >= dataset.runs.size())
        fail(path, "profile line out of order");
      std::string seg;
      SpeedLimitProfile profile;
      while (ls >> seg) {
        const auto colon = seg.find(':');
        if (colon == std::string::npos) fail(path, "bad profile segment");
        profile.segments.push_back({std::stod(seg.substr(0, colon)),
                                    std::stod(seg.substr(colon + 1))});
      }
      validate_profile(profile);
      dataset.runs[run_index].profile = profile;
      continue;
    }
    std::string value;
    ls >> eq >> value;
    if (eq != "=") fail(path, "bad header line: " + line);
    if (key == "radius")
      dataset.geometry.radius = std::stod(value);
    else if (key == "dt")
      dataset.dt = std::stod(value);
    else if (key == "n_vehicles")
      dataset.n_vehicles = std::stoi(value);
    else if (key == "steps")
      dataset.steps = std::stoi(value);
    else if (key == "seed")
      dataset.seed = std::stoull(value);
    else if (key == "runs") {
      runs = std::stoll(value);
      dataset.runs.resize(static_cast<std::size_t>(runs));
    } else {
      fail(path, "unknown header key: " + key);
    }
  }
  if (runs < 1 || dataset.n_vehicles < 1 || dataset.steps < 1)
    fail(path, "incomplete header");

  const int n = dataset.n_vehicles;
  for (auto& run : dataset.runs) {
    if (run.profile.segments.empty()) fail(path, "run without profile");
    run.snapshots.assign(static_cast<std::size_t>(dataset.steps), Snapshot{});
    run.controls.assign(static_cast<std::size_t>(dataset.steps),
                        std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (auto& snap : run.snapshots) {
      snap.vehicles.resize(static_cast<std::size_t>(n));
      snap.observed.assign(static_cast<std::size_t>(n), 1);
    }
  }

  long long expected = runs * dataset.steps * n;
  long long count = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long r = 0, t = 0, i = 0;
    double theta = 0.0, v = 0.0, u = 0.0, v_limit = 0.0;
    if (!(ls >> r >> t >> i >> theta >> v >> u >> v_limit))
      fail(path, "malformed data row: " + line);
    if (r < 0 || r >= runs || t < 0 || t >= dataset.steps || i < 0 || i >= n)
      fail(path, "row index out of range: " + line);
    Run& run = dataset.runs[static_cast<std::size_t>(r)];
    run.snapshots[static_cast<std::size_t>(t)]
        .vehicles[static_cast<std::size_t>(i)] = {theta, v};
    run.controls[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] = u;
    ++count;
  }
  if (count != expected)
    fail(path, "row count mismatch: got " + std::to_string(count) +
                   ", expected " + std::to_string(expected));
  for (const auto& run : dataset.runs)
    for (const auto& snap : run.snapshots) validate_snapshot(snap);
  return dataset;
}

}  // namespace ringflow
