#pragma once

#include <string>

#include "ringflow/idm.hpp"

namespace ringflow {

// Tabular text dataset: commented header carrying the collection metadata
// and per-run speed-limit profiles, then one row per (run, t, vehicle) with
// columns run, t, vehicle, theta, v, u, v_limit. Doubles round-trip exactly.
void write_dataset(const Dataset& dataset, const std::string& path);

Dataset read_dataset(const std::string& path);

}  // namespace ringflow
