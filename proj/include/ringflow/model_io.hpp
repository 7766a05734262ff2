#pragma once

#include <string>

#include "ringflow/generator.hpp"
#include "ringflow/policy.hpp"

namespace ringflow {

// Versioned binary model container shared by both roles: magic, role tag,
// the descriptor as a flat key-value text block, role metadata, then every
// parameter tensor as a length-prefixed little-endian double array. Loading
// restores bit-identical parameters.
void save_generator(const GeneratorModel& model, const std::string& path);
void save_policy(const PolicyModel& model, const std::string& path);

GeneratorModel load_generator(const std::string& path);
PolicyModel load_policy(const std::string& path);

// Role tag without loading the payload.
std::string model_role(const std::string& path);

// Snapshot text form: one vehicle per line (index, theta, v, observed flag).
std::string snapshot_to_text(const Snapshot& snapshot);
Snapshot snapshot_from_text(const std::string& text);

}  // namespace ringflow
