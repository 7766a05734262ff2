#pragma once

#include <string>
#include <utility>
#include <vector>

namespace ringflow {

// Writes "<artifact>.manifest" next to the artifact: key-value text with the
// config hash, seed, tool version and a creation timestamp. Written
// atomically after the artifact itself.
void write_manifest(
    const std::string& artifact_path,
    const std::vector<std::pair<std::string, std::string>>& entries);

}  // namespace ringflow
