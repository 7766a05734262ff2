#include "ringflow/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>

#include "ringflow/io_util.hpp"
#include "ringflow/version.hpp"

namespace ringflow {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

}  // namespace

void write_manifest(
    const std::string& artifact_path,
    const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ostringstream out;
  out << "artifact = " << artifact_path << "\n";
  out << "tool_version = " << kToolVersion << "\n";
  out << "created = " << utc_now() << "\n";
  for (const auto& [key, value] : entries)
    out << key << " = " << value << "\n";
  atomic_write_file(artifact_path + ".manifest", out.str());
}

}  // namespace ringflow
