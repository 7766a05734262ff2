#pragma once

#include <string>

namespace ringflow {

// Formats a double so that parsing returns the identical bits.
std::string format_double(double x);

// Whole-file read; throws std::runtime_error with the path on failure.
std::string read_text_file(const std::string& path);

// Write-temp-then-rename so readers never see partial artifacts.
void atomic_write_file(const std::string& path, const std::string& content);

bool file_exists(const std::string& path);

}  // namespace ringflow
