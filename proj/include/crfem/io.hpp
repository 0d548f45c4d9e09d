#pragma once

#include <filesystem>
#include <string>

namespace crfem {

/// Writes `content` to `<path>.tmp` and renames it over `path`, so readers
/// never observe a partial file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double ("%.17g").
std::string format_double(double value);

} // namespace crfem
