#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace edct {

/// Whole-file binary read. Throws Error(io_failure).
std::string read_file(const std::filesystem::path& path);

/// Writes to `<path>.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace edct
