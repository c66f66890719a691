#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

namespace ptft {

/// Whole file as bytes. Throws Error naming the path when it cannot be read.
std::string read_text_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Writes to "<path>.tmp" and renames over path, creating parent directories.
void write_text_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace ptft
