#pragma once

#include <string>
#include <string_view>

namespace csmt {

std::string read_file(const std::string& path);

/// Writes to `path.tmp` and renames over `path`.
void write_file_atomic(const std::string& path, std::string_view content);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

}  // namespace csmt
