#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace propwatch {

/// Directory holding the bundled word lists. `PROPWATCH_DATA_DIR` overrides the
/// compiled-in default.
std::filesystem::path data_dir();

/// Non-empty, whitespace-trimmed lines; lines starting with '#' are skipped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace propwatch
