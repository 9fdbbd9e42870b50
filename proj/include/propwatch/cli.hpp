#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace propwatch {

/// Provenance record written next to every CLI artifact as `<artifact>.manifest.json`.
struct RunManifest {
    std::string subcommand;  ///< e.g. "train pair"
    std::optional<std::string> config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    std::optional<std::string> corpus_hash;
    std::string tool_version;
    std::string created_at;  ///< ISO-8601; the only field that differs between identical runs

    std::string json() const;
};

std::filesystem::path manifest_path(const std::filesystem::path& artifact);

const char* tool_version();

/// Runs one CLI invocation. `args` excludes the program name. Exit codes: 0 success,
/// 1 usage, 2 data/io/format, 3 runtime.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace propwatch
