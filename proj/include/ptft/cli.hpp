#pragma once

// Command-line front end. Every command reads one JSON config, applies
// --set overrides, rejects unknown keys, and writes its artifacts under
// output_dir. run() never throws: failures become a one-line diagnostic on
// `err` and a nonzero status.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ptft::cli {

inline constexpr std::string_view kVersion = "0.1.0";

/// args excludes the program name: {"finetune", "--config", "f.json", ...}.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// Default config document of a command (every accepted key present).
nlohmann::json default_config(std::string_view command);

/// Recursively overlays `user` on `defaults`. A key absent from the defaults
/// is an error naming its dotted path; arrays and scalars replace wholesale.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& user);

/// Applies "a.b.c=value". The value is parsed as JSON when it can be,
/// otherwise taken as a string. Intermediate objects are created.
void apply_override(nlohmann::json& doc, std::string_view assignment);

struct ReportTable {
    std::vector<std::string> metrics;  // column order
    std::vector<std::string> lower_is_better;
    nlohmann::json json;               // machine-readable form
    std::string text;                  // aligned table
};

/// Compares the metrics.json of each run directory. Throws when the runs do
/// not share one metric set, naming the difference.
ReportTable build_report(std::span<const std::filesystem::path> runs);

}  // namespace ptft::cli
