#pragma once

// Checkpoint file layout:
//
//   u64 little-endian  header length in bytes
//   header             UTF-8 JSON: format tag, version, model config,
//                      [{name, shape}] in body order, free-form metadata
//   body               every parameter's values as little-endian IEEE-754
//                      binary64, concatenated in header order
//
// Save/load round-trips bit-exactly.

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ptft/model.hpp"

namespace ptft {

inline constexpr std::string_view kCheckpointFormat = "ptft-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    Parameters params;
    /// Tokenizer reference, head size, label names, epoch, ...
    nlohmann::json metadata = nlohmann::json::object();
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Atomic (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ptft
