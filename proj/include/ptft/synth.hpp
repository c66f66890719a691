#pragma once

// Seeded generators for the bundled toy datasets. Same (size, seed) gives
// the same bytes everywhere.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "ptft/data.hpp"

namespace ptft::synth {

/// 15 topics, each with its own keyword pool mixed into shared filler words.
/// Class frequencies are deliberately uneven.
LabeledDataset topics(std::size_t rows, std::uint64_t seed);

/// Texts built from a weighted mood lexicon; label = clamp(5 + 0.6 * sum of
/// word weights + normal(0, 0.5), 1, 9), rounded to 3 decimals.
LabeledDataset anxiety(std::size_t rows, std::uint64_t seed);

/// Filler sentences holding exactly one "alpha" and one "beta"; label
/// "before" when alpha comes first, "after" otherwise. Balanced.
LabeledDataset order_task(std::size_t rows, std::uint64_t seed);

/// Unlabeled text from the same generator as order_task, one sentence per line.
std::string order_corpus(std::size_t sentences, std::uint64_t seed);

/// Templated English-like prose of roughly `bytes` bytes.
std::string prose_corpus(std::size_t bytes, std::uint64_t seed);

/// Two-column CSV (header included) with the dataset's decoded labels.
std::string to_csv(const LabeledDataset& ds, std::string_view text_column = "text",
                   std::string_view label_column = "label");

}  // namespace ptft::synth
