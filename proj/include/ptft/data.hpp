#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ptft/tokenizer.hpp"

namespace ptft {

enum class LabelKind { class_id, real };

std::string_view label_kind_name(LabelKind kind) noexcept;
LabelKind parse_label_kind(std::string_view name);

struct Record {
    std::string text;
    double label = 0.0;  // class id (integral) or real target
};

/// Homogeneous (text, label) records. Class ids are contiguous 0..C-1 in
/// first-appearance order; label_names maps id -> original string.
struct LabeledDataset {
    std::vector<Record> records;
    LabelKind kind = LabelKind::class_id;
    std::vector<std::string> label_names;
    std::size_t rejected_empty = 0;

    std::size_t size() const noexcept { return records.size(); }
    std::size_t num_classes() const noexcept { return label_names.size(); }
    std::vector<int> class_ids() const;
    std::vector<double> targets() const;
};

/// RFC 4180 parsing: quoted fields, "" escapes, embedded commas and line
/// breaks, CRLF or LF row ends. Returns rows of fields (header included).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
/// Quotes fields that need it.
std::string csv_escape(std::string_view field);

/// Builds a dataset from CSV text. Missing column -> error naming it;
/// unparseable real label -> error with the 1-based data row number. Rows
/// with empty text are dropped and counted in rejected_empty.
LabeledDataset dataset_from_csv(std::string_view csv_text, std::string_view text_column,
                                std::string_view label_column, LabelKind kind);
LabeledDataset load_csv(const std::filesystem::path& path, std::string_view text_column,
                        std::string_view label_column, LabelKind kind);

/// Values < 1 are fractions of the pool (rounded up), values >= 1 counts.
struct SplitSize {
    double value = 0.0;
    std::size_t resolve(std::size_t pool) const;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> dev;
    std::vector<std::size_t> test;
};

/// test_size is resolved against the whole dataset, dev_size against what
/// remains. With stratify, test, dev and train are allocated jointly: every
/// class gets the floor or ceiling of its proportional share of each part.
/// Each part's indices are returned in ascending order.
SplitIndices split(const LabeledDataset& ds, SplitSize test_size, SplitSize dev_size, std::uint64_t seed,
                   bool stratify);

/// Two-way split of `pool` (indices into ds): returns (kept, held_out).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_pool(const LabeledDataset& ds,
                                                                         std::span<const std::size_t> pool,
                                                                         std::size_t held_out_count,
                                                                         std::uint64_t seed, bool stratify);

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices);
nlohmann::json split_manifest(const SplitIndices& split);

/// Index batches over n items; the permutation is a pure function of
/// (seed, epoch). The last batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, bool shuffle,
                                                   std::uint64_t seed, std::uint64_t epoch);

/// Tokenized dataset ready for the model.
struct EncodedDataset {
    std::vector<Encoding> inputs;
    std::vector<double> labels;
    LabelKind kind = LabelKind::class_id;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return inputs.size(); }
};

EncodedDataset encode_dataset(const Tokenizer& tokenizer, const LabeledDataset& ds, std::size_t max_length);

}  // namespace ptft
