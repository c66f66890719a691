#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ptft/ops.hpp"

namespace ptft {

/// Fixed ids for special tokens; they are recognizable without the vocab.
namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr std::size_t kCount = 5;
inline constexpr std::array<std::string_view, kCount> kNames{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

constexpr bool is_special(TokenId id) noexcept { return id >= 0 && id < static_cast<TokenId>(kCount); }
}  // namespace special

/// Marker decode() writes for an UNK id.
inline constexpr std::string_view kUnkMarker = "[UNK]";

/// ids and attention mask of one encoded text. PAD is always a suffix and
/// mask[i] == 0 exactly where ids[i] == PAD.
struct Encoding {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> attention_mask;

    std::size_t size() const noexcept { return ids.size(); }
    /// Number of non-pad positions.
    std::size_t active_length() const noexcept;
};

struct Merge {
    std::string left;
    std::string right;
    friend bool operator==(const Merge&, const Merge&) = default;
};

/// Splits text into pre-tokens: whitespace separates, every ASCII punctuation
/// character stands alone. Casing is not touched here.
std::vector<std::string> pre_tokenize(std::string_view text);

/// Splits UTF-8 text into code points (invalid bytes pass through singly).
std::vector<std::string> utf8_symbols(std::string_view text);

/// Byte-pair-encoding subword tokenizer. Immutable after construction, so one
/// instance may be shared across threads.
class Tokenizer {
public:
    /// Greedy BPE: merge the most frequent adjacent pair inside pre-tokens
    /// until the vocab reaches vocab_size or no pair occurs twice. Ties go to
    /// the lexicographically smallest (left, right).
    static Tokenizer train(std::span<const std::string> corpus, std::size_t vocab_size, bool lowercase = true);

    /// Builds a tokenizer from a base alphabet and an ordered merge table.
    /// Validates every invariant; throws InvariantError otherwise.
    static Tokenizer from_merges(std::vector<std::string> alphabet, const std::vector<Merge>& merges,
                                 bool lowercase = true);

    static Tokenizer from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    static Tokenizer load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// [CLS] body [SEP] [PAD]...; body truncated to max_length - 2.
    Encoding encode(std::string_view text, std::size_t max_length) const;
    /// Body ids only, no specials, no truncation.
    std::vector<TokenId> tokenize(std::string_view text) const;
    /// Subword strings of the body (UNK rendered as the marker).
    std::vector<std::string> segment(std::string_view text) const;

    /// Concatenates token strings; specials are dropped and UNK becomes
    /// kUnkMarker. Whitespace is a separator rather than a symbol, so word
    /// boundaries are not reconstructed. Throws on id >= vocab_size().
    std::string decode(std::span<const TokenId> ids) const;

    /// Casing normalization applied before tokenizing.
    std::string normalize(std::string_view text) const;

    std::size_t vocab_size() const noexcept { return tokens_.size(); }
    const std::string& token(TokenId id) const;
    std::optional<TokenId> id(std::string_view token) const;
    const std::vector<Merge>& merges() const noexcept { return merges_; }
    std::size_t alphabet_size() const noexcept { return alphabet_size_; }
    bool lowercase() const noexcept { return lowercase_; }

    friend bool operator==(const Tokenizer& a, const Tokenizer& b) {
        return a.tokens_ == b.tokens_ && a.merges_ == b.merges_ && a.lowercase_ == b.lowercase_;
    }

private:
    Tokenizer() = default;
    void index();
    void encode_word(const std::string& word, std::vector<TokenId>& out) const;

    struct PairHash {
        std::size_t operator()(const std::pair<TokenId, TokenId>& p) const noexcept {
            return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(static_cast<std::uint32_t>(p.first)) << 32) |
                                              static_cast<std::uint32_t>(p.second));
        }
    };

    std::vector<std::string> tokens_;  // id -> token
    std::unordered_map<std::string, TokenId> ids_;
    std::vector<Merge> merges_;
    // (left id, right id) -> (rank, merged id)
    std::unordered_map<std::pair<TokenId, TokenId>, std::pair<std::size_t, TokenId>, PairHash> merge_rank_;
    std::size_t alphabet_size_ = 0;
    bool lowercase_ = true;
};

}  // namespace ptft
