#include "ptft/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "ptft/error.hpp"
#include "ptft/io.hpp"

namespace ptft {
namespace {

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool is_punct(char c) noexcept {
    const auto u = static_cast<unsigned char>(c);
    return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) || (u >= 123 && u <= 126);
}

std::size_t utf8_length(unsigned char lead) noexcept {
    if (lead < 0x80) {
        return 1;
    }
    if ((lead >> 5) == 0x6) {
        return 2;
    }
    if ((lead >> 4) == 0xe) {
        return 3;
    }
    if ((lead >> 3) == 0x1e) {
        return 4;
    }
    return 1;
}

bool is_special_name(std::string_view s) {
    return std::find(special::kNames.begin(), special::kNames.end(), s) != special::kNames.end();
}

// Applies one merge to every left-to-right occurrence in a symbol sequence.
void apply_merge(std::vector<TokenId>& symbols, TokenId left, TokenId right, TokenId merged) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
            symbols[out++] = merged;
            ++i;
        } else {
            symbols[out++] = symbols[i];
        }
    }
    symbols.resize(out);
}

}  // namespace

std::size_t Encoding::active_length() const noexcept {
    return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), std::uint8_t{1}));
}

std::vector<std::string> utf8_symbols(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
        if (i + len > text.size()) {
            len = 1;
        }
        out.emplace_back(text.substr(i, len));
        i += len;
    }
    return out;
}

std::vector<std::string> pre_tokenize(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char c : text) {
        if (is_space(c)) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        } else if (is_punct(c)) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
            words.emplace_back(1, c);
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    return words;
}

std::string Tokenizer::normalize(std::string_view text) const {
    std::string out{text};
    if (lowercase_) {
        // ASCII only; no Unicode case folding or normalization forms.
        for (char& c : out) {
            if (c >= 'A' && c <= 'Z') {
                c = static_cast<char>(c - 'A' + 'a');
            }
        }
    }
    return out;
}

Tokenizer Tokenizer::train(std::span<const std::string> corpus, std::size_t vocab_size, bool lowercase) {
    if (corpus.empty()) {
        throw Error("train_bpe: empty corpus");
    }
    Tokenizer tok;
    tok.lowercase_ = lowercase;

    std::map<std::string, std::size_t> word_counts;
    std::set<std::string> alphabet;
    for (const auto& text : corpus) {
        for (auto& word : pre_tokenize(tok.normalize(text))) {
            for (auto& sym : utf8_symbols(word)) {
                alphabet.insert(std::move(sym));
            }
            ++word_counts[std::move(word)];
        }
    }
    if (alphabet.empty()) {
        throw Error("train_bpe: corpus contains no symbols");
    }
    const std::size_t minimum = special::kCount + alphabet.size();
    if (vocab_size < minimum) {
        throw Error("train_bpe: vocab_size " + std::to_string(vocab_size) + " below minimum " +
                    std::to_string(minimum) + " (specials + base alphabet)");
    }

    for (auto name : special::kNames) {
        tok.tokens_.emplace_back(name);
    }
    tok.tokens_.insert(tok.tokens_.end(), alphabet.begin(), alphabet.end());
    tok.alphabet_size_ = alphabet.size();
    tok.index();

    struct Word {
        std::vector<TokenId> symbols;
        std::size_t count;
    };
    std::vector<Word> words;
    words.reserve(word_counts.size());
    for (const auto& [text, count] : word_counts) {
        Word w{{}, count};
        for (const auto& sym : utf8_symbols(text)) {
            w.symbols.push_back(tok.ids_.at(sym));
        }
        words.push_back(std::move(w));
    }

    while (tok.tokens_.size() < vocab_size) {
        std::unordered_map<std::pair<TokenId, TokenId>, std::size_t, PairHash> pair_counts;
        for (const auto& w : words) {
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                pair_counts[{w.symbols[i], w.symbols[i + 1]}] += w.count;
            }
        }
        const std::pair<TokenId, TokenId>* best = nullptr;
        std::size_t best_count = 0;
        for (const auto& [pair, count] : pair_counts) {
            if (count > best_count) {
                best = &pair;
                best_count = count;
            } else if (count == best_count && best != nullptr) {
                const auto& a = tok.tokens_;
                const auto key = std::tie(a[static_cast<std::size_t>(pair.first)], a[static_cast<std::size_t>(pair.second)]);
                const auto cur = std::tie(a[static_cast<std::size_t>(best->first)], a[static_cast<std::size_t>(best->second)]);
                if (key < cur) {
                    best = &pair;
                }
            }
        }
        if (best == nullptr || best_count < 2) {
            break;
        }
        const auto [left, right] = *best;
        std::string merged_text = tok.tokens_[static_cast<std::size_t>(left)] + tok.tokens_[static_cast<std::size_t>(right)];
        TokenId merged;
        if (auto it = tok.ids_.find(merged_text); it != tok.ids_.end()) {
            merged = it->second;
        } else {
            merged = static_cast<TokenId>(tok.tokens_.size());
            tok.tokens_.push_back(merged_text);
            tok.ids_.emplace(merged_text, merged);
        }
        tok.merge_rank_[{left, right}] = {tok.merges_.size(), merged};
        tok.merges_.push_back({tok.tokens_[static_cast<std::size_t>(left)], tok.tokens_[static_cast<std::size_t>(right)]});
        for (auto& w : words) {
            apply_merge(w.symbols, left, right, merged);
        }
    }
    return tok;
}

Tokenizer Tokenizer::from_merges(std::vector<std::string> alphabet, const std::vector<Merge>& merges, bool lowercase) {
    Tokenizer tok;
    tok.lowercase_ = lowercase;
    std::sort(alphabet.begin(), alphabet.end());
    if (std::adjacent_find(alphabet.begin(), alphabet.end()) != alphabet.end()) {
        throw InvariantError("tokenizer: duplicate symbol in base alphabet");
    }
    for (auto name : special::kNames) {
        tok.tokens_.emplace_back(name);
    }
    for (auto& sym : alphabet) {
        if (is_special_name(sym) || utf8_symbols(sym).size() != 1) {
            throw InvariantError("tokenizer: base symbol '" + sym + "' is not a single non-special character");
        }
        tok.tokens_.push_back(std::move(sym));
    }
    tok.alphabet_size_ = alphabet.size();
    tok.index();
    for (const auto& m : merges) {
        if (is_special_name(m.left) || is_special_name(m.right)) {
            throw InvariantError("tokenizer: special token inside merge '" + m.left + " " + m.right + "'");
        }
        auto l = tok.ids_.find(m.left);
        auto r = tok.ids_.find(m.right);
        if (l == tok.ids_.end() || r == tok.ids_.end()) {
            throw InvariantError("tokenizer: merge '" + m.left + " " + m.right +
                                 "' references a token not yet in the vocab");
        }
        const std::string merged_text = m.left + m.right;
        TokenId merged;
        if (auto it = tok.ids_.find(merged_text); it != tok.ids_.end()) {
            merged = it->second;
        } else {
            merged = static_cast<TokenId>(tok.tokens_.size());
            tok.tokens_.push_back(merged_text);
            tok.ids_.emplace(merged_text, merged);
        }
        if (tok.merge_rank_.contains({l->second, r->second})) {
            throw InvariantError("tokenizer: duplicate merge '" + m.left + " " + m.right + "'");
        }
        tok.merge_rank_[{l->second, r->second}] = {tok.merges_.size(), merged};
        tok.merges_.push_back(m);
    }
    return tok;
}

void Tokenizer::index() {
    ids_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
            throw InvariantError("tokenizer: token '" + tokens_[i] + "' has two ids");
        }
    }
}

void Tokenizer::encode_word(const std::string& word, std::vector<TokenId>& out) const {
    std::vector<TokenId> symbols;
    for (const auto& sym : utf8_symbols(word)) {
        auto it = ids_.find(sym);
        // Only base-alphabet symbols are eligible; a multi-char token cannot
        // match a single code point anyway, but specials must never match.
        if (it == ids_.end() || special::is_special(it->second)) {
            symbols.push_back(special::kUnk);
        } else {
            symbols.push_back(it->second);
        }
    }
    while (symbols.size() > 1) {
        std::size_t best_rank = SIZE_MAX;
        TokenId best_left = 0;
        TokenId best_right = 0;
        TokenId best_merged = 0;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
            if (it != merge_rank_.end() && it->second.first < best_rank) {
                best_rank = it->second.first;
                best_left = symbols[i];
                best_right = symbols[i + 1];
                best_merged = it->second.second;
            }
        }
        if (best_rank == SIZE_MAX) {
            break;
        }
        apply_merge(symbols, best_left, best_right, best_merged);
    }
    out.insert(out.end(), symbols.begin(), symbols.end());
}

std::vector<TokenId> Tokenizer::tokenize(std::string_view text) const {
    std::vector<TokenId> out;
    for (const auto& word : pre_tokenize(normalize(text))) {
        encode_word(word, out);
    }
    return out;
}

std::vector<std::string> Tokenizer::segment(std::string_view text) const {
    std::vector<std::string> out;
    for (TokenId id : tokenize(text)) {
        out.push_back(id == special::kUnk ? std::string{kUnkMarker} : tokens_[static_cast<std::size_t>(id)]);
    }
    return out;
}

Encoding Tokenizer::encode(std::string_view text, std::size_t max_length) const {
    if (max_length < 2) {
        throw Error("encode: max_length must be at least 2, got " + std::to_string(max_length));
    }
    std::vector<TokenId> body = tokenize(text);
    if (body.size() > max_length - 2) {
        body.resize(max_length - 2);
    }
    Encoding enc;
    enc.ids.reserve(max_length);
    enc.ids.push_back(special::kCls);
    enc.ids.insert(enc.ids.end(), body.begin(), body.end());
    enc.ids.push_back(special::kSep);
    enc.attention_mask.assign(enc.ids.size(), 1);
    enc.ids.resize(max_length, special::kPad);
    enc.attention_mask.resize(max_length, 0);
    return enc;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
            throw Error("decode: id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(tokens_.size()));
        }
        if (id == special::kUnk) {
            out += kUnkMarker;
        } else if (!special::is_special(id)) {
            out += tokens_[static_cast<std::size_t>(id)];
        }
    }
    return out;
}

const std::string& Tokenizer::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw Error("token: id " + std::to_string(id) + " outside vocabulary");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Tokenizer::id(std::string_view token) const {
    auto it = ids_.find(std::string{token});
    if (it == ids_.end()) {
        return std::nullopt;
    }
    return it->second;
}

nlohmann::json Tokenizer::to_json() const {
    nlohmann::json vocab = nlohmann::json::object();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        vocab[tokens_[i]] = i;
    }
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& m : merges_) {
        merges.push_back(m.left + " " + m.right);
    }
    nlohmann::json specials = nlohmann::json::object();
    for (std::size_t i = 0; i < special::kCount; ++i) {
        specials[std::string{special::kNames[i]}] = i;
    }
    return {{"vocab", vocab},
            {"merges", merges},
            {"specials", specials},
            {"casing", lowercase_ ? "lowercase" : "preserve"}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json& doc) {
    for (const char* key : {"vocab", "merges", "specials", "casing"}) {
        if (!doc.contains(key)) {
            throw InvariantError(std::string{"tokenizer file: missing key '"} + key + "'");
        }
    }
    const std::string casing = doc.at("casing").get<std::string>();
    if (casing != "lowercase" && casing != "preserve") {
        throw InvariantError("tokenizer file: casing must be 'lowercase' or 'preserve'");
    }
    const auto& specials = doc.at("specials");
    for (std::size_t i = 0; i < special::kCount; ++i) {
        const std::string name{special::kNames[i]};
        if (!specials.contains(name) || specials.at(name).get<std::size_t>() != i) {
            throw InvariantError("tokenizer file: special " + name + " must have id " + std::to_string(i));
        }
    }

    const auto& vocab = doc.at("vocab");
    std::vector<std::string> by_id(vocab.size());
    std::vector<bool> seen(vocab.size(), false);
    for (const auto& [token, value] : vocab.items()) {
        const auto id = value.get<std::size_t>();
        if (id >= by_id.size() || seen[id]) {
            throw InvariantError("tokenizer file: vocab ids are not contiguous 0..V-1 (token '" + token + "')");
        }
        seen[id] = true;
        by_id[id] = token;
    }
    for (std::size_t i = 0; i < special::kCount; ++i) {
        if (i >= by_id.size() || by_id[i] != special::kNames[i]) {
            throw InvariantError("tokenizer file: vocab id " + std::to_string(i) + " must be " +
                                 std::string{special::kNames[i]});
        }
    }

    std::vector<Merge> merges;
    for (const auto& entry : doc.at("merges")) {
        const auto text = entry.get<std::string>();
        const auto space = text.find(' ');
        if (space == std::string::npos || space == 0 || space + 1 >= text.size() ||
            text.find(' ', space + 1) != std::string::npos) {
            throw InvariantError("tokenizer file: malformed merge '" + text + "'");
        }
        merges.push_back({text.substr(0, space), text.substr(space + 1)});
    }

    // The base alphabet is the block of single-symbol tokens right after the
    // specials; merged tokens follow in merge order.
    std::vector<std::string> alphabet;
    std::size_t i = special::kCount;
    while (i < by_id.size() && utf8_symbols(by_id[i]).size() == 1) {
        alphabet.push_back(by_id[i]);
        ++i;
    }
    Tokenizer tok = from_merges(alphabet, merges, casing == "lowercase");
    if (tok.tokens_ != by_id) {
        throw InvariantError("tokenizer file: vocab does not match the alphabet plus merge table");
    }
    return tok;
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
    return from_json(read_json_file(path));
}

void Tokenizer::save(const std::filesystem::path& path) const {
    write_text_atomic(path, to_json().dump(2) + "\n");
}

}  // namespace ptft
