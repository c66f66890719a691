#include "ptft/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ptft/error.hpp"
#include "ptft/io.hpp"
#include "ptft/rng.hpp"

namespace ptft {

std::string_view label_kind_name(LabelKind kind) noexcept {
    return kind == LabelKind::class_id ? "class" : "real";
}

LabelKind parse_label_kind(std::string_view name) {
    if (name == "class") {
        return LabelKind::class_id;
    }
    if (name == "real") {
        return LabelKind::real;
    }
    throw Error("label_kind must be 'class' or 'real', got '" + std::string{name} + "'");
}

std::vector<int> LabeledDataset::class_ids() const {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(static_cast<int>(r.label));
    }
    return out;
}

std::vector<double> LabeledDataset::targets() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(r.label);
    }
    return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
            if (field_started || !field.empty() || !row.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            field_started = false;
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) {
        throw Error("csv: unterminated quoted field");
    }
    if (field_started || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
        return std::string{field};
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    return out + "\"";
}

LabeledDataset dataset_from_csv(std::string_view csv_text, std::string_view text_column,
                                std::string_view label_column, LabelKind kind) {
    auto rows = parse_csv(csv_text);
    if (rows.empty()) {
        throw Error("csv: no header row");
    }
    const auto& header = rows.front();
    auto column = [&](std::string_view name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw Error("csv: missing column '" + std::string{name} + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t text_idx = column(text_column);
    const std::size_t label_idx = column(label_column);

    LabeledDataset ds;
    ds.kind = kind;
    std::map<std::string, std::size_t> class_index;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size()) {
            throw Error("csv: row " + std::to_string(r) + " has " + std::to_string(row.size()) + " fields, header has " +
                        std::to_string(header.size()));
        }
        const std::string& text = row[text_idx];
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
            ++ds.rejected_empty;
            continue;
        }
        const std::string& raw = row[label_idx];
        Record rec{text, 0.0};
        if (kind == LabelKind::class_id) {
            auto [it, inserted] = class_index.try_emplace(raw, ds.label_names.size());
            if (inserted) {
                ds.label_names.push_back(raw);
            }
            rec.label = static_cast<double>(it->second);
        } else {
            const auto first = raw.find_first_not_of(' ');
            const auto last = raw.find_last_not_of(' ');
            const std::string trimmed = first == std::string::npos ? std::string{} : raw.substr(first, last - first + 1);
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
            if (trimmed.empty() || ec != std::errc{} || ptr != trimmed.data() + trimmed.size() || !std::isfinite(value)) {
                throw Error("csv: row " + std::to_string(r) + ": cannot parse label '" + raw + "' as a real number");
            }
            rec.label = value;
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

LabeledDataset load_csv(const std::filesystem::path& path, std::string_view text_column,
                        std::string_view label_column, LabelKind kind) {
    return dataset_from_csv(read_text_file(path), text_column, label_column, kind);
}

std::size_t SplitSize::resolve(std::size_t pool) const {
    if (!(value >= 0.0)) {
        throw Error("split size must be non-negative");
    }
    std::size_t count;
    if (value < 1.0) {
        count = static_cast<std::size_t>(std::ceil(value * static_cast<double>(pool) - 1e-9));
    } else {
        if (value != std::floor(value)) {
            throw Error("split size " + std::to_string(value) + " is neither a fraction nor a whole count");
        }
        count = static_cast<std::size_t>(value);
    }
    if (count > pool) {
        throw Error("split size " + std::to_string(count) + " exceeds the " + std::to_string(pool) +
                    " available records");
    }
    return count;
}

namespace {

// Rounds the table ideal[c][j] = count[c] * sizes[j] / n so that every cell
// is the floor or ceiling of its ideal, rows sum to count[c] and columns to
// sizes[j]. Such a rounding always exists; it is found as a b-matching of
// leftover units: largest fractional parts first, then augmenting paths.
std::vector<std::vector<std::size_t>> controlled_rounding(std::span<const std::size_t> count,
                                                          std::span<const std::size_t> sizes) {
    const std::size_t rows = count.size();
    const std::size_t cols = sizes.size();
    std::size_t n = 0;
    for (std::size_t c : count) {
        n += c;
    }
    std::vector<std::vector<std::size_t>> table(rows, std::vector<std::size_t>(cols, 0));
    if (n == 0) {
        return table;
    }
    std::vector<std::vector<std::size_t>> frac(rows, std::vector<std::size_t>(cols, 0));  // numerator over n
    std::vector<std::size_t> row_left(rows, 0);
    std::vector<std::size_t> col_left(sizes.begin(), sizes.end());
    for (std::size_t r = 0; r < rows; ++r) {
        row_left[r] = count[r];
        for (std::size_t j = 0; j < cols; ++j) {
            table[r][j] = count[r] * sizes[j] / n;
            frac[r][j] = count[r] * sizes[j] % n;
            row_left[r] -= table[r][j];
            col_left[j] -= table[r][j];
        }
    }
    // extra[r][j]: this cell took its ceiling.
    std::vector<std::vector<bool>> extra(rows, std::vector<bool>(cols, false));
    struct Cell {
        std::size_t frac, row, col;
    };
    std::vector<Cell> cells;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (frac[r][j] > 0) {
                cells.push_back({frac[r][j], r, j});
            }
        }
    }
    std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.frac > b.frac; });
    for (const Cell& cell : cells) {
        if (row_left[cell.row] > 0 && col_left[cell.col] > 0) {
            extra[cell.row][cell.col] = true;
            --row_left[cell.row];
            --col_left[cell.col];
        }
    }
    // Augment: row -> column over an unused cell, column -> row over a used one.
    for (std::size_t start = 0; start < rows; ++start) {
        while (row_left[start] > 0) {
            std::vector<std::ptrdiff_t> col_from(cols, -1);  // row that reached the column
            std::vector<std::ptrdiff_t> row_from(rows, -1);  // column that reached the row
            std::vector<bool> row_seen(rows, false);
            std::vector<std::size_t> queue{start};
            row_seen[start] = true;
            std::ptrdiff_t found = -1;
            for (std::size_t q = 0; q < queue.size() && found < 0; ++q) {
                const std::size_t r = queue[q];
                for (std::size_t j = 0; j < cols && found < 0; ++j) {
                    if (frac[r][j] == 0 || extra[r][j] || col_from[j] >= 0) {
                        continue;
                    }
                    col_from[j] = static_cast<std::ptrdiff_t>(r);
                    if (col_left[j] > 0) {
                        found = static_cast<std::ptrdiff_t>(j);
                        break;
                    }
                    for (std::size_t r2 = 0; r2 < rows; ++r2) {
                        if (extra[r2][j] && !row_seen[r2]) {
                            row_seen[r2] = true;
                            row_from[r2] = static_cast<std::ptrdiff_t>(j);
                            queue.push_back(r2);
                        }
                    }
                }
            }
            if (found < 0) {
                throw InvariantError("stratified split: no consistent allocation");  // unreachable
            }
            auto j = static_cast<std::size_t>(found);
            --col_left[j];
            --row_left[start];
            while (true) {
                const auto r = static_cast<std::size_t>(col_from[j]);
                extra[r][j] = true;
                if (r == start) {
                    break;
                }
                const auto prev = static_cast<std::size_t>(row_from[r]);
                extra[r][prev] = false;
                j = prev;
            }
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) {
            table[r][j] += extra[r][j] ? 1 : 0;
        }
    }
    return table;
}

// Deals `pool` into parts of the given sizes. Stratified: each class's
// members are shuffled and dealt by the rounded allocation, so every class
// is within one record of its proportional share in every part.
std::vector<std::vector<std::size_t>> deal(const LabeledDataset& ds, std::span<const std::size_t> pool,
                                           std::span<const std::size_t> sizes, Rng& rng, bool stratify) {
    std::vector<std::vector<std::size_t>> parts(sizes.size());
    if (!stratify) {
        std::vector<std::size_t> order(pool.begin(), pool.end());
        rng.shuffle(std::span<std::size_t>{order});
        std::size_t at = 0;
        for (std::size_t j = 0; j < sizes.size(); ++j) {
            parts[j].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                            order.begin() + static_cast<std::ptrdiff_t>(at + sizes[j]));
            at += sizes[j];
        }
    } else {
        if (ds.kind != LabelKind::class_id) {
            throw Error("stratified split requires class labels");
        }
        std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
        for (std::size_t idx : pool) {
            by_class.at(static_cast<std::size_t>(ds.records[idx].label)).push_back(idx);
        }
        const auto nonempty = static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(),
                                                                     [](std::size_t s) { return s > 0; }));
        std::vector<std::size_t> count;
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            const std::size_t k = by_class[c].size();
            if (k > 0 && k < nonempty) {
                throw Error("stratified split: class '" + ds.label_names[c] + "' has " + std::to_string(k) +
                            " sample(s), fewer than the " + std::to_string(nonempty) + " non-empty parts");
            }
            count.push_back(k);
        }
        const auto table = controlled_rounding(count, sizes);
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            auto& members = by_class[c];
            rng.shuffle(std::span<std::size_t>{members});
            std::size_t at = 0;
            for (std::size_t j = 0; j < sizes.size(); ++j) {
                parts[j].insert(parts[j].end(), members.begin() + static_cast<std::ptrdiff_t>(at),
                                members.begin() + static_cast<std::ptrdiff_t>(at + table[c][j]));
                at += table[c][j];
            }
        }
    }
    for (auto& part : parts) {
        std::sort(part.begin(), part.end());
    }
    return parts;
}

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_pool(const LabeledDataset& ds,
                                                                         std::span<const std::size_t> pool,
                                                                         std::size_t held_out_count,
                                                                         std::uint64_t seed, bool stratify) {
    if (held_out_count > pool.size()) {
        throw Error("split size " + std::to_string(held_out_count) + " exceeds the " + std::to_string(pool.size()) +
                    " available records");
    }
    Rng rng{seed};
    const std::vector<std::size_t> sizes{held_out_count, pool.size() - held_out_count};
    auto parts = deal(ds, pool, sizes, rng, stratify);
    return {std::move(parts[1]), std::move(parts[0])};
}

SplitIndices split(const LabeledDataset& ds, SplitSize test_size, SplitSize dev_size, std::uint64_t seed,
                   bool stratify) {
    const std::size_t n = ds.size();
    const std::size_t test_count = test_size.resolve(n);
    const std::size_t dev_count = dev_size.resolve(n - test_count);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    // Test, dev and train are allocated together against the global class
    // counts, so no part inherits another part's rounding.
    Rng rng = Rng::derive(seed, 1);
    const std::vector<std::size_t> sizes{test_count, dev_count, n - test_count - dev_count};
    auto parts = deal(ds, all, sizes, rng, stratify);
    return {std::move(parts[2]), std::move(parts[1]), std::move(parts[0])};
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices) {
    LabeledDataset out;
    out.kind = ds.kind;
    out.label_names = ds.label_names;
    out.records.reserve(indices.size());
    for (std::size_t i : indices) {
        out.records.push_back(ds.records.at(i));
    }
    return out;
}

nlohmann::json split_manifest(const SplitIndices& split) {
    return {{"train", split.train}, {"dev", split.dev}, {"test", split.test}};
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, bool shuffle,
                                                   std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size == 0) {
        throw Error("batch size must be at least 1");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        Rng rng = Rng::derive(seed, epoch);
        rng.shuffle(std::span<std::size_t>{order});
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

EncodedDataset encode_dataset(const Tokenizer& tokenizer, const LabeledDataset& ds, std::size_t max_length) {
    EncodedDataset out;
    out.kind = ds.kind;
    out.num_classes = ds.num_classes();
    out.inputs.reserve(ds.size());
    out.labels.reserve(ds.size());
    for (const auto& r : ds.records) {
        out.inputs.push_back(tokenizer.encode(r.text, max_length));
        out.labels.push_back(r.label);
    }
    return out;
}

}  // namespace ptft
