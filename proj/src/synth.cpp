#include "ptft/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <vector>

#include "ptft/error.hpp"
#include "ptft/rng.hpp"

namespace ptft::synth {
namespace {

template <typename T, std::size_t N>
const T& pick(Rng& rng, const std::array<T, N>& items) {
    return items[static_cast<std::size_t>(rng.below(N))];
}

const std::array<std::string_view, 40> kFiller = {
    "the",   "a",     "of",    "and",   "to",    "in",     "is",     "that",  "for",   "it",
    "with",  "as",    "on",    "this",  "was",   "are",    "by",     "from",  "at",    "an",
    "they",  "we",    "about", "more",  "some",  "very",   "people", "time",  "year",  "new",
    "said",  "also",  "after", "many",  "other", "report", "today",  "while", "often", "still"};

struct Topic {
    std::string_view name;
    std::array<std::string_view, 8> keywords;
};

const std::array<Topic, 15> kTopics = {{
    {"economy", {"market", "inflation", "tariff", "budget", "trade", "prices", "bank", "growth"}},
    {"health", {"vaccine", "hospital", "virus", "doctors", "patients", "infection", "clinic", "masks"}},
    {"migration", {"border", "refugees", "asylum", "migrants", "visa", "camps", "deportation", "quota"}},
    {"climate", {"emissions", "carbon", "warming", "drought", "glacier", "renewable", "flood", "heatwave"}},
    {"security", {"army", "missile", "troops", "defense", "attack", "soldiers", "alliance", "drone"}},
    {"education", {"school", "teachers", "students", "exam", "university", "classroom", "tuition", "degree"}},
    {"technology", {"software", "chips", "internet", "data", "algorithm", "startup", "robot", "cloud"}},
    {"energy", {"oil", "pipeline", "gas", "grid", "nuclear", "solar", "fuel", "turbine"}},
    {"elections", {"ballot", "voters", "campaign", "candidate", "polls", "parliament", "coalition", "turnout"}},
    {"justice", {"court", "judge", "trial", "verdict", "lawyers", "appeal", "sentence", "prosecutor"}},
    {"diplomacy", {"summit", "treaty", "embassy", "envoy", "sanctions", "minister", "talks", "accord"}},
    {"housing", {"rent", "mortgage", "tenants", "apartments", "landlord", "construction", "zoning", "eviction"}},
    {"transport", {"railway", "airport", "traffic", "highway", "trains", "flights", "commuters", "tunnel"}},
    {"agriculture", {"farmers", "harvest", "crops", "wheat", "cattle", "fertilizer", "irrigation", "soil"}},
    {"culture", {"museum", "festival", "artists", "film", "theatre", "novel", "concert", "gallery"}},
}};

// Uneven class weights so stratification has something to preserve.
const std::array<double, 15> kTopicWeights = {14, 12, 11, 10, 9, 8, 7, 7, 6, 5, 4, 3, 2, 1.5, 1};

std::size_t sample_weighted(Rng& rng, std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    double r = rng.uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        r -= weights[i];
        if (r < 0.0) {
            return i;
        }
    }
    return weights.size() - 1;
}

std::string join(const std::vector<std::string_view>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) {
            out.push_back(' ');
        }
        out += words[i];
    }
    return out;
}

struct MoodWord {
    std::string_view word;
    double weight;
};

const std::array<MoodWord, 24> kMood = {{
    {"panic", 3.0},     {"terrified", 3.0}, {"dread", 2.5},    {"afraid", 2.0},   {"worried", 2.0},
    {"nervous", 1.5},   {"restless", 1.5},  {"tense", 1.0},    {"uneasy", 1.0},   {"unsure", 0.5},
    {"tired", 0.5},     {"busy", 0.0},      {"normal", 0.0},   {"okay", -0.5},    {"fine", -0.5},
    {"steady", -1.0},   {"rested", -1.0},   {"relaxed", -1.5}, {"calm", -1.5},    {"confident", -2.0},
    {"safe", -2.0},     {"peaceful", -2.5}, {"serene", -2.5},  {"carefree", -3.0},
}};

const std::array<std::string_view, 20> kDiaryFiller = {
    "i",    "feel", "today", "at",   "work", "and",  "home", "this", "week", "my",
    "with", "the",  "day",   "felt", "so",   "very", "was",  "about", "it",  "lately"};

const std::array<std::string_view, 16> kOrderFiller = {
    "red", "green", "blue", "cat", "dog", "tree", "sun", "rock",
    "fish", "bird", "road", "lamp", "door", "hill", "cup", "star"};

std::pair<std::string, bool> order_sentence(Rng& rng, bool alpha_first) {
    const std::size_t len = 4 + static_cast<std::size_t>(rng.below(7));  // 4..10 words
    std::vector<std::string_view> words(len);
    for (auto& w : words) {
        w = pick(rng, kOrderFiller);
    }
    std::size_t i = static_cast<std::size_t>(rng.below(len));
    std::size_t j = static_cast<std::size_t>(rng.below(len - 1));
    if (j >= i) {
        ++j;
    }
    const std::size_t first = std::min(i, j);
    const std::size_t second = std::max(i, j);
    words[first] = alpha_first ? "alpha" : "beta";
    words[second] = alpha_first ? "beta" : "alpha";
    return {join(words), alpha_first};
}

// Prose: each character has habitual verbs, objects and a place, so words
// inside a sentence predict one another.
struct Character {
    std::string_view subject;
    std::array<std::string_view, 2> verbs;
    std::array<std::string_view, 3> objects;
    std::string_view place;
};

const std::array<Character, 12> kCharacters = {{
    {"the baker", {"baked", "sold"}, {"fresh bread", "sweet cakes", "warm rolls"}, "in the bakery"},
    {"the farmer", {"planted", "harvested"}, {"the wheat", "the corn", "the potatoes"}, "in the field"},
    {"the sailor", {"repaired", "sailed"}, {"the old boat", "the small ship", "the torn sail"}, "at the harbor"},
    {"the teacher", {"explained", "graded"}, {"the lesson", "the exams", "the homework"}, "at the school"},
    {"the doctor", {"examined", "treated"}, {"the patient", "the wound", "the fever"}, "at the hospital"},
    {"the painter", {"painted", "sketched"}, {"the portrait", "the landscape", "the mural"}, "in the studio"},
    {"the fisherman", {"caught", "cleaned"}, {"a large fish", "the nets", "some crabs"}, "by the river"},
    {"the king", {"ruled", "visited"}, {"the kingdom", "the castle", "the army"}, "in the palace"},
    {"the gardener", {"watered", "pruned"}, {"the roses", "the hedges", "the apple trees"}, "in the garden"},
    {"the miner", {"dug", "found"}, {"the coal", "the gold", "a deep tunnel"}, "under the mountain"},
    {"the cook", {"cooked", "tasted"}, {"the soup", "the stew", "the sauce"}, "in the kitchen"},
    {"the pilot", {"flew", "landed"}, {"the plane", "the jet", "the glider"}, "at the airport"},
}};

const std::array<std::string_view, 8> kTimes = {"in the morning", "at night",      "on monday",  "after dinner",
                                                "every summer",   "last week",     "at noon",    "in the winter"};
}  // namespace

LabeledDataset topics(std::size_t rows, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x746f70ULL);
    LabeledDataset ds;
    ds.kind = LabelKind::class_id;
    for (const auto& t : kTopics) {
        ds.label_names.emplace_back(t.name);
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t c = sample_weighted(rng, kTopicWeights);
        const std::size_t len = 8 + static_cast<std::size_t>(rng.below(9));
        std::vector<std::string_view> words;
        for (std::size_t k = 0; k < len; ++k) {
            if (rng.bernoulli(0.35)) {
                words.push_back(pick(rng, kTopics[c].keywords));
            } else if (rng.bernoulli(0.1)) {
                // Cross-topic noise keeps the task from being trivially separable.
                words.push_back(pick(rng, pick(rng, kTopics).keywords));
            } else {
                words.push_back(pick(rng, kFiller));
            }
        }
        ds.records.push_back({join(words), static_cast<double>(c)});
    }
    return ds;
}

LabeledDataset anxiety(std::size_t rows, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x616e78ULL);
    LabeledDataset ds;
    ds.kind = LabelKind::real;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t len = 8 + static_cast<std::size_t>(rng.below(8));
        std::vector<std::string_view> words;
        double score = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            if (rng.bernoulli(0.3)) {
                const auto& m = pick(rng, kMood);
                words.push_back(m.word);
                score += m.weight;
            } else {
                words.push_back(pick(rng, kDiaryFiller));
            }
        }
        double label = std::clamp(5.0 + 0.6 * score + rng.normal(0.0, 0.5), 1.0, 9.0);
        label = std::round(label * 1000.0) / 1000.0;
        ds.records.push_back({join(words), label});
    }
    return ds;
}

LabeledDataset order_task(std::size_t rows, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x6f7264ULL);
    LabeledDataset ds;
    ds.kind = LabelKind::class_id;
    ds.label_names = {"before", "after"};
    for (std::size_t r = 0; r < rows; ++r) {
        auto [text, alpha_first] = order_sentence(rng, r % 2 == 0);
        ds.records.push_back({std::move(text), alpha_first ? 0.0 : 1.0});
    }
    // Interleaved generation is balanced; shuffle so position carries no signal.
    rng.shuffle(std::span<Record>{ds.records});
    return ds;
}

std::string order_corpus(std::size_t sentences, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x6f636fULL);
    std::string out;
    for (std::size_t s = 0; s < sentences; ++s) {
        out += order_sentence(rng, rng.bernoulli(0.5)).first;
        out += " .\n";
    }
    return out;
}

std::string prose_corpus(std::size_t bytes, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x70726fULL);
    std::string out;
    while (out.size() < bytes) {
        // A paragraph stays with one character for a handful of sentences.
        const Character& who = pick(rng, kCharacters);
        const std::size_t sentences = 4 + static_cast<std::size_t>(rng.below(5));
        for (std::size_t k = 0; k < sentences && out.size() < bytes; ++k) {
            // Occasionally borrow from another character so nothing is certain.
            const Character& what = rng.bernoulli(0.95) ? who : pick(rng, kCharacters);
            std::string s{who.subject};
            s += ' ';
            s += pick(rng, who.verbs);
            s += ' ';
            s += pick(rng, what.objects);
            if (rng.bernoulli(0.7)) {
                s += ' ';
                s += who.place;
            }
            if (rng.bernoulli(0.25)) {
                s += ' ';
                s += pick(rng, kTimes);
            }
            s += " .\n";
            out += s;
        }
    }
    return out;
}

std::string to_csv(const LabeledDataset& ds, std::string_view text_column, std::string_view label_column) {
    std::string out = csv_escape(text_column) + "," + csv_escape(label_column) + "\n";
    for (const auto& r : ds.records) {
        out += csv_escape(r.text);
        out += ',';
        if (ds.kind == LabelKind::class_id) {
            out += csv_escape(ds.label_names.at(static_cast<std::size_t>(r.label)));
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", r.label);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace ptft::synth
