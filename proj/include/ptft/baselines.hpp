#pragma once

// Bag-of-words Naive Bayes and MaxEnt classifiers, and ridge regression on
// mean-pooled encoder states.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptft/model.hpp"
#include "ptft/tensor.hpp"
#include "ptft/tokenizer.hpp"

namespace ptft {

/// Lowercased ASCII-alphanumeric runs (bytes >= 0x80 count as word
/// characters); everything else separates.
std::vector<std::string> bow_terms(std::string_view text);

/// (feature index, count) pairs, ascending by index.
using SparseVector = std::vector<std::pair<std::size_t, double>>;

class BowVocabulary {
public:
    /// Terms with document frequency >= min_df, indexed in lexicographic order.
    static BowVocabulary build(std::span<const std::string> texts, std::size_t min_df = 2);
    /// Explicit term list, indexed in the given order.
    static BowVocabulary from_terms(std::vector<std::string> terms);

    std::size_t size() const noexcept { return terms_.size(); }
    std::optional<std::size_t> index(std::string_view term) const;
    const std::vector<std::string>& terms() const noexcept { return terms_; }
    const std::vector<std::size_t>& document_frequency() const noexcept { return df_; }
    std::size_t min_df() const noexcept { return min_df_; }

    /// Term counts; out-of-vocabulary terms are dropped.
    SparseVector featurize(std::string_view text) const;
    std::vector<double> featurize_dense(std::string_view text) const;

    nlohmann::json to_json() const;
    static BowVocabulary from_json(const nlohmann::json& doc);

private:
    std::vector<std::string> terms_;
    std::vector<std::size_t> df_;
    std::size_t min_df_ = 1;
    std::unordered_map<std::string, std::size_t> index_;
};

struct NaiveBayes {
    double alpha = 1.0;
    std::vector<double> log_prior;            // [K]
    std::vector<std::vector<double>> log_likelihood;  // [K][F]

    std::size_t num_classes() const noexcept { return log_prior.size(); }
    std::vector<double> joint_log_likelihood(const SparseVector& x) const;
    /// Ties go to the lowest class id.
    int predict(const SparseVector& x) const;

    nlohmann::json to_json() const;
};

/// Multinomial NB with additive smoothing alpha > 0. Throws if any class
/// 0..K-1 has no training document.
NaiveBayes train_naive_bayes(std::span<const SparseVector> features, std::span<const int> labels,
                             std::size_t num_classes, std::size_t num_features, double alpha = 1.0);

struct MaxEntConfig {
    double l2 = 0.0;
    std::size_t epochs = 500;
    double learning_rate = 0.5;
    std::uint64_t seed = 0;
};

/// Softmax regression: scores = x W + b, W [F x K].
struct MaxEnt {
    Tensor weight;
    std::vector<double> bias;

    std::size_t num_classes() const noexcept { return bias.size(); }
    std::vector<double> scores(const SparseVector& x) const;
    int predict(const SparseVector& x) const;

    nlohmann::json to_json() const;
};

/// Mean cross-entropy plus (l2 / 2) * ||W||^2 (bias unpenalized). When grad
/// is non-null its weight and bias receive the gradient (overwritten).
double maxent_objective(const MaxEnt& model, std::span<const SparseVector> features, std::span<const int> labels,
                        double l2, MaxEnt* grad = nullptr);

/// Full-batch gradient descent from a seeded normal(0, 0.01) start.
MaxEnt train_maxent(std::span<const SparseVector> features, std::span<const int> labels, std::size_t num_classes,
                    std::size_t num_features, const MaxEntConfig& config);

struct RidgeModel {
    std::vector<double> weights;
    double intercept = 0.0;
    double lambda = 0.0;

    double predict(std::span<const double> x) const;
    nlohmann::json to_json() const;
};

/// Minimizes ||y - Xw - b||^2 + lambda ||w||^2. With fit_intercept the
/// features and targets are centered first and b = mean(y) - mean(X) w;
/// otherwise b = 0. Solved as (X^T X + lambda I) w = X^T y by LDLT.
/// Throws if lambda <= 0.
RidgeModel fit_ridge(const std::vector<std::vector<double>>& features, std::span<const double> targets, double lambda,
                     bool fit_intercept = true);

/// Mean over non-pad positions of the final encoder layer, one row per input.
std::vector<std::vector<double>> pooled_features(const ModelConfig& config, const Parameters& params,
                                                 std::span<const Encoding> inputs);

}  // namespace ptft
