#include "ptft/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "ptft/error.hpp"
#include "ptft/finetune.hpp"
#include "ptft/ops.hpp"
#include "ptft/rng.hpp"

namespace ptft {

std::vector<std::string> bow_terms(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        const bool word = c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        if (word) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

// --- vocabulary ---------------------------------------------------------------

BowVocabulary BowVocabulary::build(std::span<const std::string> texts, std::size_t min_df) {
    std::map<std::string, std::size_t> df;
    for (const auto& text : texts) {
        auto terms = bow_terms(text);
        std::set<std::string> unique(terms.begin(), terms.end());
        for (const auto& t : unique) {
            ++df[t];
        }
    }
    BowVocabulary v;
    v.min_df_ = min_df;
    for (const auto& [term, count] : df) {
        if (count >= min_df) {
            v.index_.emplace(term, v.terms_.size());
            v.terms_.push_back(term);
            v.df_.push_back(count);
        }
    }
    return v;
}

BowVocabulary BowVocabulary::from_terms(std::vector<std::string> terms) {
    BowVocabulary v;
    for (auto& t : terms) {
        if (!v.index_.emplace(t, v.terms_.size()).second) {
            throw InvariantError("bow vocabulary: duplicate term '" + t + "'");
        }
        v.terms_.push_back(std::move(t));
        v.df_.push_back(0);
    }
    return v;
}

std::optional<std::size_t> BowVocabulary::index(std::string_view term) const {
    auto it = index_.find(std::string{term});
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

SparseVector BowVocabulary::featurize(std::string_view text) const {
    std::map<std::size_t, double> counts;
    for (const auto& term : bow_terms(text)) {
        if (auto idx = index(term)) {
            counts[*idx] += 1.0;
        }
    }
    return {counts.begin(), counts.end()};
}

std::vector<double> BowVocabulary::featurize_dense(std::string_view text) const {
    std::vector<double> out(size(), 0.0);
    for (const auto& [idx, count] : featurize(text)) {
        out[idx] = count;
    }
    return out;
}

nlohmann::json BowVocabulary::to_json() const {
    return {{"terms", terms_}, {"document_frequency", df_}, {"min_df", min_df_}};
}

BowVocabulary BowVocabulary::from_json(const nlohmann::json& doc) {
    BowVocabulary v = from_terms(doc.at("terms").get<std::vector<std::string>>());
    v.df_ = doc.at("document_frequency").get<std::vector<std::size_t>>();
    v.min_df_ = doc.at("min_df").get<std::size_t>();
    if (v.df_.size() != v.terms_.size()) {
        throw InvariantError("bow vocabulary: document_frequency length differs from terms");
    }
    return v;
}

// --- naive bayes ---------------------------------------------------------------

std::vector<double> NaiveBayes::joint_log_likelihood(const SparseVector& x) const {
    std::vector<double> out = log_prior;
    for (std::size_t k = 0; k < out.size(); ++k) {
        for (const auto& [idx, count] : x) {
            out[k] += count * log_likelihood[k].at(idx);
        }
    }
    return out;
}

int NaiveBayes::predict(const SparseVector& x) const {
    return static_cast<int>(argmax(joint_log_likelihood(x)));
}

nlohmann::json NaiveBayes::to_json() const {
    return {{"type", "naive_bayes"}, {"alpha", alpha}, {"log_prior", log_prior}, {"log_likelihood", log_likelihood}};
}

NaiveBayes train_naive_bayes(std::span<const SparseVector> features, std::span<const int> labels,
                             std::size_t num_classes, std::size_t num_features, double alpha) {
    if (!(alpha > 0.0)) {
        throw Error("naive bayes: alpha must be positive");
    }
    if (features.size() != labels.size()) {
        throw Error("naive bayes: feature and label counts differ");
    }
    std::vector<std::size_t> docs(num_classes, 0);
    std::vector<std::vector<double>> counts(num_classes, std::vector<double>(num_features, 0.0));
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto k = static_cast<std::size_t>(labels[i]);
        if (labels[i] < 0 || k >= num_classes) {
            throw Error("naive bayes: label " + std::to_string(labels[i]) + " out of range");
        }
        ++docs[k];
        for (const auto& [idx, c] : features[i]) {
            counts[k].at(idx) += c;
        }
    }
    NaiveBayes nb;
    nb.alpha = alpha;
    const double n = static_cast<double>(features.size());
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (docs[k] == 0) {
            throw Error("naive bayes: class " + std::to_string(k) + " has no training documents");
        }
        nb.log_prior.push_back(std::log(static_cast<double>(docs[k]) / n));
        double total = 0.0;
        for (double c : counts[k]) {
            total += c;
        }
        const double denom = std::log(total + alpha * static_cast<double>(num_features));
        std::vector<double> ll(num_features);
        for (std::size_t f = 0; f < num_features; ++f) {
            ll[f] = std::log(counts[k][f] + alpha) - denom;
        }
        nb.log_likelihood.push_back(std::move(ll));
    }
    return nb;
}

// --- maxent ---------------------------------------------------------------------

std::vector<double> MaxEnt::scores(const SparseVector& x) const {
    std::vector<double> out = bias;
    const std::size_t k_count = bias.size();
    for (const auto& [idx, c] : x) {
        const double* w = weight.data() + idx * k_count;
        for (std::size_t k = 0; k < k_count; ++k) {
            out[k] += c * w[k];
        }
    }
    return out;
}

int MaxEnt::predict(const SparseVector& x) const {
    return static_cast<int>(argmax(scores(x)));
}

nlohmann::json MaxEnt::to_json() const {
    std::vector<std::vector<double>> rows;
    for (std::size_t f = 0; f < weight.rows(); ++f) {
        auto r = weight.row(f);
        rows.emplace_back(r.begin(), r.end());
    }
    return {{"type", "maxent"}, {"weight", rows}, {"bias", bias}};
}

double maxent_objective(const MaxEnt& model, std::span<const SparseVector> features, std::span<const int> labels,
                        double l2, MaxEnt* grad) {
    if (features.size() != labels.size() || features.empty()) {
        throw Error("maxent: feature and label counts differ or are zero");
    }
    const std::size_t k_count = model.num_classes();
    const double scale = 1.0 / static_cast<double>(features.size());
    if (grad != nullptr) {
        grad->weight = Tensor{model.weight.shape()};
        grad->bias.assign(k_count, 0.0);
    }
    double loss = 0.0;
    std::vector<double> d_scores(k_count);
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto s = model.scores(features[i]);
        const auto target = static_cast<std::size_t>(labels[i]);
        if (grad == nullptr) {
            loss += ops::cross_entropy(s, target);
            continue;
        }
        std::fill(d_scores.begin(), d_scores.end(), 0.0);
        loss += ops::cross_entropy_with_grad(s, target, d_scores, scale);
        for (std::size_t k = 0; k < k_count; ++k) {
            grad->bias[k] += d_scores[k];
        }
        for (const auto& [idx, c] : features[i]) {
            double* gw = grad->weight.data() + idx * k_count;
            for (std::size_t k = 0; k < k_count; ++k) {
                gw[k] += c * d_scores[k];
            }
        }
    }
    loss *= scale;
    double sq = 0.0;
    for (std::size_t j = 0; j < model.weight.size(); ++j) {
        sq += model.weight[j] * model.weight[j];
        if (grad != nullptr) {
            grad->weight[j] += l2 * model.weight[j];
        }
    }
    return loss + 0.5 * l2 * sq;
}

MaxEnt train_maxent(std::span<const SparseVector> features, std::span<const int> labels, std::size_t num_classes,
                    std::size_t num_features, const MaxEntConfig& config) {
    if (!(config.l2 >= 0.0)) {
        throw Error("maxent: l2 must be non-negative");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw Error("maxent: label " + std::to_string(y) + " out of range");
        }
    }
    Rng rng{config.seed};
    MaxEnt model;
    model.weight = Tensor{Shape{num_features, num_classes}};
    for (double& w : model.weight.values()) {
        w = rng.normal(0.0, 0.01);
    }
    model.bias.assign(num_classes, 0.0);
    MaxEnt grad;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        maxent_objective(model, features, labels, config.l2, &grad);
        for (std::size_t j = 0; j < model.weight.size(); ++j) {
            model.weight[j] -= config.learning_rate * grad.weight[j];
        }
        for (std::size_t k = 0; k < num_classes; ++k) {
            model.bias[k] -= config.learning_rate * grad.bias[k];
        }
    }
    return model;
}

// --- ridge -------------------------------------------------------------------------

double RidgeModel::predict(std::span<const double> x) const {
    if (x.size() != weights.size()) {
        throw ShapeError("ridge: expected " + std::to_string(weights.size()) + " features, got " +
                         std::to_string(x.size()));
    }
    double y = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) {
        y += weights[j] * x[j];
    }
    return y;
}

nlohmann::json RidgeModel::to_json() const {
    return {{"type", "ridge"}, {"lambda", lambda}, {"weights", weights}, {"intercept", intercept}};
}

RidgeModel fit_ridge(const std::vector<std::vector<double>>& features, std::span<const double> targets, double lambda,
                     bool fit_intercept) {
    if (!(lambda > 0.0)) {
        throw Error("ridge: lambda must be positive (lambda = 0 can leave the system singular)");
    }
    if (features.empty() || features.size() != targets.size()) {
        throw Error("ridge: feature and target counts differ or are zero");
    }
    const auto n = static_cast<Eigen::Index>(features.size());
    const auto d = static_cast<Eigen::Index>(features.front().size());
    Eigen::MatrixXd x(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = features[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != d) {
            throw ShapeError("ridge: ragged feature rows");
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            x(i, j) = row[static_cast<std::size_t>(j)];
        }
        y(i) = targets[static_cast<std::size_t>(i)];
    }
    Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(d);
    double y_mean = 0.0;
    if (fit_intercept) {
        x_mean = x.colwise().mean();
        y_mean = y.mean();
        x.rowwise() -= x_mean;
        y.array() -= y_mean;
    }
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += lambda;
    const Eigen::LDLT<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) {
        throw NumericError("ridge: factorization failed");
    }
    const Eigen::VectorXd w = solver.solve(x.transpose() * y);
    if (!w.allFinite()) {
        throw NumericError("ridge: non-finite solution");
    }
    RidgeModel model;
    model.lambda = lambda;
    model.weights.assign(w.data(), w.data() + w.size());
    model.intercept = fit_intercept ? y_mean - x_mean.dot(w) : 0.0;
    return model;
}

std::vector<std::vector<double>> pooled_features(const ModelConfig& config, const Parameters& params,
                                                 std::span<const Encoding> inputs) {
    std::vector<std::vector<double>> out;
    out.reserve(inputs.size());
    for (const auto& e : inputs) {
        const std::size_t n = e.active_length();
        const auto ids = std::span<const TokenId>{e.ids}.first(n);
        const auto mask = std::span<const std::uint8_t>{e.attention_mask}.first(n);
        out.push_back(mean_pool(encode_sequence(config, params, ids, mask), mask));
    }
    return out;
}

}  // namespace ptft
