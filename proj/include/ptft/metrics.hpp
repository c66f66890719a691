#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ptft {

struct ClassMetrics {
    int label = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;  // true-class count
};

struct ClassificationReport {
    /// One entry per label seen in y_true or y_pred, ascending.
    std::vector<ClassMetrics> classes;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    double accuracy = 0.0;
    std::size_t total = 0;
    /// Set when some precision, recall or F1 had a zero denominator (reported as 0).
    bool zero_division = false;
};

/// Per-class precision/recall/F1 and support-weighted averages. Throws on
/// length mismatch or empty input.
ClassificationReport classification_report(std::span<const int> y_true, std::span<const int> y_pred);

/// {"<label>": {precision, recall, f1-score, support}, "accuracy",
///  "weighted avg": {precision, recall, f1-score, support}, "zero_division"}.
/// Labels with an entry in label_names are written by name, others by id.
nlohmann::json report_to_json(const ClassificationReport& report, std::span<const std::string> label_names = {});

double rmse(std::span<const double> pred, std::span<const double> target);

/// Sample Pearson correlation. Throws NumericError when either input has
/// zero variance, and Error on length mismatch or fewer than 2 points.
double pearson_r(std::span<const double> x, std::span<const double> y);

struct RegressionReport {
    double mse = 0.0;
    double rmse = 0.0;
    double pearson_r = 0.0;
    /// Constant predictions or targets; pearson_r is then reported as 0.
    bool pearson_undefined = false;
};

RegressionReport regression_report(std::span<const double> pred, std::span<const double> target);
nlohmann::json report_to_json(const RegressionReport& report);

/// Flat name -> value view used for checkpoint selection:
/// classification: precision, recall, f1, accuracy (weighted averages);
/// regression: mse, rmse, pearson_r.
using MetricSet = std::map<std::string, double>;
MetricSet metric_set(const ClassificationReport& report);
MetricSet metric_set(const RegressionReport& report);

bool is_supported_metric(const std::string& name) noexcept;
bool is_classification_metric(const std::string& name) noexcept;
/// false for mse and rmse, true for everything else.
bool default_greater_is_better(const std::string& metric) noexcept;

}  // namespace ptft
