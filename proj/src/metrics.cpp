#include "ptft/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "ptft/error.hpp"
#include "ptft/ops.hpp"

namespace ptft {
namespace {

double safe_ratio(double num, double den, bool& flag) {
    if (den == 0.0) {
        flag = true;
        return 0.0;
    }
    return num / den;
}

void check_lengths(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw Error(std::string{what} + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
    }
    if (a == 0) {
        throw Error(std::string{what} + ": empty input");
    }
}

}  // namespace

ClassificationReport classification_report(std::span<const int> y_true, std::span<const int> y_pred) {
    check_lengths(y_true.size(), y_pred.size(), "classification_report");
    std::map<int, std::size_t> tp, fp, fn, support;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        ++support[t];
        support.try_emplace(p, 0);
        if (t == p) {
            ++tp[t];
            ++correct;
        } else {
            ++fp[p];
            ++fn[t];
        }
    }
    ClassificationReport r;
    r.total = y_true.size();
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
    for (const auto& [label, sup] : support) {
        const double t = static_cast<double>(tp[label]);
        ClassMetrics m;
        m.label = label;
        m.support = sup;
        m.precision = safe_ratio(t, t + static_cast<double>(fp[label]), r.zero_division);
        m.recall = safe_ratio(t, t + static_cast<double>(fn[label]), r.zero_division);
        m.f1 = safe_ratio(2.0 * m.precision * m.recall, m.precision + m.recall, r.zero_division);
        const double w = static_cast<double>(sup) / static_cast<double>(r.total);
        r.weighted_precision += w * m.precision;
        r.weighted_recall += w * m.recall;
        r.weighted_f1 += w * m.f1;
        r.classes.push_back(m);
    }
    return r;
}

nlohmann::json report_to_json(const ClassificationReport& report, std::span<const std::string> label_names) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& c : report.classes) {
        const bool named = c.label >= 0 && static_cast<std::size_t>(c.label) < label_names.size();
        const std::string key = named ? label_names[static_cast<std::size_t>(c.label)] : std::to_string(c.label);
        out[key] = {{"precision", c.precision}, {"recall", c.recall}, {"f1-score", c.f1}, {"support", c.support}};
    }
    out["accuracy"] = report.accuracy;
    out["weighted avg"] = {{"precision", report.weighted_precision},
                           {"recall", report.weighted_recall},
                           {"f1-score", report.weighted_f1},
                           {"support", report.total}};
    out["zero_division"] = report.zero_division;
    return out;
}

double rmse(std::span<const double> pred, std::span<const double> target) {
    check_lengths(pred.size(), target.size(), "rmse");
    return std::sqrt(ops::mse(pred, target));
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
    check_lengths(x.size(), y.size(), "pearson_r");
    if (x.size() < 2) {
        throw Error("pearson_r: needs at least 2 points");
    }
    auto constant = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
    };
    if (constant(x) || constant(y)) {
        throw NumericError("pearson_r: zero variance, correlation undefined");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw NumericError("pearson_r: zero variance, correlation undefined");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

RegressionReport regression_report(std::span<const double> pred, std::span<const double> target) {
    RegressionReport r;
    check_lengths(pred.size(), target.size(), "regression_report");
    r.mse = ops::mse(pred, target);
    r.rmse = std::sqrt(r.mse);
    try {
        r.pearson_r = pearson_r(pred, target);
    } catch (const Error&) {
        r.pearson_r = 0.0;
        r.pearson_undefined = true;
    }
    return r;
}

nlohmann::json report_to_json(const RegressionReport& report) {
    return {{"mse", report.mse},
            {"rmse", report.rmse},
            {"pearson_r", report.pearson_r},
            {"pearson_undefined", report.pearson_undefined}};
}

MetricSet metric_set(const ClassificationReport& report) {
    return {{"precision", report.weighted_precision},
            {"recall", report.weighted_recall},
            {"f1", report.weighted_f1},
            {"accuracy", report.accuracy}};
}

MetricSet metric_set(const RegressionReport& report) {
    return {{"mse", report.mse}, {"rmse", report.rmse}, {"pearson_r", report.pearson_r}};
}

bool is_classification_metric(const std::string& name) noexcept {
    return name == "precision" || name == "recall" || name == "f1" || name == "accuracy";
}

bool is_supported_metric(const std::string& name) noexcept {
    return is_classification_metric(name) || name == "mse" || name == "rmse" || name == "pearson_r";
}

bool default_greater_is_better(const std::string& metric) noexcept {
    return metric != "mse" && metric != "rmse";
}

}  // namespace ptft
