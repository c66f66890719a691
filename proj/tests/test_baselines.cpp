#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ptft/baselines.hpp"
#include "ptft/error.hpp"
#include "ptft/grad_check.hpp"
#include "ptft/model.hpp"
#include "ptft/rng.hpp"
#include "ptft/tokenizer.hpp"

using namespace ptft;
using doctest::Approx;

namespace {

std::vector<SparseVector> featurize_all(const BowVocabulary& vocab, const std::vector<std::string>& texts) {
    std::vector<SparseVector> out;
    for (const auto& t : texts) {
        out.push_back(vocab.featurize(t));
    }
    return out;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("bag-of-words counts") {
    const auto vocab = BowVocabulary::from_terms({"dog", "cat"});
    CHECK(vocab.featurize("dog dog cat") == SparseVector{{0, 2.0}, {1, 1.0}});
    CHECK(vocab.featurize_dense("dog dog cat") == std::vector<double>{2.0, 1.0});
    CHECK(vocab.featurize("bird fish").empty());
    CHECK(vocab.featurize("a b cat dog") == vocab.featurize("dog b a cat"));
    CHECK(bow_terms("Hello, World! it's") == std::vector<std::string>{"hello", "world", "it", "s"});
    CHECK_THROWS_AS(BowVocabulary::from_terms({"a", "a"}), InvariantError);
}

TEST_CASE("vocabulary respects min_df and sorts terms") {
    const std::vector<std::string> docs{"b a a", "a c", "c d"};
    const auto v2 = BowVocabulary::build(docs, 2);
    CHECK(v2.terms() == std::vector<std::string>{"a", "c"});
    CHECK(v2.document_frequency() == std::vector<std::size_t>{2, 2});
    const auto v1 = BowVocabulary::build(docs, 1);
    CHECK(v1.size() == 4);
    CHECK(*v1.index("d") == 3);
    CHECK_FALSE(v1.index("zzz").has_value());
    const auto back = BowVocabulary::from_json(v1.to_json());
    CHECK(back.terms() == v1.terms());
    CHECK(back.document_frequency() == v1.document_frequency());
}

TEST_CASE("naive bayes on a hand corpus") {
    const auto vocab = BowVocabulary::from_terms({"a", "b", "c"});
    const std::vector<std::string> docs{"a a b", "a c", "b b c", "c"};
    const std::vector<int> labels{0, 0, 1, 1};
    const auto nb = train_naive_bayes(featurize_all(vocab, docs), labels, 2, 3, 1.0);
    // class 0 counts a3 b1 c1, class 1 counts b2 c2; alpha 1 over 3 features.
    CHECK(nb.log_prior[0] == Approx(std::log(0.5)));
    CHECK(nb.log_likelihood[0][0] == Approx(std::log(4.0 / 8.0)));
    CHECK(nb.log_likelihood[1][0] == Approx(std::log(1.0 / 7.0)));
    CHECK(nb.log_likelihood[1][2] == Approx(std::log(3.0 / 7.0)));
    const auto x = vocab.featurize("a b");
    const auto jll = nb.joint_log_likelihood(x);
    CHECK(jll[0] == Approx(std::log(0.5 * 0.5 * 0.25)));
    CHECK(jll[1] == Approx(std::log(0.5 * (1.0 / 7.0) * (3.0 / 7.0))));
    CHECK(nb.predict(x) == 0);
    CHECK(nb.predict(vocab.featurize("c c b")) == 1);
}

TEST_CASE("naive bayes: disjoint vocabularies and ties") {
    const auto vocab = BowVocabulary::from_terms({"x", "y", "z"});
    const std::vector<std::string> docs{"x x", "y", "z z z"};
    const std::vector<int> labels{0, 1, 2};
    const auto features = featurize_all(vocab, docs);
    const auto nb = train_naive_bayes(features, labels, 3, 3);
    for (int k = 0; k < 3; ++k) {
        CHECK(nb.predict(features[static_cast<std::size_t>(k)]) == k);
    }
    const std::vector<std::string> same{"x y", "y x"};
    const auto tie = train_naive_bayes(featurize_all(vocab, same), std::vector<int>{0, 1}, 2, 3);
    CHECK(tie.predict(vocab.featurize("x")) == 0);
    CHECK_THROWS_WITH(train_naive_bayes(features, labels, 4, 3), doctest::Contains("class 3"));
    CHECK_THROWS_AS(train_naive_bayes(features, labels, 3, 3, 0.0), Error);
}

TEST_CASE("maxent separates separable data") {
    const auto vocab = BowVocabulary::from_terms({"good", "bad", "film", "plot"});
    const std::vector<std::string> docs{"good film", "good plot", "good good", "bad film", "bad plot", "bad bad film"};
    const std::vector<int> labels{0, 0, 0, 1, 1, 1};
    const auto features = featurize_all(vocab, docs);
    const auto m = train_maxent(features, labels, 2, 4, {0.0, 500, 0.5, 1});
    for (std::size_t i = 0; i < docs.size(); ++i) {
        CHECK(m.predict(features[i]) == labels[i]);
    }
    CHECK(maxent_objective(m, features, labels, 0.0) < 0.1);
}

TEST_CASE("strong L2 shrinks maxent to the prior") {
    const auto vocab = BowVocabulary::from_terms({"u", "v"});
    const std::vector<std::string> docs{"u", "u", "u", "v"};
    const std::vector<int> labels{0, 0, 0, 1};
    const auto features = featurize_all(vocab, docs);
    const auto m = train_maxent(features, labels, 2, 2, {1e4, 2000, 1e-4, 1});
    for (double w : m.weight.values()) {
        CHECK(std::abs(w) < 1e-3);
    }
    CHECK(m.predict(vocab.featurize("v")) == 0);
}

TEST_CASE("maxent gradient passes the gradient check") {
    Rng rng(3);
    const std::size_t features_n = 5;
    const std::size_t k = 3;
    std::vector<SparseVector> xs;
    std::vector<int> ys;
    for (int i = 0; i < 8; ++i) {
        SparseVector x;
        for (std::size_t f = 0; f < features_n; ++f) {
            if (rng.bernoulli(0.5)) {
                x.emplace_back(f, static_cast<double>(1 + rng.below(3)));
            }
        }
        xs.push_back(x);
        ys.push_back(static_cast<int>(rng.below(k)));
    }
    MaxEnt base{Tensor(Shape{features_n, k}), std::vector<double>(k, 0.0)};
    for (auto& v : base.weight.values()) {
        v = rng.normal(0.0, 0.5);
    }
    const ScalarFunction f = [&](const Tensor& theta, Tensor* grad) {
        MaxEnt m = base;
        m.weight = theta;
        MaxEnt g = base;
        const double value = maxent_objective(m, xs, ys, 0.3, grad ? &g : nullptr);
        if (grad) {
            *grad = g.weight;
        }
        return value;
    };
    const auto report = grad_check("maxent", f, base.weight);
    CHECK(report.pass);
}

TEST_CASE("ridge on a hand 2x2 system") {
    const std::vector<std::vector<double>> x{{1.0, 2.0}, {3.0, 4.0}};
    const std::vector<double> y{1.0, 2.0};
    // (X^T X + I) w = X^T y: [[11, 14], [14, 21]] w = [7, 10].
    const auto m = fit_ridge(x, y, 1.0, false);
    CHECK(m.weights[0] == Approx(7.0 / 35.0).epsilon(1e-12));
    CHECK(m.weights[1] == Approx(12.0 / 35.0).epsilon(1e-12));
    CHECK(m.intercept == 0.0);
    CHECK(m.predict(std::vector<double>{1.0, 1.0}) == Approx(19.0 / 35.0));
    CHECK_THROWS_AS(fit_ridge(x, y, 0.0), Error);
}

TEST_CASE("ridge limits") {
    Rng rng(5);
    std::vector<std::vector<double>> x(30, std::vector<double>(4));
    std::vector<double> y(30);
    for (std::size_t i = 0; i < 30; ++i) {
        for (auto& v : x[i]) {
            v = rng.normal();
        }
        y[i] = 1.5 * x[i][0] - 2.0 * x[i][2] + 0.25 * x[i][3] + 4.0;
    }
    const auto exact = fit_ridge(x, y, 1e-8);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(std::abs(exact.predict(x[i]) - y[i]) < 1e-6);
    }
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 30.0;
    const auto flat = fit_ridge(x, y, 1e12);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(flat.predict(x[i]) == Approx(mean).epsilon(1e-6));
    }
}

TEST_CASE("ridge satisfies the normal equations") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        const std::size_t d = 1 + rng.below(12);
        const double lambda = std::pow(10.0, rng.normal(0.0, 1.5));
        std::vector<std::vector<double>> x(n, std::vector<double>(d));
        std::vector<double> y(n);
        Eigen::MatrixXd xm(n, d);
        Eigen::VectorXd ym(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                x[i][j] = xm(i, j) = rng.normal();
            }
            y[i] = ym(i) = rng.normal();
        }
        const auto m = fit_ridge(x, y, lambda, false);
        Eigen::VectorXd w(d);
        for (std::size_t j = 0; j < d; ++j) {
            w(j) = m.weights[j];
        }
        const Eigen::MatrixXd a = xm.transpose() * xm + lambda * Eigen::MatrixXd::Identity(d, d);
        const double residual = (a * w - xm.transpose() * ym).cwiseAbs().maxCoeff();
        CHECK(residual < 1e-8);
    }
}

TEST_CASE("pooled features are masked means of the final layer") {
    ModelConfig c;
    c.num_layers = 1;
    c.hidden_size = 4;
    c.num_heads = 2;
    c.intermediate_size = 8;
    c.vocab_size = 10;
    c.max_positions = 6;
    c.dropout = 0.0;
    Rng rng(7);
    const Parameters p = init_encoder_parameters(c, rng);
    Encoding e;
    e.ids = {2, 6, 3, 0};
    e.attention_mask = {1, 1, 1, 0};
    const std::vector<Encoding> inputs{e};
    const auto features = pooled_features(c, p, inputs);
    const Tensor h = encode_sequence(c, p, e.ids, e.attention_mask);
    CHECK(features[0] == mean_pool(h, e.attention_mask));
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(features[0][j] == Approx((h(0, j) + h(1, j) + h(2, j)) / 3.0));
    }
}

TEST_CASE("baseline models serialize to JSON") {
    const auto vocab = BowVocabulary::from_terms({"a", "b"});
    const std::vector<std::string> docs{"a", "b"};
    const std::vector<int> labels{0, 1};
    const auto features = featurize_all(vocab, docs);
    const auto nb = train_naive_bayes(features, labels, 2, 2);
    CHECK(nb.to_json().contains("log_prior"));
    const auto me = train_maxent(features, labels, 2, 2, {});
    CHECK(me.to_json().dump() == train_maxent(features, labels, 2, 2, {}).to_json().dump());
    const auto ridge = fit_ridge({{1.0}, {2.0}}, std::vector<double>{1.0, 2.0}, 1.0);
    CHECK(ridge.to_json().contains("weights"));
}

}  // TEST_SUITE
