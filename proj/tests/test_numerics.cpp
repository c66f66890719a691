#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "ptft/error.hpp"
#include "ptft/grad_check.hpp"
#include "ptft/ops.hpp"
#include "ptft/rng.hpp"
#include "ptft/tensor.hpp"
#include "support/grad_suite.hpp"

using namespace ptft;
using doctest::Approx;

TEST_SUITE("numerics") {

TEST_CASE("softmax of equal logits is uniform") {
    const std::vector<double> x{0.0, 0.0};
    const auto y = ops::softmax(x);
    CHECK(y[0] == 0.5);
    CHECK(y[1] == 0.5);
}

TEST_CASE("softmax of log 1, log 2, log 7") {
    const std::vector<double> x{std::log(1.0), std::log(2.0), std::log(7.0)};
    const auto y = ops::softmax(x);
    CHECK(y[0] == Approx(0.1).epsilon(1e-14));
    CHECK(y[1] == Approx(0.2).epsilon(1e-14));
    CHECK(y[2] == Approx(0.7).epsilon(1e-14));
}

TEST_CASE("softmax is shift invariant") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(1 + rng.below(10));
        for (auto& v : x) {
            v = rng.normal(0.0, 3.0);
        }
        const double c = rng.normal(0.0, 100.0);
        std::vector<double> shifted = x;
        for (auto& v : shifted) {
            v += c;
        }
        const auto a = ops::softmax(x);
        const auto b = ops::softmax(shifted);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i] == Approx(b[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("softmax rows sum to one with extreme entries") {
    Rng rng(5);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<double> x(1 + rng.below(64));
        for (auto& v : x) {
            v = rng.bernoulli(0.1) ? (rng.bernoulli(0.5) ? 700.0 : -700.0) : rng.normal(0.0, 50.0);
        }
        const auto y = ops::softmax(x);
        const double sum = std::accumulate(y.begin(), y.end(), 0.0);
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        for (double p : y) {
            CHECK(p >= 0.0);
        }
    }
}

TEST_CASE("softmax rejects non-finite input") {
    const std::vector<double> x{0.0, std::nan("")};
    CHECK_THROWS_AS(ops::softmax(x), NumericError);
}

TEST_CASE("cross-entropy at probability 0.2 is -log 0.2") {
    // Logits log 0.2 and log 0.8 put probability 0.2 on the target.
    const std::vector<double> logits{std::log(0.2), std::log(0.8)};
    const double loss = ops::cross_entropy(logits, 0);
    CHECK(std::abs(loss - 1.6094) <= 1e-4);
    CHECK(loss == Approx(-std::log(0.2)).epsilon(1e-14));
}

TEST_CASE("cross-entropy of a confident correct logit vanishes") {
    const std::vector<double> logits{1e3, 0.0};
    CHECK(ops::cross_entropy(logits, 0) <= 1e-6);
    CHECK(ops::cross_entropy(logits, 1) == Approx(1e3));
}

TEST_CASE("uniform logits give ln K") {
    for (std::size_t k : {2, 3, 15, 1000}) {
        const std::vector<double> logits(k, 0.37);
        CHECK(ops::cross_entropy(logits, k - 1) == std::log(static_cast<double>(k)));
    }
    const std::vector<double> two{0.0, 0.0};
    CHECK_THROWS_AS(ops::cross_entropy(two, 2), Error);
}

TEST_CASE("cross-entropy gradient is softmax minus one-hot") {
    const std::vector<double> logits{0.3, -1.2, 2.0};
    std::vector<double> grad(3);
    const double loss = ops::cross_entropy_with_grad(logits, 1, grad);
    const auto p = ops::softmax(logits);
    CHECK(loss == Approx(-std::log(p[1])));
    CHECK(grad[0] == Approx(p[0]));
    CHECK(grad[1] == Approx(p[1] - 1.0));
    CHECK(grad[2] == Approx(p[2]));
}

TEST_CASE("mse examples") {
    const std::vector<double> a{1.0, 3.0};
    const std::vector<double> b{2.0, 2.0};
    CHECK(ops::mse(a, a) == 0.0);
    CHECK(ops::mse(a, b) == 1.0);
    const std::vector<double> zero{0.0};
    const std::vector<double> three{3.0};
    CHECK(ops::mse(zero, three) == 9.0);
    CHECK_THROWS_AS(ops::mse(a, three), Error);
}

TEST_CASE("identity matmul returns its argument") {
    const Tensor eye = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const Tensor a = Tensor::matrix(3, 2, {1.5, -2, 3, 4.25, -5, 6});
    CHECK(ops::matmul(eye, a) == a);
    const Tensor bad = Tensor::matrix(2, 2, {1, 2, 3, 4});
    CHECK_THROWS_AS(ops::matmul(eye, bad), ShapeError);
}

TEST_CASE("matmul by hand") {
    const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    const Tensor b = Tensor::matrix(2, 2, {5, 6, 7, 8});
    CHECK(ops::matmul(a, b) == Tensor::matrix(2, 2, {19, 22, 43, 50}));
}

TEST_CASE("layer norm of a constant row is zero") {
    const Tensor x = Tensor::matrix(2, 4, {3, 3, 3, 3, -1, -1, -1, -1});
    const Tensor gamma(Shape{4}, 1.0);
    const Tensor beta(Shape{4}, 0.0);
    const Tensor y = ops::layer_norm(x, gamma, beta);
    for (double v : y.values()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("layer norm output has zero mean and unit variance") {
    const Tensor x = Tensor::matrix(1, 4, {1, 2, 3, 4});
    const Tensor y = ops::layer_norm(x, Tensor(Shape{4}, 1.0), Tensor(Shape{4}, 0.0));
    // mean 2.5, variance 1.25
    const double s = 1.0 / std::sqrt(1.25 + ops::kLayerNormEps);
    CHECK(y[0] == Approx(-1.5 * s));
    CHECK(y[3] == Approx(1.5 * s));
}

TEST_CASE("gelu anchors") {
    CHECK(ops::gelu(0.0) == 0.0);
    CHECK(ops::gelu(10.0) == Approx(10.0));
    CHECK(ops::gelu(-10.0) == Approx(0.0));
    CHECK(ops::gelu_derivative(0.0) == 0.5);
}

TEST_CASE("embedding lookup copies rows and checks range") {
    const Tensor table = Tensor::matrix(3, 2, {0, 1, 10, 11, 20, 21});
    const std::vector<TokenId> ids{2, 0, 2};
    const Tensor out = ops::embedding_lookup(table, ids);
    CHECK(out == Tensor::matrix(3, 2, {20, 21, 0, 1, 20, 21}));
    const std::vector<TokenId> bad{3};
    CHECK_THROWS_AS(ops::embedding_lookup(table, bad), Error);
}

TEST_CASE("forward ops are pure") {
    Rng rng(2);
    Tensor x(Shape{4, 5});
    for (auto& v : x.values()) {
        v = rng.normal();
    }
    const Tensor g(Shape{5}, 1.3);
    const Tensor b(Shape{5}, -0.2);
    CHECK(ops::layer_norm(x, g, b) == ops::layer_norm(x, g, b));
    CHECK(ops::gelu(x) == ops::gelu(x));
    const Tensor w = x.reshaped({5, 4});
    CHECK(ops::matmul(x, w) == ops::matmul(x, w));
}

TEST_CASE("grad check of a quadratic is exact") {
    const ScalarFunction f = [](const Tensor& theta, Tensor* grad) {
        double s = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            s += theta[i] * theta[i];
            if (grad) {
                (*grad)[i] = 2.0 * theta[i];
            }
        }
        return s;
    };
    Rng rng(9);
    Tensor theta(Shape{17});
    for (auto& v : theta.values()) {
        v = rng.normal();
    }
    const auto report = grad_check("sum of squares", f, theta);
    CHECK(report.pass);
    CHECK(report.max_relative_error < 1e-7);
    CHECK(report.coordinates_checked == 17);
}

TEST_CASE("grad check of a constant passes") {
    const ScalarFunction f = [](const Tensor&, Tensor*) { return 4.0; };
    const auto report = grad_check("constant", f, Tensor(Shape{5}, 1.0));
    CHECK(report.pass);
    CHECK(report.max_relative_error == 0.0);
}

TEST_CASE("grad check catches a wrong gradient") {
    const ScalarFunction f = [](const Tensor& theta, Tensor* grad) {
        if (grad) {
            (*grad)[0] = 3.0 * theta[0];  // should be 2 theta
        }
        return theta[0] * theta[0];
    };
    const auto report = grad_check("wrong", f, Tensor::vector({1.5}));
    CHECK_FALSE(report.pass);
    CHECK(relative_error(3.0, 2.0) == Approx(1.0 / 3.0));
}

TEST_CASE("grad check refuses non-finite values") {
    const ScalarFunction f = [](const Tensor&, Tensor*) { return std::nan(""); };
    CHECK_THROWS_AS(grad_check("nan", f, Tensor::vector({1.0})), NumericError);
}

TEST_CASE("every primitive passes a short random grad check") {
    for (const auto& r : testing::run_primitive_grad_checks(10, 123)) {
        INFO(r.primitive << " worst " << r.worst_error);
        CHECK(r.instances == 10);
        CHECK(r.failures == 0);
    }
}

}  // TEST_SUITE
