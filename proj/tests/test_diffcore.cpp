#include <cmath>
#include <vector>

#include "doctest.h"
#include "gsde/nn.hpp"
#include "gsde/rng.hpp"

using namespace gsde;

namespace {

// Test-side oracle: dense multiply + bias written independently of the
// Eigen path.
Matrix brute_force_linear(const LinearLayer& layer, const Matrix& x) {
    Matrix y(x.rows(), layer.out_dim());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (int o = 0; o < layer.out_dim(); ++o) {
            double acc = layer.bias(o, 0);
            for (int k = 0; k < layer.in_dim(); ++k) {
                acc += x(i, k) * layer.weight(o, k);
            }
            y(i, o) = acc;
        }
    }
    return y;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    }
    return m;
}

// Central finite difference of a scalar function of one matrix entry.
template <class F>
double central_diff(Matrix& param, Eigen::Index r, Eigen::Index c, F&& eval,
                    double step = 1e-6) {
    const double saved = param(r, c);
    param(r, c) = saved + step;
    const double hi = eval();
    param(r, c) = saved - step;
    const double lo = eval();
    param(r, c) = saved;
    return (hi - lo) / (2.0 * step);
}

void check_close_rel(double got, double want, double rel_tol) {
    // Floor of 1 keeps roundoff in the finite differences (absolute noise
    // around 1e-9) from dominating near-zero gradients.
    const double scale = std::max({std::abs(got), std::abs(want), 1.0});
    CHECK(std::abs(got - want) / scale < rel_tol);
}

}  // namespace

TEST_CASE("linear_forward identity and hand-computed cases") {
    Rng rng(1);
    LinearLayer layer(2, 2, rng);
    layer.weight << 1, 0, 0, 1;
    layer.bias.setZero();
    Matrix x(1, 2);
    x << 3, -1;
    const Matrix y = linear_forward(layer, x);
    CHECK(y(0, 0) == 3.0);
    CHECK(y(0, 1) == -1.0);

    LinearLayer sum_layer(1, 2, rng);
    sum_layer.weight << 1, 1;
    sum_layer.bias << 1;
    Matrix x2(1, 2);
    x2 << 2, 3;
    CHECK(linear_forward(sum_layer, x2)(0, 0) == 6.0);
}

TEST_CASE("linear_forward matches brute-force multiply oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        LinearLayer layer(3 + trial, 2 + trial, rng);
        const Matrix x = random_matrix(4, 2 + trial, rng);
        const Matrix got = linear_forward(layer, x);
        const Matrix want = brute_force_linear(layer, x);
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("linear_forward rejects dimension mismatch") {
    Rng rng(3);
    LinearLayer layer(2, 3, rng);
    CHECK_THROWS_AS(linear_forward(layer, Matrix::Zero(1, 4)), ShapeError);
}

TEST_CASE("linear_backward zero upstream and scalar analytic case") {
    Rng rng(7);
    LinearLayer layer(2, 3, rng);
    const Matrix x = random_matrix(4, 3, rng);
    layer.zero_grad();
    const Matrix dx = linear_backward(layer, x, Matrix::Zero(4, 2));
    CHECK(layer.grad_weight.isZero(0.0));
    CHECK(layer.grad_bias.isZero(0.0));
    CHECK(dx.isZero(0.0));

    // d(w*x + b)/dw = x, /db = 1, /dx = w for a 1x1 layer.
    LinearLayer scalar(1, 1, rng);
    scalar.weight << 2.5;
    scalar.bias << 0.5;
    scalar.zero_grad();
    Matrix xs(1, 1);
    xs << 3.0;
    const Matrix dxs = linear_backward(scalar, xs, Matrix::Ones(1, 1));
    CHECK(scalar.grad_weight(0, 0) == 3.0);
    CHECK(scalar.grad_bias(0, 0) == 1.0);
    CHECK(dxs(0, 0) == 2.5);
}

TEST_CASE("linear gradients match finite differences over 20 seeds") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const int in = 2 + static_cast<int>(rng.uniform_int(7));   // <= 8
        const int out = 1 + static_cast<int>(rng.uniform_int(8));  // <= 8
        const int batch = 1 + static_cast<int>(rng.uniform_int(4));
        LinearLayer layer(out, in, rng);
        Matrix x = random_matrix(batch, in, rng);
        // Central differences are undefined at the ReLU kink; redraw until
        // every pre-activation is clear of it.
        while (linear_forward(layer, x).cwiseAbs().minCoeff() < 1e-3) {
            x = random_matrix(batch, in, rng);
        }
        const Matrix coeff = random_matrix(batch, out, rng);

        // Scalar objective: sum(coeff .* relu(layer(x))).
        const auto eval = [&]() {
            return (coeff.array() * relu_forward(linear_forward(layer, x)).array())
                .sum();
        };
        layer.zero_grad();
        const Matrix pre = linear_forward(layer, x);
        const Matrix dx =
            linear_backward(layer, x, relu_backward(pre, coeff));

        for (int r = 0; r < out; ++r) {
            for (int c = 0; c < in; ++c) {
                check_close_rel(layer.grad_weight(r, c),
                                central_diff(layer.weight, r, c, eval), 1e-5);
            }
            check_close_rel(layer.grad_bias(r, 0),
                            central_diff(layer.bias, r, 0, eval), 1e-5);
        }
        // Input gradients through the same objective.
        Matrix x_mut = x;
        const auto eval_x = [&]() {
            return (coeff.array() *
                    relu_forward(linear_forward(layer, x_mut)).array())
                .sum();
        };
        for (int r = 0; r < batch; ++r) {
            for (int c = 0; c < in; ++c) {
                check_close_rel(dx(r, c),
                                central_diff(x_mut, r, c, eval_x), 1e-5);
            }
        }
    }
}

TEST_CASE("softmax symmetry, normalization and range") {
    const Matrix u = softmax(Matrix::Zero(1, 3));
    for (int c = 0; c < 3; ++c) CHECK(u(0, c) == doctest::Approx(1.0 / 3));

    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix z = random_matrix(3, 5, rng) * 3.0;
        const Matrix p = softmax(z);
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-12);
            CHECK(p.row(r).minCoeff() > 0.0);
            CHECK(p.row(r).maxCoeff() < 1.0);
        }
    }
}

TEST_CASE("softmax argmax is shift invariant") {
    Rng rng(13);
    const Matrix z = random_matrix(6, 4, rng);
    const Matrix shifted = z.array() + 123.25;
    const Matrix p0 = softmax(z);
    const Matrix p1 = softmax(shifted);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        Eigen::Index a0, a1, dummy;
        p0.row(r).maxCoeff(&dummy, &a0);
        p1.row(r).maxCoeff(&dummy, &a1);
        CHECK(a0 == a1);
    }
}

TEST_CASE("softmax_backward matches finite differences") {
    Rng rng(17);
    Matrix z = random_matrix(3, 4, rng);
    const Matrix coeff = random_matrix(3, 4, rng);
    const auto eval = [&]() {
        return (coeff.array() * softmax(z).array()).sum();
    };
    const Matrix dlogits = softmax_backward(softmax(z), coeff);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            check_close_rel(dlogits(r, c), central_diff(z, r, c, eval), 1e-5);
        }
    }
}

TEST_CASE("cross_entropy trivial values") {
    Matrix perfect(2, 2);
    perfect << 1, 0, 0, 1;
    CHECK(cross_entropy(perfect, std::vector<int>{0, 1}) ==
          doctest::Approx(0.0).epsilon(1e-9));

    Matrix uniform(1, 2);
    uniform << 0.5, 0.5;
    CHECK(cross_entropy(uniform, std::vector<int>{0}) ==
          doctest::Approx(std::log(2.0)));

    // Rows must sum to one.
    Matrix bad(1, 2);
    bad << 0.2, 0.3;
    CHECK_THROWS_AS(cross_entropy(bad, std::vector<int>{0}), ContractError);
}

TEST_CASE("bce analytic values and clamping") {
    CHECK(bce(0.5, 0.0) == doctest::Approx(std::log(2.0)));
    CHECK(bce(0.5, 1.0) == doctest::Approx(std::log(2.0)));
    CHECK(std::isfinite(bce(0.0, 1.0)));
    CHECK(std::isfinite(bce(1.0, 0.0)));
    CHECK(bce(1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("sgd_step basics") {
    Rng rng(23);
    LinearLayer layer(1, 1, rng);
    layer.weight << 1.0;
    layer.bias << 0.0;
    layer.zero_grad();
    Matrix before = layer.weight;
    sgd_step(layer, 0.1, 0.0);
    CHECK(layer.weight == before);  // zero gradient, zero decay

    layer.grad_weight << 1.0;
    sgd_step(layer, 0.1, 0.0);
    CHECK(layer.weight(0, 0) == doctest::Approx(0.9));
    CHECK(layer.grad_weight(0, 0) == 1.0);  // gradients untouched

    CHECK_THROWS_AS(sgd_step(layer, 0.0, 0.0), ParamError);
}

TEST_CASE("sgd reaches the minimum of a quadratic") {
    // loss(w) = (w - 3)^2 has its minimum at w = 3.
    Rng rng(29);
    LinearLayer layer(1, 1, rng);
    layer.weight << -5.0;
    for (int it = 0; it < 1000; ++it) {
        layer.zero_grad();
        layer.grad_weight(0, 0) = 2.0 * (layer.weight(0, 0) - 3.0);
        sgd_step(layer, 0.1, 0.0);
        if (std::abs(layer.weight(0, 0) - 3.0) < 1e-7) break;
    }
    CHECK(std::abs(layer.weight(0, 0) - 3.0) < 1e-6);
}

TEST_CASE("rng streams are reproducible and beta stays in range") {
    Rng a(99);
    Rng b(99);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(5);
    for (int i = 0; i < 200; ++i) {
        const double x = r.beta(0.75, 0.75);
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
    for (int i = 0; i < 200; ++i) CHECK(r.gamma(2.5) > 0.0);
}
