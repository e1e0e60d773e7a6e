#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gsde/checkpoint.hpp"
#include "gsde/model.hpp"

using namespace gsde;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    }
    return m;
}

bool models_identical(const GsdeModel& a, const GsdeModel& b) {
    return parameter_fingerprint(a) == parameter_fingerprint(b);
}

}  // namespace

TEST_CASE("init_model determinism and bottleneck independence") {
    const ModelDims dims{3, 8, 4, 2};
    const GsdeModel a = init_model(dims, 5, 77);
    const GsdeModel b = init_model(dims, 5, 77);
    CHECK(models_identical(a, b));
    CHECK_FALSE(models_identical(a, init_model(dims, 5, 78)));

    CHECK(a.bottlenecks.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        for (size_t j = i + 1; j < 5; ++j) {
            CHECK(a.bottlenecks[i].weight != a.bottlenecks[j].weight);
        }
    }
    CHECK_THROWS_AS(init_model(ModelDims{0, 8, 4, 2}, 1, 1), ParamError);
    CHECK_THROWS_AS(init_model(dims, 0, 1), ParamError);
}

TEST_CASE("features: cloned bottlenecks equal a single bottleneck") {
    const ModelDims dims{3, 8, 4, 2};
    GsdeModel multi = init_model(dims, 4, 5);
    GsdeModel single = init_model(dims, 1, 5);
    // Clone bottleneck 0 everywhere; extractor weights already agree
    // because layer sub-seeds do not depend on k.
    for (auto& b : multi.bottlenecks) b = single.bottlenecks[0];

    Rng rng(9);
    const Matrix x = random_matrix(6, 3, rng);
    CHECK((features(multi, x) - features(single, x)).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("features match an independent per-bottleneck recomputation") {
    const ModelDims dims{4, 10, 5, 3};
    const GsdeModel m = init_model(dims, 3, 21);
    Rng rng(23);
    const Matrix x = random_matrix(5, 4, rng);

    // Oracle: scalar loops, one bottleneck at a time, averaged at the end.
    Matrix backbone = x;
    for (const auto& layer : m.extractor) {
        Matrix next(backbone.rows(), layer.out_dim());
        for (Eigen::Index i = 0; i < backbone.rows(); ++i) {
            for (int o = 0; o < layer.out_dim(); ++o) {
                double acc = layer.bias(o, 0);
                for (int k = 0; k < layer.in_dim(); ++k) {
                    acc += backbone(i, k) * layer.weight(o, k);
                }
                next(i, o) = acc > 0 ? acc : 0.0;
            }
        }
        backbone = next;
    }
    Matrix expect = Matrix::Zero(x.rows(), dims.bottleneck);
    for (const auto& layer : m.bottlenecks) {
        for (Eigen::Index i = 0; i < backbone.rows(); ++i) {
            for (int o = 0; o < layer.out_dim(); ++o) {
                double acc = layer.bias(o, 0);
                for (int k = 0; k < layer.in_dim(); ++k) {
                    acc += backbone(i, k) * layer.weight(o, k);
                }
                expect(i, o) += acc;
            }
        }
    }
    expect /= 3.0;
    CHECK((features(m, x) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("class_probs: zero classifier gives uniform rows") {
    const ModelDims dims{3, 8, 4, 5};
    GsdeModel m = init_model(dims, 2, 31);
    m.classifier.weight.setZero();
    m.classifier.bias.setZero();
    Rng rng(33);
    const Matrix f = random_matrix(4, 4, rng);
    const Matrix p = class_probs(m, f);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            CHECK(p(i, c) == doctest::Approx(0.2));
        }
        CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("multilinear block layout and norm identity") {
    Matrix f(1, 3);
    f << 1, 2, 3;
    Matrix p = Matrix::Zero(1, 2);
    p(0, 1) = 1.0;  // one-hot class 1
    const Matrix z = multilinear(f, p);
    REQUIRE(z.cols() == 6);
    CHECK(z.row(0).segment(0, 3).isZero(0.0));
    CHECK(z(0, 3) == 1.0);
    CHECK(z(0, 4) == 2.0);
    CHECK(z(0, 5) == 3.0);

    Rng rng(35);
    const Matrix fr = random_matrix(4, 3, rng);
    Matrix pr = random_matrix(4, 5, rng).cwiseAbs();
    for (Eigen::Index i = 0; i < pr.rows(); ++i) pr.row(i) /= pr.row(i).sum();
    const Matrix zr = multilinear(fr, pr);
    for (Eigen::Index i = 0; i < fr.rows(); ++i) {
        // Blockwise sums recover the feature row because probabilities sum
        // to one.
        RowVector block_sum = RowVector::Zero(3);
        for (int c = 0; c < 5; ++c) block_sum += zr.row(i).segment(c * 3, 3);
        CHECK((block_sum - fr.row(i)).norm() < 1e-9);
        CHECK(std::abs(zr.row(i).norm() -
                       fr.row(i).norm() * pr.row(i).norm()) < 1e-9);
    }
}

TEST_CASE("gradient reversal scales and flips the upstream gradient") {
    Rng rng(37);
    const Matrix g = random_matrix(3, 4, rng);
    CHECK(grl_backward(g, 0.0).isZero(0.0));
    CHECK((grl_backward(g, 1.0) + g).cwiseAbs().maxCoeff() == 0.0);
    CHECK((grl_backward(g, 0.25) + 0.25 * g).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("discriminator gradients match finite differences") {
    const ModelDims dims{3, 6, 4, 2};
    GsdeModel m = init_model(dims, 2, 41);
    Rng rng(43);
    const Matrix fused = random_matrix(4, 4 * 2, rng);
    const Matrix coeff = random_matrix(4, 1, rng);

    StackCache cache;
    const Matrix logit = domain_logits(m, fused, cache);
    zero_grad(m);
    discriminator_backward(m, cache, coeff);

    const auto eval = [&]() {
        return (coeff.array() * domain_logits(m, fused).array()).sum();
    };
    for (auto* layer : {&m.discriminator[0], &m.discriminator[1]}) {
        for (Eigen::Index r = 0; r < layer->weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer->weight.cols(); ++c) {
                const double saved = layer->weight(r, c);
                layer->weight(r, c) = saved + 1e-6;
                const double hi = eval();
                layer->weight(r, c) = saved - 1e-6;
                const double lo = eval();
                layer->weight(r, c) = saved;
                const double fd = (hi - lo) / 2e-6;
                const double got = layer->grad_weight(r, c);
                CHECK(std::abs(got - fd) /
                          std::max({std::abs(got), std::abs(fd), 1.0}) <
                      1e-5);
            }
        }
    }
    CHECK(logit.rows() == 4);
}

TEST_CASE("adversarial ramp: endpoints, monotonicity, formula value") {
    GrlSchedule s{10.0, 100};
    CHECK(s.lam(0.0) == 0.0);
    // Independent evaluation of 2/(1+e^(-10)) - 1.
    const double expect = 2.0 / (1.0 + std::exp(-10.0)) - 1.0;
    CHECK(s.lam(1.0) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(s.lam(1.0) < 1.0);
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
        const double v = s.lam(i / 100.0);
        CHECK(v >= prev);
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        prev = v;
    }
    CHECK(s.lam_at(0) == 0.0);
    CHECK(s.lam_at(100) == doctest::Approx(expect));
    CHECK(s.lam_at(1000) == doctest::Approx(expect));  // clamped past the end
    CHECK_THROWS_AS(s.lam(-0.1), ParamError);
    CHECK_THROWS_AS(s.lam(1.1), ParamError);
}

TEST_CASE("checkpoint round trip is bitwise") {
    const ModelDims dims{3, 6, 4, 2};
    const GsdeModel m = init_model(dims, 3, 47);
    const std::string path =
        (std::filesystem::temp_directory_path() / "gsde_ckpt.csv").string();
    save_checkpoint(m, path);
    const GsdeModel back = load_checkpoint(path);
    CHECK(parameter_fingerprint(m) == parameter_fingerprint(back));
    CHECK(back.dims.input == 3);
    CHECK(back.num_bottlenecks == 3);

    // Magic header is enforced.
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOTGSDE\n";
    }
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);
    std::filesystem::remove(path);
}
