#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "gsde/data.hpp"
#include "gsde/losses.hpp"
#include "gsde/model.hpp"

using namespace gsde;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// Plain supervised training of a small classifier, used for learnability
// checks.
GsdeModel train_supervised(const Dataset& data, const std::vector<int>& idx,
                           int iters, uint64_t seed) {
    ModelDims dims{data.feature_dim, 32, 8, data.num_classes};
    GsdeModel m = init_model(dims, 1, seed);
    Rng rng(mix_seed(seed, 1));
    for (int it = 0; it < iters; ++it) {
        std::vector<int> batch;
        for (int i = 0; i < 32; ++i) {
            batch.push_back(idx[rng.uniform_int(idx.size())]);
        }
        const Batch b = make_batch(data, batch);
        const ModelForward fw = model_forward(m, b.x);
        const Matrix dlogits = (fw.p - onehot(b.labels, data.num_classes)) /
                               static_cast<double>(b.x.rows());
        zero_grad(m);
        model_backward(m, fw, dlogits, Matrix());
        sgd_step_model(m, 0.1, 0.0);
    }
    return m;
}

}  // namespace

TEST_CASE("two moons: noiseless points lie exactly on the arcs") {
    const Dataset d = gen_two_moons(4, 0.0, 5);
    LabelAudit::EvalScope scope;
    for (const auto& s : d.samples) {
        const double x = s.features(0);
        const double y = s.features(1);
        if (*s.eval_label() == 0) {
            CHECK(std::abs(x * x + y * y - 1.0) < 1e-12);
            CHECK(y >= -1e-12);
        } else {
            const double dx = x - 1.0;
            const double dy = y - 0.5;
            CHECK(std::abs(dx * dx + dy * dy - 1.0) < 1e-12);
            CHECK(dy <= 1e-12);
        }
    }
}

TEST_CASE("two moons: determinism, balance and bad parameters") {
    const Dataset a = gen_two_moons(101, 0.1, 7);
    const Dataset b = gen_two_moons(101, 0.1, 7);
    CHECK(datasets_equal(a, b));
    CHECK_FALSE(datasets_equal(a, gen_two_moons(101, 0.1, 8)));

    LabelAudit::EvalScope scope;
    int count0 = 0;
    for (const auto& s : a.samples) count0 += *s.eval_label() == 0 ? 1 : 0;
    CHECK(std::abs(2 * count0 - a.size()) <= 1);

    CHECK_THROWS_AS(gen_two_moons(0, 0.1, 1), ParamError);
    CHECK_THROWS_AS(gen_two_moons(1, 0.1, 1), ParamError);
    CHECK_THROWS_AS(gen_two_moons(10, -0.5, 1), ParamError);
}

TEST_CASE("two moons: a classifier reaches 95% on a held-out split") {
    const Dataset d = gen_two_moons(1000, 0.1, 11);
    std::vector<int> train_idx, test_idx;
    for (int i = 0; i < d.size(); ++i) {
        (i % 5 == 0 ? test_idx : train_idx).push_back(i);
    }
    const GsdeModel m = train_supervised(d, train_idx, 400, 3);

    LabelAudit::EvalScope scope;
    const Batch test = make_batch(d, test_idx);
    const Matrix p = class_probs(m, features(m, test.x));
    const auto pred = argmax_rows(p);
    int hit = 0;
    for (size_t i = 0; i < test_idx.size(); ++i) {
        const auto truth =
            d.samples[static_cast<size_t>(test_idx[i])].eval_label();
        if (pred[i] == *truth) ++hit;
    }
    CHECK(static_cast<double>(hit) / test_idx.size() >= 0.95);
}

TEST_CASE("blobs: exact centers at zero spread, exact class counts") {
    std::vector<RowVector> centers;
    RowVector c0(2), c1(2), c2(2);
    c0 << 0, 0;
    c1 << 10, 0;
    c2 << 0, 10;
    centers = {c0, c1, c2};

    const Dataset d = gen_blobs(8, 3, centers, 0.0, 3);
    LabelAudit::EvalScope scope;
    std::vector<int> counts(3, 0);
    for (const auto& s : d.samples) {
        const int y = *s.eval_label();
        ++counts[static_cast<size_t>(y)];
        CHECK(s.features == centers[static_cast<size_t>(y)]);
    }
    // 8 over 3 classes: remainder goes to the lowest ids.
    CHECK(counts[0] == 3);
    CHECK(counts[1] == 3);
    CHECK(counts[2] == 2);

    // Well-separated blobs: nearest center classifies perfectly.
    const Dataset e = gen_blobs(60, 3, centers, 0.5, 4);
    for (const auto& s : e.samples) {
        int best = 0;
        for (int c = 1; c < 3; ++c) {
            if ((s.features - centers[static_cast<size_t>(c)]).norm() <
                (s.features - centers[static_cast<size_t>(best)]).norm()) {
                best = c;
            }
        }
        CHECK(best == *s.eval_label());
    }

    CHECK_THROWS_AS(gen_blobs(10, 3, centers, -1.0, 1), ParamError);
    CHECK_THROWS_AS(gen_blobs(10, 2, centers, 1.0, 1), ParamError);
}

TEST_CASE("shift_domain identity, periodicity and half turn") {
    const Dataset d = gen_two_moons(50, 0.05, 13);
    const Dataset same = shift_domain(d, 0.0, RowVector(), 1.0, 0.0, 1);
    CHECK(datasets_equal(d, same));

    const Dataset full = shift_domain(d, 360.0, RowVector(), 1.0, 0.0, 1);
    for (int i = 0; i < d.size(); ++i) {
        CHECK((full.samples[static_cast<size_t>(i)].features -
               d.samples[static_cast<size_t>(i)].features)
                  .norm() < 1e-9);
    }

    Dataset point;
    point.feature_dim = 2;
    point.num_classes = 1;
    RowVector x(2);
    x << 1, 0;
    point.samples.push_back(LabeledSample::source(x, 0));
    const Dataset turned = shift_domain(point, 180.0, RowVector(), 1.0, 0.0, 1);
    CHECK(turned.samples[0].features(0) == doctest::Approx(-1.0));
    CHECK(turned.samples[0].features(1) == doctest::Approx(0.0).epsilon(1e-12));

    // Labels and cardinality preserved under arbitrary shifts.
    RowVector t(2);
    t << 3, -2;
    const Dataset moved = shift_domain(d, 45.0, t, 2.0, 0.3, 17);
    REQUIRE(moved.size() == d.size());
    LabelAudit::EvalScope scope;
    for (int i = 0; i < d.size(); ++i) {
        CHECK(moved.samples[static_cast<size_t>(i)].eval_label() ==
              d.samples[static_cast<size_t>(i)].eval_label());
    }

    Dataset three;
    three.feature_dim = 3;
    CHECK_THROWS_AS(shift_domain(three, 30.0, RowVector(), 1.0, 0.0, 1),
                    ParamError);
    CHECK_THROWS_AS(shift_domain(d, 0.0, RowVector(), 0.0, 0.0, 1), ParamError);
}

TEST_CASE("csv: round trip is exact") {
    const std::string path = temp_path("gsde_roundtrip.csv");
    Dataset d = gen_two_moons(100, 0.2, 19);
    // Mix in target and pseudo rows to cover every domain tag.
    d.samples[0] = LabeledSample::target(d.samples[0].features, 1);
    d.samples[1] = LabeledSample::target(d.samples[1].features, std::nullopt);
    d.samples[2] =
        LabeledSample::pseudo_source(d.samples[2].features, 0, std::nullopt);
    save_csv(d, path);
    const Dataset back = load_csv(path);
    CHECK(datasets_equal(d, back));
    std::filesystem::remove(path);
}

TEST_CASE("csv: header-only file loads as an empty dataset") {
    const std::string path = temp_path("gsde_empty.csv");
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("f0,f1,label,domain\n", f);
        std::fclose(f);
    }
    const Dataset d = load_csv(path);
    CHECK(d.size() == 0);
    CHECK(d.feature_dim == 2);
    std::filesystem::remove(path);
}

TEST_CASE("csv: malformed rows fail with a line number") {
    const std::string path = temp_path("gsde_bad.csv");
    const auto write_and_expect_fail = [&](const char* body,
                                           const char* needle) {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs(body, f);
        std::fclose(f);
        try {
            load_csv(path);
            FAIL_CHECK("expected a parse error for: " << body);
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    // Source row with the label missing.
    write_and_expect_fail("f0,f1,label,domain\n1.0,2.0,,source\n", ":2");
    // Unknown domain tag.
    write_and_expect_fail("f0,f1,label,domain\n1.0,2.0,1,nowhere\n", ":2");
    // Inconsistent field count.
    write_and_expect_fail("f0,f1,label,domain\n1.0,1,source\n", ":2");
    // Garbage number.
    write_and_expect_fail("f0,f1,label,domain\n1.0,abc,1,source\n", ":2");
    std::filesystem::remove(path);
}

TEST_CASE("minibatch: full-batch epochs are permutations") {
    const Dataset src = gen_two_moons(16, 0.1, 23);
    const Dataset tgt = as_target_domain(gen_two_moons(12, 0.1, 29));
    MinibatchIterator it(src, tgt, 12, 31);

    const auto idx = it.next_indices();
    std::set<int> tgt_seen(idx.target.begin(), idx.target.end());
    CHECK(tgt_seen.size() == 12);  // batch == |target| covers every sample

    // Over one source epoch every index appears exactly once.
    std::multiset<int> src_seen(idx.source.begin(), idx.source.end());
    const auto idx2 = it.next_indices();
    for (int i = 0; i < 4; ++i) src_seen.insert(idx2.source[i]);
    CHECK(src_seen.size() == 16);
    for (int i = 0; i < 16; ++i) CHECK(src_seen.count(i) == 1);

    CHECK_THROWS_AS(MinibatchIterator(src, tgt, 0, 1), ParamError);
    CHECK_THROWS_AS(MinibatchIterator(src, tgt, 13, 1), ParamError);
}

TEST_CASE("minibatch: pseudo-source fraction matches its share of the pool") {
    // Expanded source pool: 300 source rows + 100 pseudo rows.
    Dataset pool = gen_two_moons(300, 0.1, 37);
    const Dataset extra = gen_two_moons(100, 0.1, 41);
    for (const auto& s : extra.samples) {
        pool.samples.push_back(LabeledSample::pseudo_source(s.features, 0, 0));
    }
    const Dataset tgt = as_target_domain(gen_two_moons(100, 0.1, 43));

    const int batch = 20;
    const int num_batches = 1000;
    MinibatchIterator it(pool, tgt, batch, 47);
    int64_t pseudo = 0;
    for (int b = 0; b < num_batches; ++b) {
        const auto [src_batch, tgt_batch] = it.next();
        for (Domain dom : src_batch.domains) {
            if (dom == Domain::PseudoSource) ++pseudo;
        }
    }
    const double p = 100.0 / 400.0;
    const double se =
        std::sqrt(p * (1 - p) / (static_cast<double>(num_batches) * batch));
    const double observed =
        static_cast<double>(pseudo) / (static_cast<double>(num_batches) * batch);
    CHECK(std::abs(observed - p) <= 3.0 * se);
}

TEST_CASE("target labels are withheld from the trainer-facing surface") {
    LabelAudit::reset();
    const Dataset tgt = as_target_domain(gen_two_moons(10, 0.1, 53));
    LabelAudit::reset();  // discard sanctioned restructuring reads

    std::vector<int> all(10);
    for (int i = 0; i < 10; ++i) all[static_cast<size_t>(i)] = i;
    const Batch b = make_batch(tgt, all);
    for (int label : b.labels) CHECK(label == -1);
    for (const auto& s : tgt.samples) CHECK(!s.train_label().has_value());
    CHECK(LabelAudit::leaked_reads() == 0);
    CHECK(LabelAudit::sanctioned_reads() == 0);

    // Reading ground truth outside an evaluation scope counts as a leak.
    (void)tgt.samples[0].eval_label();
    CHECK(LabelAudit::leaked_reads() == 1);
    {
        LabelAudit::EvalScope scope;
        (void)tgt.samples[0].eval_label();
    }
    CHECK(LabelAudit::sanctioned_reads() == 1);
    LabelAudit::reset();
}
