#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "qamo/error.hpp"
#include "qamo/losses.hpp"
#include "support.hpp"

using namespace qamo;
using testing::bank_from_rows;

namespace {

const double kLn2 = std::log(2.0);

// Unit vector whose dot products with e0 and e1 are (a, b).
Vec with_sims(double a, double b) { return Vec{a, b, std::sqrt(1.0 - a * a - b * b)}; }

CentroidBank axis_bank(std::size_t levels, std::size_t dim) {
    std::vector<Vec> rows;
    for (std::size_t q = 0; q < levels; ++q) {
        Vec r(dim, 0.0);
        r[q] = 1.0;
        rows.push_back(r);
    }
    return bank_from_rows(rows);
}

Batch single(Vec x, Label y, std::optional<int> q) {
    Batch b{Matrix(1, x.size()), {y}, {q}};
    b.embeddings.set_row(0, x);
    return b;
}

using LossFn = LossOutput (*)(const Batch&, const CentroidBank&, const QamoHyper&);

// Analytic vs central-difference gradients w.r.t. embeddings and centroids.
double gradient_error(LossFn loss, const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper) {
    const auto out = loss(batch, bank, hyper);
    Vec emb(batch.embeddings.flat().begin(), batch.embeddings.flat().end());
    Vec cen(bank.weights.flat().begin(), bank.weights.flat().end());
    const Vec num_emb = finite_diff_grad(
        [&](std::span<const double> p) {
            Batch b = batch;
            std::copy(p.begin(), p.end(), b.embeddings.flat().begin());
            return loss(b, bank, hyper).value;
        },
        emb);
    const Vec num_cen = finite_diff_grad(
        [&](std::span<const double> p) {
            CentroidBank w = bank;
            std::copy(p.begin(), p.end(), w.weights.flat().begin());
            return loss(batch, w, hyper).value;
        },
        cen);
    return std::max(relative_error(out.grad_embeddings.flat(), num_emb),
                    relative_error(out.grad_centroids.flat(), num_cen));
}

}  // namespace

TEST_CASE("similarity_distance") {
    const auto bank = axis_bank(2, 3);
    const Vec x = with_sims(0.3, 0.7);
    auto d = similarity_distance(x, Label::spoof, std::nullopt, bank);
    CHECK(d.value == doctest::Approx(0.7));
    CHECK(d.index == 1);
    d = similarity_distance(x, Label::bonafide, 0, bank);
    CHECK(d.value == doctest::Approx(0.3));
    CHECK(d.index == 0);
    d = similarity_distance(with_sims(0.5, 0.5), Label::spoof, std::nullopt, bank);
    CHECK(d.index == 0);

    try {
        similarity_distance(x, Label::bonafide, std::nullopt, bank);
        FAIL("expected MissingQuality");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::missing_quality);
    }
}

TEST_CASE("qamo_loss scalar examples") {
    const QamoHyper h;
    const auto bank = axis_bank(1, 3);
    CHECK(qamo_loss(single(with_sims(0.9, 0.0), Label::bonafide, 0), bank, h).value ==
          doctest::Approx(kLn2).epsilon(1e-14));
    CHECK(qamo_loss(single(with_sims(0.2, 0.0), Label::spoof, std::nullopt), bank, h).value ==
          doctest::Approx(kLn2).epsilon(1e-14));

    // d = 1: value ln(1 + e^-2), dvalue/dd = -alpha sigmoid(-2)
    const auto out = qamo_loss(single(Vec{1, 0, 0}, Label::bonafide, 0), bank, h);
    const double expected_value = std::log(1.0 + std::exp(-2.0));
    const double expected_slope = -20.0 / (1.0 + std::exp(2.0));
    CHECK(out.value == doctest::Approx(expected_value).epsilon(1e-14));
    CHECK(out.value == doctest::Approx(0.126928).epsilon(1e-6));
    CHECK(out.grad_embeddings(0, 0) == doctest::Approx(expected_slope).epsilon(1e-14));
    CHECK(out.grad_embeddings(0, 0) == doctest::Approx(-2.38404).epsilon(1e-5));
    // The gradient lands on the bona fide sample's own centroid only.
    CHECK(out.grad_centroids(0, 0) == doctest::Approx(expected_slope));

    try {
        qamo_loss(single(Vec{1, 0, 0}, Label::bonafide, std::nullopt), bank, h);
        FAIL("expected MissingQuality");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::missing_quality);
    }
}

TEST_CASE("qamo_loss routes spoof gradients to the argmax centroid") {
    const QamoHyper h;
    const auto bank = axis_bank(2, 3);
    const auto out = qamo_loss(single(with_sims(0.3, 0.7), Label::spoof, std::nullopt), bank, h);
    for (std::size_t k = 0; k < 3; ++k) CHECK(out.grad_centroids(0, k) == 0.0);
    CHECK(out.grad_centroids(1, 0) != 0.0);

    const auto tie = qamo_loss(single(with_sims(0.5, 0.5), Label::spoof, std::nullopt), bank, h);
    CHECK(tie.grad_centroids(0, 0) != 0.0);
    for (std::size_t k = 0; k < 3; ++k) CHECK(tie.grad_centroids(1, k) == 0.0);
}

TEST_CASE("qamo_loss equals ln 2 on the margin for any alpha") {
    const auto bank = axis_bank(2, 3);
    for (double alpha : {1.0, 20.0, 100.0}) {
        QamoHyper h;
        h.alpha = alpha;
        CHECK(std::abs(qamo_loss(single(with_sims(h.m0, 0.1), Label::bonafide, 0), bank, h).value - kLn2) < 1e-12);
        CHECK(std::abs(qamo_loss(single(with_sims(0.1, h.m1), Label::spoof, std::nullopt), bank, h).value - kLn2) <
              1e-12);
    }
}

TEST_CASE("qamo_loss slope sign: bona fide decreasing in d, spoof increasing") {
    const QamoHyper h;
    const auto bank = axis_bank(1, 3);
    for (double d = -0.95; d <= 0.95; d += 0.05) {
        const Vec x = with_sims(d, 0.0);
        CHECK(qamo_loss(single(x, Label::bonafide, 0), bank, h).grad_embeddings(0, 0) < 0.0);
        CHECK(qamo_loss(single(x, Label::spoof, std::nullopt), bank, h).grad_embeddings(0, 0) > 0.0);
    }
}

TEST_CASE("quality_loss examples") {
    const QamoHyper h;
    const auto bank = axis_bank(2, 3);

    Rng rng(1);
    auto all_spoof = testing::random_batch(6, 2, 3, rng);
    std::fill(all_spoof.labels.begin(), all_spoof.labels.end(), Label::spoof);
    std::fill(all_spoof.quality.begin(), all_spoof.quality.end(), std::nullopt);
    const auto zero = quality_loss(all_spoof, bank, h);
    CHECK(zero.value == 0.0);
    for (double g : zero.grad_embeddings.flat()) CHECK(g == 0.0);
    for (double g : zero.grad_centroids.flat()) CHECK(g == 0.0);

    // Target similarity 1, other -1: exponent gap s(1 - m) + s = 32.
    const auto wide = quality_loss(single(Vec{1, -1, 0}, Label::bonafide, 0), bank, h);
    CHECK(wide.value == doctest::Approx(std::log1p(std::exp(-32.0))).epsilon(1e-12));
    CHECK(wide.value < 1e-13);

    // Equal similarities: only the margin separates the logits.
    const double expected = std::log(1.0 + std::exp(8.0));
    for (double c : {-0.5, 0.0, 0.3, 0.7}) {
        const auto eq = quality_loss(single(with_sims(c, c), Label::bonafide, 1), bank, h);
        CHECK(eq.value == doctest::Approx(expected).epsilon(1e-13));
    }
    CHECK(expected == doctest::Approx(8.000335).epsilon(1e-7));
}

TEST_CASE("combined_loss") {
    Rng rng(4);
    const auto batch = testing::random_batch(8, 2, 16, rng);
    const auto bank = testing::random_bank(2, 16, rng);
    QamoHyper h;
    h.lambda = 0.0;
    const auto plain = qamo_loss(batch, bank, h);
    const auto no_quality = combined_loss(batch, bank, h);
    CHECK(no_quality.value == plain.value);
    CHECK(no_quality.grad_embeddings == plain.grad_embeddings);
    CHECK(no_quality.grad_centroids == plain.grad_centroids);

    h.lambda = 0.1;
    const auto q = quality_loss(batch, bank, h);
    const auto both = combined_loss(batch, bank, h);
    CHECK(both.value == doctest::Approx(plain.value + 0.1 * q.value).epsilon(1e-15));
    CHECK(both.terms.qamo == plain.value);
    CHECK(both.terms.quality == q.value);
    CHECK(gradient_error(combined_loss, batch, bank, h) < 1e-4);
}

TEST_CASE("oc_softmax_loss is the single-centroid case") {
    Rng rng(6);
    const QamoHyper h;
    for (int trial = 0; trial < 20; ++trial) {
        auto batch = testing::random_batch(1 + rng.index(10), 1, 4, rng);
        const auto bank = testing::random_bank(1, 4, rng);
        const auto oc = oc_softmax_loss(batch, bank, h);
        for (auto& q : batch.quality) q = 0;
        const auto ref = qamo_loss(batch, bank, h);
        CHECK(oc.value == ref.value);
        CHECK(oc.grad_embeddings == ref.grad_embeddings);
        CHECK(oc.grad_centroids == ref.grad_centroids);
        CHECK(gradient_error(oc_softmax_loss, batch, bank, h) < 1e-4);
    }
    CHECK(oc_softmax_loss(single(with_sims(0.9, 0.0), Label::bonafide, std::nullopt), axis_bank(1, 3), h).value ==
          doctest::Approx(kLn2));
    Rng r(1);
    CHECK_THROWS_AS(oc_softmax_loss(testing::random_batch(3, 2, 4, r), testing::random_bank(2, 4, r), h), Error);
}

TEST_CASE("wce_loss") {
    BinaryHead head{Vec{0.0, 0.0}, 0.0};
    for (Label y : {Label::bonafide, Label::spoof})
        CHECK(wce_loss(single(Vec{1, 0}, y, 0), head, {}).value == doctest::Approx(kLn2).epsilon(1e-15));

    BinaryHead confident{Vec{0.0, 0.0}, 60.0};
    CHECK(wce_loss(single(Vec{1, 0}, Label::bonafide, 0), confident, {}).value < 1e-25);
    confident.bias = -60.0;
    CHECK(wce_loss(single(Vec{1, 0}, Label::spoof, std::nullopt), confident, {}).value < 1e-25);

    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto batch = testing::random_batch(1 + rng.index(12), 2, 6, rng);
        BinaryHead h{testing::random_unit(6, rng), rng.normal()};
        for (double& w : h.weight) w *= 3.0;
        const ClassWeights weights{rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)};
        const auto out = wce_loss(batch, h, weights);
        Vec params = h.weight;
        params.push_back(h.bias);
        const Vec num_head = finite_diff_grad(
            [&](std::span<const double> p) {
                BinaryHead g{Vec(p.begin(), p.end() - 1), p.back()};
                return wce_loss(batch, g, weights).value;
            },
            params);
        Vec analytic = out.grad_head->weight;
        analytic.push_back(out.grad_head->bias);
        CHECK(relative_error(analytic, num_head) < 1e-4);
        const Vec num_emb = finite_diff_grad(
            [&](std::span<const double> p) {
                Batch b = batch;
                std::copy(p.begin(), p.end(), b.embeddings.flat().begin());
                return wce_loss(b, h, weights).value;
            },
            Vec(batch.embeddings.flat().begin(), batch.embeddings.flat().end()));
        CHECK(relative_error(out.grad_embeddings.flat(), num_emb) < 1e-4);
    }
}

TEST_CASE("losses match per-sample scalar oracles") {
    Rng rng(10);
    const QamoHyper h;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t levels = 1 + rng.index(4);
        const auto bank = testing::random_bank(levels, 6, rng);
        const auto rows = testing::rows_of(bank);
        const auto batch = testing::random_batch(1 + rng.index(16), levels, 6, rng);

        double qamo_sum = 0.0, quality_sum = 0.0;
        std::size_t bona = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const Vec x(batch.embeddings.row(i).begin(), batch.embeddings.row(i).end());
            const bool spoof = batch.labels[i] == Label::spoof;
            const int q = spoof ? 0 : *batch.quality[i];
            qamo_sum += oracle::qamo_single(x, spoof, q, rows, h.alpha, h.m0, h.m1);
            if (!spoof) {
                quality_sum += oracle::quality_single(x, q, rows, h.s, h.m);
                ++bona;
            }
        }
        CHECK(std::abs(qamo_loss(batch, bank, h).value - qamo_sum / static_cast<double>(batch.size())) < 1e-10);
        const double expected_quality = bona ? quality_sum / static_cast<double>(bona) : 0.0;
        CHECK(std::abs(quality_loss(batch, bank, h).value - expected_quality) < 1e-10);
    }
}

TEST_CASE("losses are permutation invariant") {
    Rng rng(14);
    const QamoHyper h;
    for (int trial = 0; trial < 30; ++trial) {
        const auto bank = testing::random_bank(2, 5, rng);
        const auto batch = testing::random_batch(10, 2, 5, rng);
        std::vector<std::size_t> perm(batch.size());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        Batch shuffled{Matrix(batch.size(), 5), {}, {}};
        for (std::size_t k = 0; k < perm.size(); ++k) {
            shuffled.embeddings.set_row(k, batch.embeddings.row(perm[k]));
            shuffled.labels.push_back(batch.labels[perm[k]]);
            shuffled.quality.push_back(batch.quality[perm[k]]);
        }
        CHECK(qamo_loss(shuffled, bank, h).value == doctest::Approx(qamo_loss(batch, bank, h).value).epsilon(1e-14));
        CHECK(quality_loss(shuffled, bank, h).value ==
              doctest::Approx(quality_loss(batch, bank, h).value).epsilon(1e-14));
    }
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(99);
    const LossFn fns[] = {qamo_loss, quality_loss, combined_loss};
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t levels = std::vector<std::size_t>{1, 2, 4}[rng.index(3)];
        const std::size_t dim = rng.index(2) ? 16 : 4;
        const auto bank = testing::random_bank(levels, dim, rng);
        const auto batch = testing::random_batch(1 + rng.index(16), levels, dim, rng);
        for (auto fn : fns) CHECK(gradient_error(fn, batch, bank, QamoHyper{}) < 1e-4);
    }
}

TEST_CASE("hyperparameter validation") {
    QamoHyper h;
    CHECK_NOTHROW(h.validate());
    h.m1 = 0.95;
    CHECK_THROWS_AS(h.validate(), Error);
    h = {};
    h.alpha = 0.0;
    CHECK_THROWS_AS(h.validate(), Error);
    h = {};
    h.lambda = -1.0;
    CHECK_THROWS_AS(h.validate(), Error);
}
