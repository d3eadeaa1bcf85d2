#include <doctest.h>

#include <cmath>

#include "qamo/checkpoint.hpp"
#include "qamo/error.hpp"
#include "qamo/model.hpp"
#include "support.hpp"

using namespace qamo;

namespace {

EncoderModel identity_encoder(std::size_t dim) {
    DenseLayer layer{Matrix(dim, dim), Vec(dim, 0.0), Activation::identity};
    for (std::size_t i = 0; i < dim; ++i) layer.weight(i, i) = 1.0;
    return EncoderModel({layer});
}

// g . encode(x) as a function of every parameter (flattened) and the input.
struct EncoderProbe {
    EncoderModel model;
    Vec features;
    Vec direction;

    Vec flat_params() {
        Vec out;
        for (auto span : model.parameters()) out.insert(out.end(), span.begin(), span.end());
        return out;
    }

    double at_params(std::span<const double> flat) const {
        EncoderModel m = model;
        std::size_t k = 0;
        for (auto span : m.parameters())
            for (double& p : span) p = flat[k++];
        return dot(direction, encode(m, features));
    }

    double at_input(std::span<const double> x) const { return dot(direction, encode(model, x)); }
};

}  // namespace

TEST_CASE("encode") {
    const auto model = identity_encoder(2);
    const Vec x = encode(model, Vec{3, 4});
    CHECK(x[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(x[1] == doctest::Approx(0.8).epsilon(1e-15));

    DenseLayer zero{Matrix(2, 2), Vec(2, 0.0), Activation::identity};
    try {
        encode(EncoderModel({zero}), Vec{3, 4});
        FAIL("expected ZeroNorm");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::zero_norm);
    }
    try {
        encode(model, Vec{1, 2, 3});
        FAIL("expected DimMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dim_mismatch);
    }

    Rng a(5), b(5);
    const auto m1 = EncoderModel::make(8, {32, 32}, 16, Activation::relu, a);
    const auto m2 = EncoderModel::make(8, {32, 32}, 16, Activation::relu, b);
    const Vec in{0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8};
    CHECK(encode(m1, in) == encode(m2, in));
}

TEST_CASE("encoder layers must chain") {
    DenseLayer a{Matrix(4, 3), Vec(4, 0.0), Activation::relu};
    DenseLayer b{Matrix(2, 5), Vec(2, 0.0), Activation::identity};
    CHECK_THROWS_AS(EncoderModel({a, b}), Error);
    DenseLayer c{Matrix(2, 4), Vec(3, 0.0), Activation::identity};
    CHECK_THROWS_AS(EncoderModel({a, c}), Error);
}

TEST_CASE("encode output is unit norm") {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const auto act = trial % 2 ? Activation::tanh : Activation::relu;
        const auto model = EncoderModel::make(6, {16, 8}, 5, act, rng);
        Vec in(6);
        for (double& x : in) x = rng.normal() * 3.0;
        CHECK(std::abs(norm2(encode(model, in)) - 1.0) < 1e-12);
    }
}

TEST_CASE("encode_backward matches finite differences") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto act = trial % 2 ? Activation::tanh : Activation::relu;
        EncoderProbe probe{EncoderModel::make(5, {7}, 4, act, rng), Vec(5), testing::random_unit(4, rng)};
        for (double& x : probe.features) x = rng.normal();

        const auto grads = encode_backward(probe.model, probe.features, probe.direction);
        auto g = grads;
        Vec analytic;
        for (auto span : g.parameters()) analytic.insert(analytic.end(), span.begin(), span.end());
        const Vec numeric = finite_diff_grad([&](std::span<const double> p) { return probe.at_params(p); },
                                             probe.flat_params());
        CHECK(relative_error(analytic, numeric) < 1e-6);

        const Vec numeric_in =
            finite_diff_grad([&](std::span<const double> x) { return probe.at_input(x); }, probe.features);
        CHECK(relative_error(grads.input, numeric_in) < 1e-6);
    }
}

TEST_CASE("encode_backward edge cases") {
    Rng rng(2);
    const auto model = EncoderModel::make(4, {6}, 3, Activation::relu, rng);
    const Vec in{0.5, -1.0, 0.25, 2.0};
    auto grads = encode_backward(model, in, Vec{0, 0, 0});
    for (auto span : grads.parameters())
        for (double g : span) CHECK(g == 0.0);

    // Gradient along the embedding direction only rescales the raw output,
    // which normalization removes.
    const auto ident = identity_encoder(3);
    const Vec x{1.0, 2.0, -2.0};
    const Vec unit = encode(ident, x);
    const auto radial = encode_backward(ident, x, unit);
    for (double g : radial.input) CHECK(std::abs(g) < 1e-15);
}

TEST_CASE("init_centroids") {
    Rng rng(8);
    const auto ortho = init_centroids(2, 8, CentroidInit::orthogonal, rng);
    CHECK(std::abs(dot(ortho.centroid(0), ortho.centroid(1))) < 1e-12);
    for (std::size_t q = 0; q < 2; ++q) CHECK(std::abs(norm2(ortho.centroid(q)) - 1.0) < 1e-12);

    const auto full = init_centroids(6, 6, CentroidInit::orthogonal, rng);
    for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = a + 1; b < 6; ++b) CHECK(std::abs(dot(full.centroid(a), full.centroid(b))) < 1e-12);

    const auto single = init_centroids(1, 4, CentroidInit::orthogonal, rng);
    CHECK(single.levels() == 1);
    CHECK(std::abs(norm2(single.centroid(0)) - 1.0) < 1e-12);
    CHECK(single.mean_pairwise_cosine() == 1.0);

    Rng a(3), b(3);
    CHECK(init_centroids(4, 5, CentroidInit::random_unit, a) == init_centroids(4, 5, CentroidInit::random_unit, b));

    try {
        init_centroids(5, 4, CentroidInit::orthogonal, rng);
        FAIL("expected InvalidScheme");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_scheme);
    }
    try {
        parse_centroid_init("spherical");
        FAIL("expected InvalidScheme");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_scheme);
    }
}

TEST_CASE("checkpoint round trip reproduces encode bitwise") {
    Rng rng(77);
    Checkpoint ckpt;
    ckpt.encoder = EncoderModel::make(8, {32, 32}, 16, Activation::relu, rng);
    ckpt.bank = init_centroids(2, 16, CentroidInit::orthogonal, rng);
    ckpt.head = init_head(16, rng);
    ckpt.policy = QualityPolicy::binary(2.5);
    ckpt.metadata = {77, 3, {0.5, 0.25, 1.0 / 3.0}};

    testing::TempDir dir("ckpt");
    save_checkpoint(dir / "c.json", ckpt);
    CHECK_FALSE(std::filesystem::exists(dir / "c.json.tmp"));
    const auto back = load_checkpoint(dir / "c.json");
    CHECK(back == ckpt);
    for (int trial = 0; trial < 20; ++trial) {
        Vec in(8);
        for (double& x : in) x = rng.normal();
        CHECK(encode(back.encoder, in) == encode(ckpt.encoder, in));
    }

    auto j = checkpoint_to_json(ckpt);
    j["version"] = kCheckpointVersion + 1;
    CHECK_THROWS_AS(checkpoint_from_json(j), Error);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), Error);
}
