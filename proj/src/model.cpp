#include "qamo/model.hpp"

#include <cmath>
#include <string>

#include "qamo/error.hpp"

namespace qamo {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "identity";
}

Activation parse_activation(std::string_view text) {
    if (text == "relu") return Activation::relu;
    if (text == "tanh") return Activation::tanh;
    if (text == "identity") return Activation::identity;
    throw Error(ErrorKind::config_error, "unknown activation \"" + std::string(text) + "\"");
}

namespace {

double activate(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
        case Activation::identity: return z;
    }
    return z;
}

double activate_derivative(Activation a, double z, double out) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - out * out;
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

}  // namespace

EncoderModel::EncoderModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw Error(ErrorKind::config_error, "encoder needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.bias.size() != layer.out_dim())
            throw Error(ErrorKind::dim_mismatch, "layer " + std::to_string(l) + " bias does not match its weight");
        if (l > 0 && layer.in_dim() != layers_[l - 1].out_dim())
            throw Error(ErrorKind::dim_mismatch, "layer " + std::to_string(l) + " input does not chain");
        if (!all_finite(layer.weight.flat()) || !all_finite(layer.bias))
            throw Error(ErrorKind::config_error, "layer " + std::to_string(l) + " has non-finite parameters");
    }
}

EncoderModel EncoderModel::make(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                std::size_t embedding_dim, Activation hidden_activation, Rng& rng) {
    std::vector<DenseLayer> layers;
    std::size_t fan_in = input_dim;
    auto add = [&](std::size_t out, Activation act) {
        DenseLayer layer{Matrix(out, fan_in), Vec(out, 0.0), act};
        const double gain = act == Activation::relu ? 2.0 : 1.0;
        const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
        for (double& w : layer.weight.flat()) w = stddev * rng.normal();
        layers.push_back(std::move(layer));
        fan_in = out;
    };
    for (auto width : hidden) add(width, hidden_activation);
    add(embedding_dim, Activation::identity);
    return EncoderModel(std::move(layers));
}

std::vector<std::span<double>> EncoderModel::parameters() {
    std::vector<std::span<double>> out;
    for (auto& layer : layers_) {
        out.push_back(layer.weight.flat());
        out.push_back(layer.bias);
    }
    return out;
}

std::size_t EncoderModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weight.flat().size() + layer.bias.size();
    return n;
}

EncoderGrads EncoderGrads::zeros_like(const EncoderModel& model) {
    EncoderGrads g;
    for (const auto& layer : model.layers()) {
        g.weight.emplace_back(layer.out_dim(), layer.in_dim());
        g.bias.emplace_back(layer.out_dim(), 0.0);
    }
    g.input.assign(model.input_dim(), 0.0);
    return g;
}

std::vector<std::span<double>> EncoderGrads::parameters() {
    std::vector<std::span<double>> out;
    for (std::size_t l = 0; l < weight.size(); ++l) {
        out.push_back(weight[l].flat());
        out.push_back(bias[l]);
    }
    return out;
}

ForwardCache encode_forward(const EncoderModel& model, std::span<const double> features) {
    if (features.size() != model.input_dim())
        throw Error(ErrorKind::dim_mismatch, "encoder expects " + std::to_string(model.input_dim()) +
                                                 " features, got " + std::to_string(features.size()));
    ForwardCache cache;
    Vec h(features.begin(), features.end());
    for (const auto& layer : model.layers()) {
        Vec z(layer.out_dim());
        for (std::size_t o = 0; o < layer.out_dim(); ++o) z[o] = dot(layer.weight.row(o), h) + layer.bias[o];
        Vec out(z.size());
        for (std::size_t o = 0; o < z.size(); ++o) out[o] = activate(layer.activation, z[o]);
        cache.inputs.push_back(std::move(h));
        cache.preactivations.push_back(std::move(z));
        h = std::move(out);
    }
    cache.raw = std::move(h);
    cache.raw_norm = norm2(cache.raw);
    cache.embedding = unit_normalize(cache.raw);
    return cache;
}

Vec encode(const EncoderModel& model, std::span<const double> features) {
    return encode_forward(model, features).embedding;
}

void encode_backward(const EncoderModel& model, const ForwardCache& cache, std::span<const double> grad_embedding,
                     EncoderGrads& grads) {
    const auto& x = cache.embedding;
    if (grad_embedding.size() != x.size())
        throw Error(ErrorKind::dim_mismatch, "embedding gradient has wrong dimension");

    // d(v/|v|)/dv = (I - x x^T) / |v|
    const double radial = dot(x, grad_embedding);
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = (grad_embedding[i] - radial * x[i]) / cache.raw_norm;

    const auto& layers = model.layers();
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& layer = layers[l];
        const auto& z = cache.preactivations[l];
        const Vec& out = l + 1 < layers.size() ? cache.inputs[l + 1] : cache.raw;
        for (std::size_t o = 0; o < z.size(); ++o) g[o] *= activate_derivative(layer.activation, z[o], out[o]);

        const auto& in = cache.inputs[l];
        auto& gw = grads.weight[l];
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            grads.bias[l][o] += g[o];
            auto row = gw.row(o);
            for (std::size_t i = 0; i < layer.in_dim(); ++i) row[i] += g[o] * in[i];
        }
        Vec prev(layer.in_dim(), 0.0);
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            const auto w = layer.weight.row(o);
            for (std::size_t i = 0; i < layer.in_dim(); ++i) prev[i] += w[i] * g[o];
        }
        g = std::move(prev);
    }
    grads.input = std::move(g);
}

EncoderGrads encode_backward(const EncoderModel& model, std::span<const double> features,
                             std::span<const double> grad_embedding) {
    auto grads = EncoderGrads::zeros_like(model);
    encode_backward(model, encode_forward(model, features), grad_embedding, grads);
    return grads;
}

void CentroidBank::renormalize() {
    for (std::size_t q = 0; q < levels(); ++q) weights.set_row(q, unit_normalize(weights.row(q)));
}

double CentroidBank::mean_pairwise_cosine() const {
    if (levels() < 2) return 1.0;
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < levels(); ++a)
        for (std::size_t b = a + 1; b < levels(); ++b, ++pairs) acc += cosine(weights.row(a), weights.row(b));
    return acc / static_cast<double>(pairs);
}

std::string_view to_string(CentroidInit scheme) {
    return scheme == CentroidInit::orthogonal ? "orthogonal" : "random-unit";
}

CentroidInit parse_centroid_init(std::string_view text) {
    if (text == "orthogonal") return CentroidInit::orthogonal;
    if (text == "random-unit") return CentroidInit::random_unit;
    throw Error(ErrorKind::invalid_scheme, "unknown centroid init \"" + std::string(text) + "\"");
}

CentroidBank init_centroids(std::size_t levels, std::size_t dim, CentroidInit scheme, Rng& rng) {
    if (levels < 1) throw Error(ErrorKind::config_error, "centroid bank needs at least one level");
    if (dim < 2) throw Error(ErrorKind::config_error, "centroid dimension must be >= 2");
    if (scheme == CentroidInit::orthogonal && levels > dim)
        throw Error(ErrorKind::invalid_scheme, "orthogonal init needs Q <= D (Q=" + std::to_string(levels) +
                                                   ", D=" + std::to_string(dim) + ")");
    CentroidBank bank{Matrix(levels, dim)};
    for (std::size_t q = 0; q < levels; ++q) {
        Vec v(dim);
        for (;;) {
            for (double& x : v) x = rng.normal();
            if (scheme == CentroidInit::orthogonal) {
                // Two Gram-Schmidt passes keep the rows orthogonal to ~1e-16.
                for (int pass = 0; pass < 2; ++pass)
                    for (std::size_t p = 0; p < q; ++p) {
                        const auto prev = bank.weights.row(p);
                        const double c = dot(prev, v);
                        for (std::size_t i = 0; i < dim; ++i) v[i] -= c * prev[i];
                    }
            }
            if (norm2(v) > 1e-8) break;
        }
        bank.weights.set_row(q, unit_normalize(v));
    }
    return bank;
}

BinaryHead init_head(std::size_t dim, Rng& rng) {
    BinaryHead head{Vec(dim), 0.0};
    const double stddev = std::sqrt(1.0 / static_cast<double>(dim));
    for (double& w : head.weight) w = stddev * rng.normal();
    return head;
}

}  // namespace qamo
