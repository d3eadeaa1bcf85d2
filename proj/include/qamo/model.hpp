#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "qamo/numerics.hpp"
#include "qamo/rng.hpp"

namespace qamo {

enum class Activation { relu, tanh, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view text);

struct DenseLayer {
    Matrix weight;  // out x in
    Vec bias;       // out
    Activation activation = Activation::identity;

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }
    bool operator==(const DenseLayer&) const = default;
};

// Feed-forward encoder; its output is always unit-normalized before use.
class EncoderModel {
public:
    EncoderModel() = default;
    explicit EncoderModel(std::vector<DenseLayer> layers);

    // He-initialized hidden layers with `hidden_activation`, identity output layer.
    static EncoderModel make(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t embedding_dim,
                             Activation hidden_activation, Rng& rng);

    std::size_t input_dim() const { return layers_.front().in_dim(); }
    std::size_t embedding_dim() const { return layers_.back().out_dim(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    // Weight then bias for each layer, in order. Shared by the optimizer and
    // the gradient checks.
    std::vector<std::span<double>> parameters();
    std::size_t parameter_count() const;

    bool operator==(const EncoderModel&) const = default;

private:
    std::vector<DenseLayer> layers_;
};

// Activations retained by the forward pass for backpropagation.
struct ForwardCache {
    std::vector<Vec> inputs;       // input to each layer
    std::vector<Vec> preactivations;
    Vec raw;                       // last layer output before normalization
    double raw_norm = 0.0;
    Vec embedding;                 // raw / raw_norm
};

struct EncoderGrads {
    std::vector<Matrix> weight;
    std::vector<Vec> bias;
    Vec input;

    static EncoderGrads zeros_like(const EncoderModel& model);
    std::vector<std::span<double>> parameters();
};

ForwardCache encode_forward(const EncoderModel& model, std::span<const double> features);
Vec encode(const EncoderModel& model, std::span<const double> features);

// Accumulates parameter gradients into `grads` and overwrites grads.input.
// The unit-normalization Jacobian (I - x x^T) / ||raw|| is applied first.
void encode_backward(const EncoderModel& model, const ForwardCache& cache, std::span<const double> grad_embedding,
                     EncoderGrads& grads);
EncoderGrads encode_backward(const EncoderModel& model, std::span<const double> features,
                             std::span<const double> grad_embedding);

// Q x D matrix of unit-norm centroids, one row per quality level.
struct CentroidBank {
    Matrix weights;

    std::size_t levels() const { return weights.rows(); }
    std::size_t dim() const { return weights.cols(); }
    std::span<const double> centroid(std::size_t q) const { return weights.row(q); }
    void renormalize();
    // Mean cosine over distinct centroid pairs; 1 for a single centroid.
    double mean_pairwise_cosine() const;

    bool operator==(const CentroidBank&) const = default;
};

enum class CentroidInit { random_unit, orthogonal };

std::string_view to_string(CentroidInit scheme);
CentroidInit parse_centroid_init(std::string_view text);

CentroidBank init_centroids(std::size_t levels, std::size_t dim, CentroidInit scheme, Rng& rng);

// Logistic head for the cross-entropy baselines. The logit is the bona fide
// log-odds, so a larger value means more likely bona fide.
struct BinaryHead {
    Vec weight;
    double bias = 0.0;

    double logit(std::span<const double> embedding) const { return dot(weight, embedding) + bias; }
    bool operator==(const BinaryHead&) const = default;
};

BinaryHead init_head(std::size_t dim, Rng& rng);

}  // namespace qamo
