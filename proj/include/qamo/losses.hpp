#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "qamo/data.hpp"
#include "qamo/model.hpp"
#include "qamo/numerics.hpp"

namespace qamo {

struct QamoHyper {
    double alpha = 20.0;   // one-class scale
    double m0 = 0.9;       // bona fide margin
    double m1 = 0.2;       // spoof margin
    double s = 20.0;       // quality AM-Softmax scale
    double m = 0.4;        // quality AM-Softmax additive margin
    double lambda = 0.1;   // quality loss weight

    double margin(Label y) const { return y == Label::bonafide ? m0 : m1; }
    void validate() const;
    bool operator==(const QamoHyper&) const = default;
};

void to_json(nlohmann::json& j, const QamoHyper& h);
void from_json(const nlohmann::json& j, QamoHyper& h);

// One mini-batch of embeddings. Rows are expected to be unit-norm, but the
// losses only use raw dot products, so they stay differentiable off-sphere.
struct Batch {
    Matrix embeddings;                     // N x D
    std::vector<Label> labels;             // N
    std::vector<std::optional<int>> quality;  // N; present for bona fide

    std::size_t size() const { return labels.size(); }
    std::size_t bonafide_count() const;
    void validate(std::size_t dim) const;
};

struct LossTerms {
    double qamo = 0.0;
    double quality = 0.0;
    double wce = 0.0;
};

struct HeadGrads {
    Vec weight;
    double bias = 0.0;
};

struct LossOutput {
    double value = 0.0;
    Matrix grad_embeddings;  // N x D
    Matrix grad_centroids;   // Q x D (empty for wce_loss)
    std::optional<HeadGrads> grad_head;
    LossTerms terms;
};

struct Distance {
    double value = 0.0;
    std::size_t index = 0;
};

// Bona fide: similarity to its own quality centroid. Spoof: the largest
// similarity over all centroids, lowest index on exact ties.
Distance similarity_distance(std::span<const double> embedding, Label label, std::optional<int> quality,
                             const CentroidBank& bank);

// (1/N) sum softplus(alpha (m_y - d) (-1)^y)
LossOutput qamo_loss(const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper);

// AM-Softmax over quality levels, bona fide samples only, averaged over the
// bona fide count. Zero with zero gradients when the batch has none.
LossOutput quality_loss(const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper);

// qamo_loss + lambda * quality_loss
LossOutput combined_loss(const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper);

// qamo_loss against a single-centroid bank; quality levels are ignored.
LossOutput oc_softmax_loss(const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper);

struct ClassWeights {
    double bonafide = 1.0;
    double spoof = 1.0;

    double of(Label y) const { return y == Label::bonafide ? bonafide : spoof; }
    bool operator==(const ClassWeights&) const = default;
};

// Weighted sigmoid cross-entropy on the head's bona fide logit, normalized by
// the total weight of the batch.
LossOutput wce_loss(const Batch& batch, const BinaryHead& head, const ClassWeights& weights);

}  // namespace qamo
