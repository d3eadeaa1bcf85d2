#include "qamo/losses.hpp"

#include <cmath>
#include <string>

#include "qamo/error.hpp"
#include "qamo/json_util.hpp"

namespace qamo {

using nlohmann::json;

void QamoHyper::validate() const {
    if (!(alpha > 0.0)) throw Error(ErrorKind::config_error, "alpha must be > 0");
    if (!(s > 0.0)) throw Error(ErrorKind::config_error, "s must be > 0");
    if (!(-1.0 <= m1 && m1 < m0 && m0 <= 1.0)) throw Error(ErrorKind::config_error, "margins need -1 <= m1 < m0 <= 1");
    if (!(m >= 0.0)) throw Error(ErrorKind::config_error, "m must be >= 0");
    if (!(lambda >= 0.0)) throw Error(ErrorKind::config_error, "lambda must be >= 0");
}

void to_json(json& j, const QamoHyper& h) {
    j = json{{"alpha", h.alpha}, {"m0", h.m0}, {"m1", h.m1}, {"s", h.s}, {"m", h.m}, {"lambda", h.lambda}};
}

void from_json(const json& j, QamoHyper& h) {
    using json_util::read_if_present;
    json_util::check_keys(j, {"alpha", "m0", "m1", "s", "m", "lambda"}, "hyper");
    read_if_present(j, "alpha", h.alpha);
    read_if_present(j, "m0", h.m0);
    read_if_present(j, "m1", h.m1);
    read_if_present(j, "s", h.s);
    read_if_present(j, "m", h.m);
    read_if_present(j, "lambda", h.lambda);
    h.validate();
}

std::size_t Batch::bonafide_count() const {
    std::size_t n = 0;
    for (auto y : labels) n += y == Label::bonafide;
    return n;
}

void Batch::validate(std::size_t dim) const {
    if (labels.empty()) throw Error(ErrorKind::config_error, "empty batch");
    if (embeddings.rows() != labels.size() || quality.size() != labels.size())
        throw Error(ErrorKind::dim_mismatch, "batch fields disagree on N");
    if (embeddings.cols() != dim)
        throw Error(ErrorKind::dim_mismatch, "batch embeddings have dim " + std::to_string(embeddings.cols()) +
                                                 ", centroids have " + std::to_string(dim));
}

namespace {

void check_level(std::optional<int> quality, std::size_t levels, std::size_t row) {
    if (!quality)
        throw Error(ErrorKind::missing_quality, "bona fide sample " + std::to_string(row) + " has no quality level");
    if (*quality < 0 || static_cast<std::size_t>(*quality) >= levels)
        throw Error(ErrorKind::missing_quality, "sample " + std::to_string(row) + " quality level " +
                                                    std::to_string(*quality) + " has no centroid");
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

LossOutput one_class_loss(const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper, bool route_to_zero) {
    batch.validate(bank.dim());
    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    LossOutput out{0.0, Matrix(n, bank.dim()), Matrix(bank.levels(), bank.dim()), std::nullopt, {}};
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = batch.embeddings.row(i);
        const Label y = batch.labels[i];
        const auto q = route_to_zero ? std::optional<int>(0) : batch.quality[i];
        const Distance d = similarity_distance(x, y, q, bank);
        // z = alpha (m_y - d) (-1)^y, so dz/dd = -alpha for bona fide, +alpha for spoof.
        const double sign = y == Label::bonafide ? -1.0 : 1.0;
        const double z = sign * hyper.alpha * (d.value - hyper.margin(y));
        out.value += softplus(z) * inv_n;
        const double dvalue_dd = inv_n * sigmoid(z) * sign * hyper.alpha;
        axpy(dvalue_dd, bank.centroid(d.index), out.grad_embeddings.row(i));
        axpy(dvalue_dd, x, out.grad_centroids.row(d.index));
    }
    out.terms.qamo = out.value;
    return out;
}

}  // namespace

Distance similarity_distance(std::span<const double> embedding, Label label, std::optional<int> quality,
                             const CentroidBank& bank) {
    if (label == Label::bonafide) {
        check_level(quality, bank.levels(), 0);
        const auto q = static_cast<std::size_t>(*quality);
        return {dot(bank.centroid(q), embedding), q};
    }
    Distance best{dot(bank.centroid(0), embedding), 0};
    for (std::size_t q = 1; q < bank.levels(); ++q) {
        const double sim = dot(bank.centroid(q), embedding);
        if (sim > best.value) best = {sim, q};
    }
    return best;
}

LossOutput qamo_loss(const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper) {
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (batch.labels[i] == Label::bonafide) check_level(batch.quality[i], bank.levels(), i);
    return one_class_loss(batch, bank, hyper, false);
}

LossOutput oc_softmax_loss(const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper) {
    if (bank.levels() != 1)
        throw Error(ErrorKind::config_error, "OC-Softmax needs a single-centroid bank, got Q=" +
                                                 std::to_string(bank.levels()));
    return one_class_loss(batch, bank, hyper, true);
}

LossOutput quality_loss(const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper) {
    batch.validate(bank.dim());
    const std::size_t n = batch.size();
    const std::size_t levels = bank.levels();
    LossOutput out{0.0, Matrix(n, bank.dim()), Matrix(levels, bank.dim()), std::nullopt, {}};
    const std::size_t bonafide = batch.bonafide_count();
    if (bonafide == 0) return out;
    const double inv_b = 1.0 / static_cast<double>(bonafide);

    Vec logits(levels);
    for (std::size_t i = 0; i < n; ++i) {
        if (batch.labels[i] != Label::bonafide) continue;
        check_level(batch.quality[i], levels, i);
        const auto target = static_cast<std::size_t>(*batch.quality[i]);
        const auto x = batch.embeddings.row(i);
        for (std::size_t j = 0; j < levels; ++j) {
            const double sim = dot(bank.centroid(j), x);
            logits[j] = j == target ? hyper.s * (sim - hyper.m) : hyper.s * sim;
        }
        const double lse = log_sum_exp(logits);
        out.value += (lse - logits[target]) * inv_b;
        for (std::size_t j = 0; j < levels; ++j) {
            // d/dlogit_j = softmax_j - [j == target]; dlogit_j/dsim_j = s
            const double p = std::exp(logits[j] - lse);
            const double coeff = inv_b * hyper.s * (p - (j == target ? 1.0 : 0.0));
            axpy(coeff, bank.centroid(j), out.grad_embeddings.row(i));
            axpy(coeff, x, out.grad_centroids.row(j));
        }
    }
    out.terms.quality = out.value;
    return out;
}

LossOutput combined_loss(const Batch& batch, const CentroidBank& bank, const QamoHyper& hyper) {
    LossOutput out = qamo_loss(batch, bank, hyper);
    const LossOutput quality = quality_loss(batch, bank, hyper);
    out.terms.quality = quality.value;
    if (hyper.lambda == 0.0) return out;
    out.value += hyper.lambda * quality.value;
    axpy(hyper.lambda, quality.grad_embeddings.flat(), out.grad_embeddings.flat());
    axpy(hyper.lambda, quality.grad_centroids.flat(), out.grad_centroids.flat());
    return out;
}

LossOutput wce_loss(const Batch& batch, const BinaryHead& head, const ClassWeights& weights) {
    batch.validate(head.weight.size());
    const std::size_t n = batch.size();
    LossOutput out{0.0, Matrix(n, head.weight.size()), Matrix(), HeadGrads{Vec(head.weight.size(), 0.0), 0.0}, {}};
    double total_weight = 0.0;
    for (auto y : batch.labels) total_weight += weights.of(y);
    if (!(total_weight > 0.0)) throw Error(ErrorKind::config_error, "class weights sum to zero on this batch");

    auto& gh = *out.grad_head;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = batch.embeddings.row(i);
        const double z = head.logit(x);
        const double w = weights.of(batch.labels[i]) / total_weight;
        // -log sigmoid(z) for bona fide, -log(1 - sigmoid(z)) for spoof
        const bool bona = batch.labels[i] == Label::bonafide;
        out.value += w * softplus(bona ? -z : z);
        const double dz = w * (sigmoid(z) - (bona ? 1.0 : 0.0));
        axpy(dz, head.weight, out.grad_embeddings.row(i));
        axpy(dz, x, gh.weight);
        gh.bias += dz;
    }
    out.terms.wce = out.value;
    return out;
}

}  // namespace qamo
