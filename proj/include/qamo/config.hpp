#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qamo/data.hpp"
#include "qamo/losses.hpp"
#include "qamo/model.hpp"

namespace qamo {

enum class LossKind { qamo, ocsoftmax, wce, wce_plus_quality };
enum class OptimizerKind { sgd_momentum, adam };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view text);
std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view text);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double momentum = 0.9;  // sgd-momentum only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const OptimizerConfig&) const = default;
};

// Every field has a default; JSON configs only need to name what they change.
struct TrainConfig {
    LossKind loss = LossKind::qamo;
    QamoHyper hyper;
    OptimizerConfig optimizer;
    std::size_t batch_size = 32;
    int epochs = 50;
    std::uint64_t seed = 1;
    double augment_fraction = 0.4;
    double noise_scale = 0.5;
    double validation_fraction = 0.1;
    QualityPolicy policy;
    std::vector<std::size_t> hidden{32, 32};
    std::size_t embedding_dim = 16;
    Activation activation = Activation::relu;
    CentroidInit centroid_init = CentroidInit::orthogonal;
    ClassWeights class_weights;

    // Centroid count: one for OC-Softmax, one per quality level otherwise.
    std::size_t centroid_count() const;
    bool uses_quality() const { return loss == LossKind::qamo || loss == LossKind::wce_plus_quality; }
    bool uses_head() const { return loss == LossKind::wce || loss == LossKind::wce_plus_quality; }
    void validate() const;

    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace qamo
