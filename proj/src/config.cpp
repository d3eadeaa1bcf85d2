#include "qamo/config.hpp"

#include <string>

#include "qamo/error.hpp"
#include "qamo/json_util.hpp"

namespace qamo {

using nlohmann::json;
using json_util::read_if_present;

std::string_view to_string(LossKind kind) {
    switch (kind) {
        case LossKind::qamo: return "qamo";
        case LossKind::ocsoftmax: return "ocsoftmax";
        case LossKind::wce: return "wce";
        case LossKind::wce_plus_quality: return "wce_plus_quality";
    }
    return "qamo";
}

LossKind parse_loss_kind(std::string_view text) {
    if (text == "qamo") return LossKind::qamo;
    if (text == "ocsoftmax") return LossKind::ocsoftmax;
    if (text == "wce") return LossKind::wce;
    if (text == "wce_plus_quality") return LossKind::wce_plus_quality;
    throw Error(ErrorKind::config_error, "unknown loss \"" + std::string(text) + "\"");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd-momentum"; }

OptimizerKind parse_optimizer_kind(std::string_view text) {
    if (text == "adam") return OptimizerKind::adam;
    if (text == "sgd-momentum") return OptimizerKind::sgd_momentum;
    throw Error(ErrorKind::config_error, "unknown optimizer \"" + std::string(text) + "\"");
}

std::size_t TrainConfig::centroid_count() const {
    return loss == LossKind::ocsoftmax ? 1 : static_cast<std::size_t>(policy.num_levels());
}

void TrainConfig::validate() const {
    hyper.validate();
    policy.validate();
    if (!(optimizer.lr > 0.0)) throw Error(ErrorKind::config_error, "learning rate must be > 0");
    if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0))
        throw Error(ErrorKind::config_error, "momentum must lie in [0, 1)");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
        throw Error(ErrorKind::config_error, "Adam betas must lie in [0, 1)");
    if (!(optimizer.eps > 0.0)) throw Error(ErrorKind::config_error, "Adam eps must be > 0");
    if (epochs < 1) throw Error(ErrorKind::config_error, "epochs must be >= 1");
    if (batch_size < 1) throw Error(ErrorKind::config_error, "batch_size must be >= 1");
    if (!(augment_fraction >= 0.0 && augment_fraction <= 1.0))
        throw Error(ErrorKind::config_error, "augment_fraction must lie in [0, 1]");
    if (!(noise_scale >= 0.0)) throw Error(ErrorKind::config_error, "noise_scale must be >= 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw Error(ErrorKind::config_error, "validation_fraction must lie in [0, 1)");
    if (embedding_dim < 2) throw Error(ErrorKind::config_error, "embedding_dim must be >= 2");
    for (auto h : hidden)
        if (h < 1) throw Error(ErrorKind::config_error, "hidden widths must be >= 1");
    if (!(class_weights.bonafide >= 0.0 && class_weights.spoof >= 0.0 &&
          class_weights.bonafide + class_weights.spoof > 0.0))
        throw Error(ErrorKind::config_error, "class weights must be non-negative and not both zero");
    if (centroid_init == CentroidInit::orthogonal && centroid_count() > embedding_dim)
        throw Error(ErrorKind::invalid_scheme, "orthogonal centroid init needs Q <= embedding_dim");
}

void to_json(json& j, const OptimizerConfig& c) {
    j = json{{"kind", to_string(c.kind)}, {"lr", c.lr},       {"momentum", c.momentum},
             {"beta1", c.beta1},          {"beta2", c.beta2}, {"eps", c.eps}};
}

void from_json(const json& j, OptimizerConfig& c) {
    json_util::check_keys(j, {"kind", "lr", "momentum", "beta1", "beta2", "eps"}, "optimizer");
    if (j.contains("kind")) {
        std::string kind;
        read_if_present(j, "kind", kind);
        c.kind = parse_optimizer_kind(kind);
    }
    read_if_present(j, "lr", c.lr);
    read_if_present(j, "momentum", c.momentum);
    read_if_present(j, "beta1", c.beta1);
    read_if_present(j, "beta2", c.beta2);
    read_if_present(j, "eps", c.eps);
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"loss", to_string(c.loss)},
             {"hyper", c.hyper},
             {"optimizer", c.optimizer},
             {"batch_size", c.batch_size},
             {"epochs", c.epochs},
             {"seed", c.seed},
             {"augment_fraction", c.augment_fraction},
             {"noise_scale", c.noise_scale},
             {"validation_fraction", c.validation_fraction},
             {"policy", c.policy},
             {"hidden", c.hidden},
             {"embedding_dim", c.embedding_dim},
             {"activation", to_string(c.activation)},
             {"centroid_init", to_string(c.centroid_init)},
             {"class_weights", {{"bonafide", c.class_weights.bonafide}, {"spoof", c.class_weights.spoof}}}};
}

void from_json(const json& j, TrainConfig& c) {
    json_util::check_keys(j,
                          {"loss", "hyper", "optimizer", "batch_size", "epochs", "seed", "augment_fraction",
                           "noise_scale", "validation_fraction", "policy", "hidden", "embedding_dim", "activation",
                           "centroid_init", "class_weights"},
                          "train config");
    std::string text;
    if (j.contains("loss")) {
        read_if_present(j, "loss", text);
        c.loss = parse_loss_kind(text);
    }
    if (j.contains("hyper")) c.hyper = j.at("hyper").get<QamoHyper>();
    if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<OptimizerConfig>();
    read_if_present(j, "batch_size", c.batch_size);
    read_if_present(j, "epochs", c.epochs);
    read_if_present(j, "seed", c.seed);
    read_if_present(j, "augment_fraction", c.augment_fraction);
    read_if_present(j, "noise_scale", c.noise_scale);
    read_if_present(j, "validation_fraction", c.validation_fraction);
    if (j.contains("policy")) c.policy = j.at("policy").get<QualityPolicy>();
    read_if_present(j, "hidden", c.hidden);
    read_if_present(j, "embedding_dim", c.embedding_dim);
    if (j.contains("activation")) {
        read_if_present(j, "activation", text);
        c.activation = parse_activation(text);
    }
    if (j.contains("centroid_init")) {
        read_if_present(j, "centroid_init", text);
        try {
            c.centroid_init = parse_centroid_init(text);
        } catch (const Error& e) {
            throw Error(ErrorKind::config_error, e.detail());
        }
    }
    if (j.contains("class_weights")) {
        const auto& w = j.at("class_weights");
        json_util::check_keys(w, {"bonafide", "spoof"}, "class_weights");
        read_if_present(w, "bonafide", c.class_weights.bonafide);
        read_if_present(w, "spoof", c.class_weights.spoof);
    }
    c.validate();
}

}  // namespace qamo
