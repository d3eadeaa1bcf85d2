#include "qamo/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "qamo/error.hpp"
#include "qamo/losses.hpp"
#include "qamo/scoring.hpp"

namespace qamo {

using nlohmann::json;

namespace {

constexpr double kDivergenceLimit = 1e6;

// Stream ids for Rng::derive; each concern draws from its own sequence.
enum Stream : std::uint64_t { kInit = 1, kSplit = 2, kShuffle = 3, kAugment = 4 };

Batch gather(const std::vector<UtteranceRecord>& records, std::span<const std::size_t> idx,
             const std::vector<ForwardCache>& caches) {
    Batch b{Matrix(idx.size(), caches.front().embedding.size()), {}, {}};
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& rec = records[idx[k]];
        b.embeddings.set_row(k, caches[k].embedding);
        b.labels.push_back(*rec.label);
        b.quality.push_back(rec.quality);
    }
    return b;
}

void check_records(const std::vector<UtteranceRecord>& records, const TrainConfig& config, std::size_t input_dim) {
    bool bona = false, fake = false;
    for (const auto& rec : records) {
        if (!rec.label) throw Error(ErrorKind::config_error, "training record \"" + rec.id + "\" has no label");
        if (rec.features.size() != input_dim)
            throw Error(ErrorKind::dim_mismatch, "record \"" + rec.id + "\" has " + std::to_string(rec.features.size()) +
                                                     " features, expected " + std::to_string(input_dim));
        bona = bona || *rec.label == Label::bonafide;
        fake = fake || *rec.label == Label::spoof;
        if (config.uses_quality() && *rec.label == Label::bonafide && !rec.quality)
            throw Error(ErrorKind::missing_quality, "bona fide record \"" + rec.id + "\" has no MOS/quality level");
    }
    if (!bona || !fake) throw Error(ErrorKind::config_error, "training data must contain both classes");
}

std::optional<double> validation_eer(const std::vector<UtteranceRecord>& records, const Checkpoint& ckpt,
                                     ScoreStrategy strategy) {
    if (records.empty()) return std::nullopt;
    const auto report = score_dataset(records, ckpt, strategy);
    if (!report.summary) return std::nullopt;
    return report.summary->eer.eer;
}

}  // namespace

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, Rng& rng) {
    if (batch_size < 1) throw Error(ErrorKind::config_error, "batch size must be >= 1");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < count; start += batch_size) {
        const std::size_t end = std::min(count, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

void optimizer_step(std::span<const ParamBlock> blocks, OptimizerState& state, const OptimizerConfig& config) {
    if (state.first.empty()) {
        for (const auto& b : blocks) {
            state.first.emplace_back(b.values.size(), 0.0);
            state.second.emplace_back(config.kind == OptimizerKind::adam ? b.values.size() : 0, 0.0);
        }
    }
    if (state.first.size() != blocks.size())
        throw Error(ErrorKind::dim_mismatch, "optimizer state was built for a different parameter set");
    ++state.steps;
    const double t = static_cast<double>(state.steps);
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);

    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& b = blocks[k];
        if (b.values.size() != b.grads.size() || state.first[k].size() != b.values.size())
            throw Error(ErrorKind::dim_mismatch, "parameter/gradient shape mismatch in block " + std::to_string(k));
        auto& m = state.first[k];
        if (config.kind == OptimizerKind::sgd_momentum) {
            for (std::size_t i = 0; i < b.values.size(); ++i) {
                m[i] = config.momentum * m[i] + b.grads[i];
                b.values[i] -= config.lr * m[i];
            }
        } else {
            auto& v = state.second[k];
            for (std::size_t i = 0; i < b.values.size(); ++i) {
                const double g = b.grads[i];
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
                b.values[i] -= config.lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + config.eps);
            }
        }
        if (b.unit_row_length > 0) {
            for (std::size_t start = 0; start < b.values.size(); start += b.unit_row_length) {
                auto row = b.values.subspan(start, b.unit_row_length);
                const Vec unit = unit_normalize(row);
                std::copy(unit.begin(), unit.end(), row.begin());
            }
        }
    }
}

TrainResult train(const std::vector<UtteranceRecord>& records, const TrainConfig& config) {
    config.validate();
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = Rng::derive(config.seed, kSplit);
    split_rng.shuffle(order);
    const auto held_out =
        static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(records.size())));
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held_out));
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(held_out), order.end());
    std::vector<UtteranceRecord> validation, training;
    for (std::size_t k = 0; k < order.size(); ++k) (k < held_out ? validation : training).push_back(records[order[k]]);
    return train(training, validation, config);
}

TrainResult train(const std::vector<UtteranceRecord>& train_records,
                  const std::vector<UtteranceRecord>& validation_records, const TrainConfig& config) {
    config.validate();
    if (train_records.empty()) throw Error(ErrorKind::config_error, "no training records");
    const std::size_t input_dim = train_records.front().features.size();
    check_records(train_records, config, input_dim);

    Rng init_rng = Rng::derive(config.seed, kInit);
    Rng shuffle_rng = Rng::derive(config.seed, kShuffle);
    Rng augment_rng = Rng::derive(config.seed, kAugment);

    Checkpoint ckpt;
    ckpt.policy = config.policy;
    ckpt.config = config;
    ckpt.metadata.seed = config.seed;
    ckpt.encoder = EncoderModel::make(input_dim, config.hidden, config.embedding_dim, config.activation, init_rng);
    ckpt.bank = init_centroids(config.centroid_count(), config.embedding_dim, config.centroid_init, init_rng);
    if (config.uses_head()) ckpt.head = init_head(config.embedding_dim, init_rng);

    const bool trains_bank = config.loss != LossKind::wce;
    OptimizerState opt_state;
    TrainReport report;

    const auto augmented_records =
        balance_augmentation(train_records, config.augment_fraction, config.noise_scale, augment_rng);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto batches = make_batches(augmented_records.size(), config.batch_size, shuffle_rng);

        EpochMetrics metrics;
        metrics.epoch = epoch;
        double seen = 0.0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& idx = batches[bi];
            std::vector<ForwardCache> caches;
            caches.reserve(idx.size());
            for (auto i : idx) caches.push_back(encode_forward(ckpt.encoder, augmented_records[i].features));
            const Batch batch = gather(augmented_records, idx, caches);

            LossOutput out;
            switch (config.loss) {
                case LossKind::qamo: out = combined_loss(batch, ckpt.bank, config.hyper); break;
                case LossKind::ocsoftmax: out = oc_softmax_loss(batch, ckpt.bank, config.hyper); break;
                case LossKind::wce: out = wce_loss(batch, *ckpt.head, config.class_weights); break;
                case LossKind::wce_plus_quality: {
                    out = wce_loss(batch, *ckpt.head, config.class_weights);
                    const auto q = quality_loss(batch, ckpt.bank, config.hyper);
                    out.value += config.hyper.lambda * q.value;
                    out.terms.quality = q.value;
                    for (std::size_t i = 0; i < out.grad_embeddings.flat().size(); ++i)
                        out.grad_embeddings.flat()[i] += config.hyper.lambda * q.grad_embeddings.flat()[i];
                    out.grad_centroids = q.grad_centroids;
                    for (double& g : out.grad_centroids.flat()) g *= config.hyper.lambda;
                    break;
                }
            }
            if (!std::isfinite(out.value) || out.value > kDivergenceLimit) {
                std::ostringstream msg;
                msg << "loss " << out.value << " at epoch " << epoch << ", batch " << bi << " (qamo term "
                    << out.terms.qamo << ", quality term " << out.terms.quality << ", wce term " << out.terms.wce
                    << ")";
                throw Error(ErrorKind::divergence_detected, msg.str());
            }

            auto grads = EncoderGrads::zeros_like(ckpt.encoder);
            for (std::size_t k = 0; k < idx.size(); ++k)
                encode_backward(ckpt.encoder, caches[k], out.grad_embeddings.row(k), grads);

            std::vector<ParamBlock> blocks;
            auto params = ckpt.encoder.parameters();
            auto grad_spans = grads.parameters();
            for (std::size_t p = 0; p < params.size(); ++p) blocks.push_back({params[p], grad_spans[p], 0});
            if (trains_bank) blocks.push_back({ckpt.bank.weights.flat(), out.grad_centroids.flat(), ckpt.bank.dim()});
            if (ckpt.head) {
                blocks.push_back({ckpt.head->weight, out.grad_head->weight, 0});
                blocks.push_back({std::span<double>(&ckpt.head->bias, 1), std::span<const double>(&out.grad_head->bias, 1), 0});
            }
            optimizer_step(blocks, opt_state, config.optimizer);

            const double n = static_cast<double>(idx.size());
            seen += n;
            metrics.loss += n * out.value;
            metrics.terms.qamo += n * out.terms.qamo;
            metrics.terms.quality += n * out.terms.quality;
            metrics.terms.wce += n * out.terms.wce;
        }
        metrics.loss /= seen;
        metrics.terms.qamo /= seen;
        metrics.terms.quality /= seen;
        metrics.terms.wce /= seen;
        metrics.inter_centroid_cosine = ckpt.bank.mean_pairwise_cosine();
        if (config.loss != LossKind::wce) {
            metrics.val_eer_ensemble = validation_eer(validation_records, ckpt, ScoreStrategy::ensemble);
            metrics.val_eer_max = validation_eer(validation_records, ckpt, ScoreStrategy::max);
        }
        if (ckpt.head) metrics.val_eer_head = validation_eer(validation_records, ckpt, ScoreStrategy::head);

        ckpt.metadata.loss_curve.push_back(metrics.loss);
        ckpt.metadata.epochs_completed = epoch;
        report.epochs.push_back(metrics);
    }
    return {std::move(ckpt), std::move(report)};
}

json report_to_json(const TrainReport& report) {
    json epochs = json::array();
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    for (const auto& e : report.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"loss", e.loss},
                          {"qamo_term", e.terms.qamo},
                          {"quality_term", e.terms.quality},
                          {"wce_term", e.terms.wce},
                          {"val_eer_ensemble", opt(e.val_eer_ensemble)},
                          {"val_eer_max", opt(e.val_eer_max)},
                          {"val_eer_head", opt(e.val_eer_head)},
                          {"inter_centroid_cosine", e.inter_centroid_cosine}});
    return json{{"epochs", std::move(epochs)}, {"checkpoint", report.checkpoint_path}};
}

std::string report_csv(const TrainReport& report) {
    std::ostringstream out;
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    out << "epoch,loss,qamo_term,quality_term,wce_term,val_eer_ensemble,val_eer_max,val_eer_head,inter_centroid_cosine\n";
    for (const auto& e : report.epochs)
        out << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.terms.qamo) << ','
            << format_double(e.terms.quality) << ',' << format_double(e.terms.wce) << ',' << opt(e.val_eer_ensemble)
            << ',' << opt(e.val_eer_max) << ',' << opt(e.val_eer_head) << ','
            << format_double(e.inter_centroid_cosine) << '\n';
    return out.str();
}

}  // namespace qamo
