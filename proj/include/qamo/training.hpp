#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qamo/checkpoint.hpp"
#include "qamo/config.hpp"
#include "qamo/data.hpp"
#include "qamo/rng.hpp"

namespace qamo {

// Shuffled index batches covering [0, count); the last batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, Rng& rng);

// One contiguous parameter array and its gradient. When unit_row_length is
// non-zero the array is a stack of rows of that length, each projected back
// onto the unit sphere after the update.
struct ParamBlock {
    std::span<double> values;
    std::span<const double> grads;
    std::size_t unit_row_length = 0;
};

struct OptimizerState {
    std::vector<Vec> first;   // momentum buffer / Adam first moment
    std::vector<Vec> second;  // Adam second moment
    long steps = 0;
};

// SGD with momentum: v = mu v + g, p -= lr v.
// Adam: bias-corrected moments, p -= lr m_hat / (sqrt(v_hat) + eps).
void optimizer_step(std::span<const ParamBlock> blocks, OptimizerState& state, const OptimizerConfig& config);

struct EpochMetrics {
    int epoch = 0;
    double loss = 0.0;
    LossTerms terms;
    std::optional<double> val_eer_ensemble;
    std::optional<double> val_eer_max;
    std::optional<double> val_eer_head;
    double inter_centroid_cosine = 0.0;
};

struct TrainReport {
    std::vector<EpochMetrics> epochs;
    std::string checkpoint_path;  // relative to the report file when written by the CLI
};

struct TrainResult {
    Checkpoint checkpoint;
    TrainReport report;
};

// Holds out validation_fraction of the records (never augmented), augments the
// rest once per run, then trains.
TrainResult train(const std::vector<UtteranceRecord>& records, const TrainConfig& config);
TrainResult train(const std::vector<UtteranceRecord>& train_records,
                  const std::vector<UtteranceRecord>& validation_records, const TrainConfig& config);

nlohmann::json report_to_json(const TrainReport& report);
std::string report_csv(const TrainReport& report);

}  // namespace qamo
