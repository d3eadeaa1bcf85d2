#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "qamo/config.hpp"
#include "qamo/model.hpp"

namespace qamo {

inline constexpr int kCheckpointVersion = 1;

struct TrainingMetadata {
    std::uint64_t seed = 0;
    int epochs_completed = 0;
    std::vector<double> loss_curve;

    bool operator==(const TrainingMetadata&) const = default;
};

struct Checkpoint {
    EncoderModel encoder;
    CentroidBank bank;
    std::optional<BinaryHead> head;
    QualityPolicy policy;
    TrainConfig config;
    TrainingMetadata metadata;

    bool operator==(const Checkpoint&) const = default;
};

// JSON container; see docs/checkpoint-format.md. Doubles are written in
// shortest round-trip form, so a reload restores every parameter bit for bit.
nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

// Writes to a temporary sibling, then renames over the target.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Atomic text write used for every artifact the tools emit.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace qamo
