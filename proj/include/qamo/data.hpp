#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qamo/numerics.hpp"
#include "qamo/rng.hpp"

namespace qamo {

enum class Label { bonafide = 0, spoof = 1 };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

// MOS cut points. Level q covers [thresholds[q-1], thresholds[q]); a MOS
// sitting exactly on a cut point belongs to the upper level.
struct QualityPolicy {
    std::vector<double> thresholds{2.5};

    int num_levels() const { return static_cast<int>(thresholds.size()) + 1; }
    // MOS band [lo, hi) covered by a level within the 1..5 scale.
    std::pair<double, double> band(int level) const;
    void validate() const;

    static QualityPolicy binary(double tau) { return QualityPolicy{{tau}}; }
    bool operator==(const QualityPolicy&) const = default;
};

int quality_label(double mos, const QualityPolicy& policy);

struct UtteranceRecord {
    std::string id;
    Vec features;
    std::optional<Label> label;
    std::optional<double> mos;
    std::optional<int> quality;
    bool augmented = false;

    bool operator==(const UtteranceRecord&) const = default;
};

// Recomputes the quality level from label, mos and the augmentation flag:
// spoof and unlabeled records carry none, augmented bona fide records are
// level 0, other bona fide records follow quality_label(mos).
void assign_quality(UtteranceRecord& record, const QualityPolicy& policy);

enum class LabelRequirement { required, optional };

std::vector<UtteranceRecord> read_jsonl(std::istream& in, const QualityPolicy& policy,
                                        LabelRequirement labels = LabelRequirement::required);
std::vector<UtteranceRecord> load_jsonl(const std::filesystem::path& path, const QualityPolicy& policy,
                                        LabelRequirement labels = LabelRequirement::required);
void write_jsonl(std::ostream& out, const std::vector<UtteranceRecord>& records);
void save_jsonl(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);

struct ClusterSpec {
    std::string name;
    Label label = Label::bonafide;
    Vec mean;
    double spread = 1.0;
    int count = 0;
    int test_count = 0;
    // Bona fide clusters draw MOS uniformly inside this level's band.
    std::optional<int> quality_level;
    // Spoof clusters may carry MOS as well; it never yields a quality level.
    std::optional<std::pair<double, double>> mos_range;
};

struct SyntheticSpec {
    int dim = 8;
    std::vector<ClusterSpec> clusters;
    std::uint64_t seed = 1;
    QualityPolicy policy;

    void validate() const;
};

enum class Split { train, test };

// Isotropic Gaussian clusters; the train and test splits draw from
// independent streams of the same seed.
std::vector<UtteranceRecord> generate_synthetic(const SyntheticSpec& spec, Split split = Split::train);

// Four clusters in 8 dimensions: low/high quality bona fide and two spoof
// families, 150 train + 50 test records each.
SyntheticSpec acceptance_spec(std::uint64_t seed);

// Adds N(0, noise_scale^2) noise to every feature and marks the record as
// augmented; bona fide records drop to quality level 0 unconditionally.
UtteranceRecord augment(UtteranceRecord record, double noise_scale, Rng& rng);

// Augments exactly round(fraction * N) records chosen uniformly at random.
std::vector<UtteranceRecord> balance_augmentation(std::vector<UtteranceRecord> records, double fraction,
                                                  double noise_scale, Rng& rng);

void to_json(nlohmann::json& j, const QualityPolicy& policy);
void from_json(const nlohmann::json& j, QualityPolicy& policy);
void to_json(nlohmann::json& j, const SyntheticSpec& spec);
void from_json(const nlohmann::json& j, SyntheticSpec& spec);

}  // namespace qamo
