#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qamo/checkpoint.hpp"
#include "qamo/data.hpp"
#include "qamo/model.hpp"

namespace qamo {

// Countermeasure scores: higher means more likely bona fide.
//   labeled  - similarity to the centroid of the utterance's quality level
//   max      - largest similarity over all centroids
//   ensemble - mean similarity over all centroids
//   head     - binary head logit (cross-entropy baselines only)
enum class ScoreStrategy { labeled, max, ensemble, head };

std::string_view to_string(ScoreStrategy s);
ScoreStrategy parse_score_strategy(std::string_view text);

double score(std::span<const double> embedding, const CentroidBank& bank, ScoreStrategy strategy,
             std::optional<int> quality = std::nullopt);

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;

    // Spoof scores sit above bona fide scores more often than not.
    bool inverted() const { return eer > 0.5; }
};

// FAR(t) = share of spoof scores >= t, FRR(t) = share of bona fide scores < t.
// Operating points are taken at every distinct score plus one point above the
// maximum; the EER is the linear interpolation at the first point where FRR
// reaches FAR.
EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof);

struct ScoredUtterance {
    std::string id;
    double score = 0.0;
    std::optional<Label> label;

    bool operator==(const ScoredUtterance&) const = default;
};

struct ClassStats {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;
};

struct ScoreSummary {
    EerResult eer;
    ClassStats bonafide;
    ClassStats spoof;
};

struct ScoreReport {
    ScoreStrategy strategy = ScoreStrategy::ensemble;
    std::vector<ScoredUtterance> scores;
    // Present only when both classes appear among the labeled scores.
    std::optional<ScoreSummary> summary;
};

ScoreReport summarize(std::vector<ScoredUtterance> scores, ScoreStrategy strategy);

// Labeled scoring derives the level from each record's MOS through `policy`.
ScoreReport score_dataset(const std::vector<UtteranceRecord>& records, const EncoderModel& model,
                          const CentroidBank& bank, ScoreStrategy strategy, const QualityPolicy& policy = {});
ScoreReport score_dataset(const std::vector<UtteranceRecord>& records, const Checkpoint& ckpt,
                          ScoreStrategy strategy);

// CSV: id,score,label,strategy
void write_score_csv(std::ostream& out, const ScoreReport& report);
std::string score_csv(const ScoreReport& report);
ScoreReport read_score_csv(std::istream& in);
ScoreReport load_score_csv(const std::filesystem::path& path);

struct HistogramBin {
    double low = 0.0;
    double high = 0.0;
    std::size_t bonafide = 0;
    std::size_t spoof = 0;
};

// Equal-width bins over [min, max] of the labeled scores; the last bin is
// closed so every labeled score lands in exactly one bin.
std::vector<HistogramBin> export_distributions(const ScoreReport& report, std::size_t bins);
std::string histogram_csv(const std::vector<HistogramBin>& bins);

struct EmbeddingRow {
    std::string id;
    std::optional<Label> label;
    std::optional<int> quality;
    Vec embedding;
};

std::vector<EmbeddingRow> export_embeddings(const std::vector<UtteranceRecord>& records, const EncoderModel& model);
std::string embeddings_csv(const std::vector<EmbeddingRow>& rows);

// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

}  // namespace qamo
