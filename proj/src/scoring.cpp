#include "qamo/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "qamo/error.hpp"

namespace qamo {

std::string_view to_string(ScoreStrategy s) {
    switch (s) {
        case ScoreStrategy::labeled: return "labeled";
        case ScoreStrategy::max: return "max";
        case ScoreStrategy::ensemble: return "ensemble";
        case ScoreStrategy::head: return "head";
    }
    return "ensemble";
}

ScoreStrategy parse_score_strategy(std::string_view text) {
    if (text == "labeled") return ScoreStrategy::labeled;
    if (text == "max") return ScoreStrategy::max;
    if (text == "ensemble") return ScoreStrategy::ensemble;
    if (text == "head") return ScoreStrategy::head;
    throw Error(ErrorKind::config_error, "unknown score strategy \"" + std::string(text) + "\"");
}

double score(std::span<const double> embedding, const CentroidBank& bank, ScoreStrategy strategy,
             std::optional<int> quality) {
    switch (strategy) {
        case ScoreStrategy::labeled: {
            if (!quality) throw Error(ErrorKind::missing_quality, "labeled scoring needs a quality level");
            if (*quality < 0 || static_cast<std::size_t>(*quality) >= bank.levels())
                throw Error(ErrorKind::missing_quality, "quality level " + std::to_string(*quality) + " has no centroid");
            return dot(bank.centroid(static_cast<std::size_t>(*quality)), embedding);
        }
        case ScoreStrategy::max: {
            double best = dot(bank.centroid(0), embedding);
            for (std::size_t q = 1; q < bank.levels(); ++q) best = std::max(best, dot(bank.centroid(q), embedding));
            return best;
        }
        case ScoreStrategy::ensemble: {
            double acc = 0.0;
            for (std::size_t q = 0; q < bank.levels(); ++q) acc += dot(bank.centroid(q), embedding);
            return acc / static_cast<double>(bank.levels());
        }
        case ScoreStrategy::head:
            throw Error(ErrorKind::config_error, "head scoring needs a binary head, not a centroid bank");
    }
    return 0.0;
}

EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof) {
    if (bonafide.empty() || spoof.empty())
        throw Error(ErrorKind::empty_class, "EER needs at least one bona fide and one spoof score");
    std::vector<double> bona(bonafide.begin(), bonafide.end());
    std::vector<double> fake(spoof.begin(), spoof.end());
    std::sort(bona.begin(), bona.end());
    std::sort(fake.begin(), fake.end());

    std::vector<double> thresholds;
    thresholds.reserve(bona.size() + fake.size() + 1);
    std::merge(bona.begin(), bona.end(), fake.begin(), fake.end(), std::back_inserter(thresholds));
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.push_back(std::nextafter(thresholds.back(), std::numeric_limits<double>::infinity()));

    const double nb = static_cast<double>(bona.size());
    const double ns = static_cast<double>(fake.size());
    std::size_t bona_below = 0;  // bona fide scores < threshold
    std::size_t fake_below = 0;  // spoof scores < threshold

    double prev_frr = 0.0, prev_far = 1.0, prev_t = thresholds.front();
    for (std::size_t k = 1; k < thresholds.size(); ++k) {
        const double t = thresholds[k];
        while (bona_below < bona.size() && bona[bona_below] < t) ++bona_below;
        while (fake_below < fake.size() && fake[fake_below] < t) ++fake_below;
        const double frr = static_cast<double>(bona_below) / nb;
        const double far = static_cast<double>(fake.size() - fake_below) / ns;
        const double gap = frr - far;
        if (gap == 0.0) return {frr, t};
        if (gap > 0.0) {
            const double prev_gap = prev_frr - prev_far;
            const double w = -prev_gap / (gap - prev_gap);
            return {prev_frr + w * (frr - prev_frr), prev_t + w * (t - prev_t)};
        }
        prev_frr = frr;
        prev_far = far;
        prev_t = t;
    }
    // Unreachable: the last operating point always has FRR = 1, FAR = 0.
    return {prev_frr, prev_t};
}

namespace {

ClassStats stats_of(const std::vector<double>& v) {
    ClassStats s;
    s.count = v.size();
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(v.size()));
    return s;
}

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n\r") == std::string::npos) return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    return fields;
}

}  // namespace

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

ScoreReport summarize(std::vector<ScoredUtterance> scores, ScoreStrategy strategy) {
    ScoreReport report{strategy, std::move(scores), std::nullopt};
    std::vector<double> bona, fake;
    for (const auto& s : report.scores) {
        if (!std::isfinite(s.score)) throw Error(ErrorKind::non_finite_feature, "non-finite score for " + s.id);
        if (s.label == Label::bonafide) bona.push_back(s.score);
        if (s.label == Label::spoof) fake.push_back(s.score);
    }
    if (!bona.empty() && !fake.empty()) report.summary = ScoreSummary{compute_eer(bona, fake), stats_of(bona), stats_of(fake)};
    return report;
}

ScoreReport score_dataset(const std::vector<UtteranceRecord>& records, const EncoderModel& model,
                          const CentroidBank& bank, ScoreStrategy strategy, const QualityPolicy& policy) {
    std::vector<ScoredUtterance> scores;
    scores.reserve(records.size());
    for (const auto& rec : records) {
        try {
            const Vec x = encode(model, rec.features);
            std::optional<int> q;
            if (strategy == ScoreStrategy::labeled) {
                if (!rec.mos) throw Error(ErrorKind::missing_quality, "labeled scoring needs a MOS value");
                q = quality_label(*rec.mos, policy);
            }
            scores.push_back({rec.id, score(x, bank, strategy, q), rec.label});
        } catch (const Error& e) {
            throw Error(e.kind(), "record \"" + rec.id + "\": " + e.detail());
        }
    }
    return summarize(std::move(scores), strategy);
}

ScoreReport score_dataset(const std::vector<UtteranceRecord>& records, const Checkpoint& ckpt,
                          ScoreStrategy strategy) {
    if (strategy != ScoreStrategy::head) return score_dataset(records, ckpt.encoder, ckpt.bank, strategy, ckpt.policy);
    if (!ckpt.head) throw Error(ErrorKind::config_error, "checkpoint has no binary head to score with");
    std::vector<ScoredUtterance> scores;
    scores.reserve(records.size());
    for (const auto& rec : records) {
        try {
            scores.push_back({rec.id, ckpt.head->logit(encode(ckpt.encoder, rec.features)), rec.label});
        } catch (const Error& e) {
            throw Error(e.kind(), "record \"" + rec.id + "\": " + e.detail());
        }
    }
    return summarize(std::move(scores), strategy);
}

void write_score_csv(std::ostream& out, const ScoreReport& report) {
    out << "id,score,label,strategy\n";
    for (const auto& s : report.scores)
        out << csv_field(s.id) << ',' << format_double(s.score) << ','
            << (s.label ? to_string(*s.label) : std::string_view{}) << ',' << to_string(report.strategy) << '\n';
}

std::string score_csv(const ScoreReport& report) {
    std::ostringstream out;
    write_score_csv(out, report);
    return out.str();
}

ScoreReport read_score_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"id", "score", "label", "strategy"})
        throw Error(ErrorKind::parse_error, "score CSV must start with header id,score,label,strategy");
    std::vector<ScoredUtterance> scores;
    std::optional<ScoreStrategy> strategy;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        const std::string where = "score CSV line " + std::to_string(line_no);
        if (f.size() != 4) throw Error(ErrorKind::parse_error, where + ": expected 4 fields");
        ScoredUtterance s;
        s.id = f[0];
        const auto res = std::from_chars(f[1].data(), f[1].data() + f[1].size(), s.score);
        if (res.ec != std::errc() || res.ptr != f[1].data() + f[1].size())
            throw Error(ErrorKind::parse_error, where + ": bad score \"" + f[1] + "\"");
        if (!f[2].empty()) {
            try {
                s.label = parse_label(f[2]);
            } catch (const Error& e) {
                throw Error(ErrorKind::parse_error, where + ": " + e.detail());
            }
        }
        ScoreStrategy row_strategy;
        try {
            row_strategy = parse_score_strategy(f[3]);
        } catch (const Error& e) {
            throw Error(ErrorKind::parse_error, where + ": " + e.detail());
        }
        if (strategy && *strategy != row_strategy)
            throw Error(ErrorKind::parse_error, where + ": mixed strategies in one score file");
        strategy = row_strategy;
        scores.push_back(std::move(s));
    }
    return summarize(std::move(scores), strategy.value_or(ScoreStrategy::ensemble));
}

ScoreReport load_score_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io_error, "cannot open " + path.string());
    return read_score_csv(in);
}

std::vector<HistogramBin> export_distributions(const ScoreReport& report, std::size_t bins) {
    if (bins < 1) throw Error(ErrorKind::config_error, "histogram needs at least one bin");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : report.scores)
        if (s.label) {
            lo = std::min(lo, s.score);
            hi = std::max(hi, s.score);
        }
    if (!(lo <= hi)) return {};
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<HistogramBin> out(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].low = lo + width * static_cast<double>(b);
        out[b].high = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    }
    for (const auto& s : report.scores) {
        if (!s.label) continue;
        std::size_t b = width > 0.0 ? static_cast<std::size_t>((s.score - lo) / width) : 0;
        b = std::min(b, bins - 1);
        // Correct floating-point edge placement against the stored bounds.
        while (b > 0 && s.score < out[b].low) --b;
        while (b + 1 < bins && s.score >= out[b + 1].low) ++b;
        (*s.label == Label::bonafide ? out[b].bonafide : out[b].spoof)++;
    }
    return out;
}

std::string histogram_csv(const std::vector<HistogramBin>& bins) {
    std::ostringstream out;
    out << "bin_low,bin_high,bona_count,spoof_count\n";
    for (const auto& b : bins)
        out << format_double(b.low) << ',' << format_double(b.high) << ',' << b.bonafide << ',' << b.spoof << '\n';
    return out.str();
}

std::vector<EmbeddingRow> export_embeddings(const std::vector<UtteranceRecord>& records, const EncoderModel& model) {
    std::vector<EmbeddingRow> rows;
    rows.reserve(records.size());
    for (const auto& rec : records) {
        try {
            rows.push_back({rec.id, rec.label, rec.quality, encode(model, rec.features)});
        } catch (const Error& e) {
            throw Error(e.kind(), "record \"" + rec.id + "\": " + e.detail());
        }
    }
    return rows;
}

std::string embeddings_csv(const std::vector<EmbeddingRow>& rows) {
    std::ostringstream out;
    out << "id,label,quality";
    const std::size_t dim = rows.empty() ? 0 : rows.front().embedding.size();
    for (std::size_t d = 0; d < dim; ++d) out << ",e" << d;
    out << '\n';
    for (const auto& r : rows) {
        out << csv_field(r.id) << ',' << (r.label ? to_string(*r.label) : std::string_view{}) << ',';
        if (r.quality) out << *r.quality;
        for (double v : r.embedding) out << ',' << format_double(v);
        out << '\n';
    }
    return out.str();
}

}  // namespace qamo
