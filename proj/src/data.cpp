#include "qamo/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "qamo/error.hpp"
#include "qamo/json_util.hpp"

namespace qamo {

using nlohmann::json;

namespace {

constexpr double kMosMin = 1.0;
constexpr double kMosMax = 5.0;

void check_mos(double mos) {
    if (!(mos >= kMosMin && mos <= kMosMax))
        throw Error(ErrorKind::mos_out_of_range, "MOS " + std::to_string(mos) + " outside [1, 5]");
}

}  // namespace

std::string_view to_string(Label label) { return label == Label::bonafide ? "bonafide" : "spoof"; }

Label parse_label(std::string_view text) {
    if (text == "bonafide") return Label::bonafide;
    if (text == "spoof") return Label::spoof;
    throw Error(ErrorKind::parse_error, "label must be \"bonafide\" or \"spoof\", got \"" + std::string(text) + "\"");
}

std::pair<double, double> QualityPolicy::band(int level) const {
    const int levels = num_levels();
    if (level < 0 || level >= levels)
        throw Error(ErrorKind::config_error, "quality level " + std::to_string(level) + " out of range");
    const double lo = level == 0 ? kMosMin : thresholds[level - 1];
    const double hi = level == levels - 1 ? kMosMax : thresholds[level];
    return {lo, hi};
}

void QualityPolicy::validate() const {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > kMosMin && thresholds[i] < kMosMax))
            throw Error(ErrorKind::config_error, "quality thresholds must lie in (1, 5)");
        if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
            throw Error(ErrorKind::config_error, "quality thresholds must be strictly ascending");
    }
}

int quality_label(double mos, const QualityPolicy& policy) {
    check_mos(mos);
    // Number of cut points at or below mos; the boundary goes up (MOS >= tau).
    const auto upper = std::upper_bound(policy.thresholds.begin(), policy.thresholds.end(), mos);
    return static_cast<int>(upper - policy.thresholds.begin());
}

void assign_quality(UtteranceRecord& record, const QualityPolicy& policy) {
    record.quality.reset();
    if (record.mos) check_mos(*record.mos);
    if (record.label != Label::bonafide) return;
    if (record.augmented)
        record.quality = 0;
    else if (record.mos)
        record.quality = quality_label(*record.mos, policy);
}

std::vector<UtteranceRecord> read_jsonl(std::istream& in, const QualityPolicy& policy, LabelRequirement labels) {
    std::vector<UtteranceRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        const std::string where = "line " + std::to_string(line_no);

        json j;
        try {
            j = json::parse(line);
        } catch (const json::out_of_range& e) {
            // 406: a number literal overflows a double, e.g. 1e400.
            if (e.id == 406) throw Error(ErrorKind::non_finite_feature, where + ": " + e.what());
            throw Error(ErrorKind::parse_error, where + ": " + e.what());
        } catch (const json::exception& e) {
            throw Error(ErrorKind::parse_error, where + ": " + e.what());
        }
        if (!j.is_object()) throw Error(ErrorKind::parse_error, where + ": expected a JSON object");

        UtteranceRecord rec;
        try {
            auto need = [&](const char* key) -> const json& {
                auto it = j.find(key);
                if (it == j.end()) throw Error(ErrorKind::missing_field, where + ": missing \"" + key + "\"");
                return *it;
            };
            rec.id = need("id").get<std::string>();
            rec.features = need("features").get<Vec>();
            if (j.contains("label"))
                rec.label = parse_label(j.at("label").get<std::string>());
            else if (labels == LabelRequirement::required)
                need("label");
            if (j.contains("mos") && !j.at("mos").is_null()) rec.mos = j.at("mos").get<double>();
            if (j.contains("augmented")) rec.augmented = j.at("augmented").get<bool>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::parse_error, where + ": " + e.what());
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::missing_field) throw;
            throw Error(e.kind(), where + ": " + e.detail());
        }
        if (rec.features.empty()) throw Error(ErrorKind::parse_error, where + ": empty feature vector");
        if (!all_finite(rec.features))
            throw Error(ErrorKind::non_finite_feature, where + ": record \"" + rec.id + "\" has a non-finite feature");
        try {
            assign_quality(rec, policy);
        } catch (const Error& e) {
            throw Error(e.kind(), where + ": " + e.detail());
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<UtteranceRecord> load_jsonl(const std::filesystem::path& path, const QualityPolicy& policy,
                                        LabelRequirement labels) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io_error, "cannot open " + path.string());
    return read_jsonl(in, policy, labels);
}

void write_jsonl(std::ostream& out, const std::vector<UtteranceRecord>& records) {
    for (const auto& rec : records) {
        json j;
        j["id"] = rec.id;
        j["features"] = rec.features;
        if (rec.label) j["label"] = to_string(*rec.label);
        if (rec.mos) j["mos"] = *rec.mos;
        if (rec.augmented) j["augmented"] = true;
        out << j.dump() << '\n';
    }
}

void save_jsonl(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + path.string());
    write_jsonl(out, records);
    if (!out) throw Error(ErrorKind::io_error, "write failed for " + path.string());
}

void SyntheticSpec::validate() const {
    if (dim < 1) throw Error(ErrorKind::config_error, "synthetic dim must be >= 1");
    if (clusters.empty()) throw Error(ErrorKind::config_error, "synthetic spec has no clusters");
    policy.validate();
    for (const auto& c : clusters) {
        const std::string where = "cluster \"" + c.name + "\": ";
        if (static_cast<int>(c.mean.size()) != dim)
            throw Error(ErrorKind::config_error, where + "mean has wrong dimension");
        if (!(c.spread > 0.0)) throw Error(ErrorKind::config_error, where + "spread must be > 0");
        if (c.count < 1 || c.test_count < 0) throw Error(ErrorKind::config_error, where + "count must be >= 1");
        if (c.label == Label::bonafide) {
            if (!c.quality_level) throw Error(ErrorKind::config_error, where + "bona fide cluster needs quality_level");
            policy.band(*c.quality_level);
        }
        if (c.mos_range) {
            const auto [lo, hi] = *c.mos_range;
            if (!(lo >= kMosMin && hi <= kMosMax && lo <= hi))
                throw Error(ErrorKind::config_error, where + "mos_range must lie within [1, 5]");
        }
    }
}

std::vector<UtteranceRecord> generate_synthetic(const SyntheticSpec& spec, Split split) {
    spec.validate();
    Rng rng = Rng::derive(spec.seed, split == Split::train ? 0x7472 : 0x7465);
    const std::string prefix = split == Split::train ? "" : "test-";
    std::vector<UtteranceRecord> records;
    for (const auto& cluster : spec.clusters) {
        const int n = split == Split::train ? cluster.count : cluster.test_count;
        for (int i = 0; i < n; ++i) {
            UtteranceRecord rec;
            rec.id = prefix + cluster.name + "-" + std::to_string(i);
            rec.label = cluster.label;
            rec.features.resize(spec.dim);
            for (int d = 0; d < spec.dim; ++d) rec.features[d] = cluster.mean[d] + cluster.spread * rng.normal();
            if (cluster.label == Label::bonafide) {
                auto [lo, hi] = spec.policy.band(*cluster.quality_level);
                rec.mos = rng.uniform(lo, hi);
            } else if (cluster.mos_range) {
                rec.mos = rng.uniform(cluster.mos_range->first, cluster.mos_range->second);
            }
            assign_quality(rec, spec.policy);
            records.push_back(std::move(rec));
        }
    }
    return records;
}

SyntheticSpec acceptance_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.dim = 8;
    spec.seed = seed;
    spec.policy = QualityPolicy::binary(2.5);
    auto cluster = [](std::string name, Label label, Vec mean, double spread, std::optional<int> level) {
        ClusterSpec c;
        c.name = std::move(name);
        c.label = label;
        c.mean = std::move(mean);
        c.spread = spread;
        c.count = 150;
        c.test_count = 50;
        c.quality_level = level;
        if (label == Label::spoof) c.mos_range = std::pair{1.0, 5.0};
        return c;
    };
    spec.clusters = {
        cluster("bona-low", Label::bonafide, {1.0, 1.0, 0.6, 0, 0, 0, 0, 0}, 0.35, 0),
        cluster("bona-high", Label::bonafide, {1.0, 1.0, -0.6, 0, 0, 0, 0, 0}, 0.35, 1),
        cluster("spoof-a", Label::spoof, {-1.0, 0.5, 0, 1.0, 0, 0, 0, 0}, 0.35, std::nullopt),
        cluster("spoof-b", Label::spoof, {0.5, -1.0, 0, 0, -1.0, 0, 0, 0}, 0.35, std::nullopt),
    };
    return spec;
}

UtteranceRecord augment(UtteranceRecord record, double noise_scale, Rng& rng) {
    for (double& x : record.features) x += noise_scale * rng.normal();
    record.augmented = true;
    if (record.label == Label::bonafide)
        record.quality = 0;
    else
        record.quality.reset();
    return record;
}

std::vector<UtteranceRecord> balance_augmentation(std::vector<UtteranceRecord> records, double fraction,
                                                  double noise_scale, Rng& rng) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw Error(ErrorKind::config_error, "augmentation fraction must lie in [0, 1]");
    const auto n = records.size();
    const auto chosen = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (chosen == 0) return records;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(chosen));
    for (std::size_t k = 0; k < chosen; ++k) records[order[k]] = augment(std::move(records[order[k]]), noise_scale, rng);
    return records;
}

void to_json(json& j, const QualityPolicy& policy) { j = json{{"thresholds", policy.thresholds}}; }

void from_json(const json& j, QualityPolicy& policy) {
    json_util::check_keys(j, {"thresholds", "tau"}, "quality policy");
    if (j.contains("tau") && j.contains("thresholds"))
        throw Error(ErrorKind::config_error, "quality policy: give either tau or thresholds");
    if (j.contains("tau")) {
        double tau = 0.0;
        json_util::read_if_present(j, "tau", tau);
        policy.thresholds = {tau};
    }
    json_util::read_if_present(j, "thresholds", policy.thresholds);
    policy.validate();
}

void to_json(json& j, const SyntheticSpec& spec) {
    json clusters = json::array();
    for (const auto& c : spec.clusters) {
        json jc{{"name", c.name}, {"label", to_string(c.label)}, {"mean", c.mean},
                {"spread", c.spread}, {"count", c.count}, {"test_count", c.test_count}};
        if (c.quality_level) jc["quality_level"] = *c.quality_level;
        if (c.mos_range) jc["mos_range"] = {c.mos_range->first, c.mos_range->second};
        clusters.push_back(std::move(jc));
    }
    j = json{{"dim", spec.dim}, {"seed", spec.seed}, {"policy", spec.policy}, {"clusters", std::move(clusters)}};
}

void from_json(const json& j, SyntheticSpec& spec) {
    using json_util::read_if_present;
    json_util::check_keys(j, {"dim", "seed", "policy", "clusters"}, "synthetic spec");
    read_if_present(j, "dim", spec.dim);
    read_if_present(j, "seed", spec.seed);
    if (j.contains("policy")) spec.policy = j.at("policy").get<QualityPolicy>();
    if (!j.contains("clusters")) throw Error(ErrorKind::config_error, "synthetic spec needs \"clusters\"");
    spec.clusters.clear();
    for (const auto& jc : j.at("clusters")) {
        json_util::check_keys(jc, {"name", "label", "mean", "spread", "count", "test_count", "quality_level", "mos_range"},
                              "cluster");
        ClusterSpec c;
        read_if_present(jc, "name", c.name);
        std::string label = "bonafide";
        read_if_present(jc, "label", label);
        try {
            c.label = parse_label(label);
        } catch (const Error& e) {
            throw Error(ErrorKind::config_error, e.detail());
        }
        read_if_present(jc, "mean", c.mean);
        read_if_present(jc, "spread", c.spread);
        read_if_present(jc, "count", c.count);
        read_if_present(jc, "test_count", c.test_count);
        if (jc.contains("quality_level")) c.quality_level = jc.at("quality_level").get<int>();
        if (jc.contains("mos_range")) {
            std::vector<double> r;
            read_if_present(jc, "mos_range", r);
            if (r.size() != 2) throw Error(ErrorKind::config_error, "mos_range must be [lo, hi]");
            c.mos_range = std::pair{r[0], r[1]};
        }
        spec.clusters.push_back(std::move(c));
    }
    spec.validate();
}

}  // namespace qamo
