#include "qamo/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qamo/checkpoint.hpp"
#include "qamo/data.hpp"
#include "qamo/error.hpp"
#include "qamo/scoring.hpp"
#include "qamo/training.hpp"

namespace qamo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr const char* kOutputRootEnv = "QAMO_OUTPUT_ROOT";
constexpr const char* kPolarity = "higher score = more likely bona fide";

// Keys a run config may carry next to the TrainConfig fields.
constexpr const char* kDataKeys[] = {"train_data", "validation_data", "test_data"};

struct Invocation {
    std::string command;
    std::vector<std::string> args;
};

fs::path output_dir(const std::string& flag, const std::string& command) {
    fs::path out;
    if (!flag.empty())
        out = flag;
    else if (const char* root = std::getenv(kOutputRootEnv); root && *root)
        out = fs::path(root) / command;
    else
        out = fs::path("runs") / command;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error(ErrorKind::io_error, "cannot create " + out.string() + ": " + ec.message());
    return out;
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_manifest(const fs::path& dir, const Invocation& inv, const json& resolved) {
    json manifest{{"tool", "qamo"},
                  {"version", kVersion},
                  {"checkpoint_format_version", kCheckpointVersion},
                  {"command", inv.command},
                  {"args", inv.args},
                  {"resolved", resolved}};
    write_json(dir / "manifest.json", manifest);
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io_error, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::config_error, path.string() + ": " + e.what());
    }
}

// key.path=value; the value is read as JSON when it parses, else as a string.
void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error(ErrorKind::config_error, "override \"" + assignment + "\" is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &config;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw Error(ErrorKind::config_error, "bad override key \"" + key + "\"");
        if (!node->is_object()) throw Error(ErrorKind::config_error, "override \"" + key + "\" descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

struct RunConfig {
    TrainConfig train;
    std::optional<fs::path> train_data, validation_data, test_data;
    json resolved;  // TrainConfig plus data paths, as used
};

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                         std::optional<std::uint64_t> seed) {
    json raw = json::object();
    fs::path base = fs::current_path();
    if (!config_path.empty()) {
        raw = read_json_file(config_path);
        if (!raw.is_object()) throw Error(ErrorKind::config_error, config_path + " must hold a JSON object");
        base = fs::path(config_path).parent_path();
    }
    for (const auto& o : overrides) apply_override(raw, o);
    if (seed) raw["seed"] = *seed;

    RunConfig rc;
    std::optional<fs::path>* slots[] = {&rc.train_data, &rc.validation_data, &rc.test_data};
    json data_paths = json::object();
    for (std::size_t k = 0; k < std::size(kDataKeys); ++k) {
        if (auto it = raw.find(kDataKeys[k]); it != raw.end()) {
            if (it->is_null()) {
                raw.erase(it);
                continue;
            }
            if (!it->is_string()) throw Error(ErrorKind::config_error, std::string(kDataKeys[k]) + " must be a path");
            fs::path p = it->get<std::string>();
            if (p.is_relative()) p = base / p;
            *slots[k] = p;
            data_paths[kDataKeys[k]] = p.string();
            raw.erase(it);
        }
    }
    rc.train = raw.get<TrainConfig>();
    rc.resolved = rc.train;
    rc.resolved.update(data_paths);
    return rc;
}

std::vector<UtteranceRecord> load_required(const std::optional<fs::path>& path, const char* what,
                                           const QualityPolicy& policy) {
    if (!path) throw Error(ErrorKind::config_error, std::string("no ") + what + " dataset given");
    return load_jsonl(*path, policy);
}

json summary_json(const ScoreReport& report) {
    json j{{"strategy", to_string(report.strategy)}, {"polarity", kPolarity}, {"count", report.scores.size()}};
    if (!report.summary) {
        j["summary"] = nullptr;
        return j;
    }
    const auto& s = *report.summary;
    auto cls = [](const ClassStats& c) { return json{{"count", c.count}, {"mean", c.mean}, {"stddev", c.stddev}}; };
    j["summary"] = {{"eer", s.eer.eer},
                    {"eer_threshold", s.eer.threshold},
                    {"inverted", s.eer.inverted()},
                    {"bonafide", cls(s.bonafide)},
                    {"spoof", cls(s.spoof)}};
    return j;
}

void print_summary(const std::string& name, const ScoreReport& report) {
    std::cout << name << " [" << to_string(report.strategy) << "] polarity: " << kPolarity << '\n';
    if (!report.summary) {
        std::cout << "  " << report.scores.size() << " scores, no EER (labels missing or one class only)\n";
        return;
    }
    const auto& e = report.summary->eer;
    std::cout << "  EER " << std::fixed << std::setprecision(2) << 100.0 * e.eer << "% at threshold "
              << std::setprecision(6) << e.threshold << std::defaultfloat << '\n';
    if (e.inverted()) std::cout << "  warning: EER above 50%, scores look inverted\n";
}

std::vector<ScoreStrategy> strategies_for(const std::string& flag, const Checkpoint& ckpt) {
    if (flag != "all") return {parse_score_strategy(flag)};
    std::vector<ScoreStrategy> out{ScoreStrategy::ensemble, ScoreStrategy::max, ScoreStrategy::labeled};
    if (ckpt.head) out.push_back(ScoreStrategy::head);
    return out;
}

// ---- subcommands -----------------------------------------------------------

struct GenOptions {
    std::string spec_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void cmd_gen(const GenOptions& o, const Invocation& inv) {
    SyntheticSpec spec;
    if (!o.spec_path.empty() == !o.preset.empty())
        throw Error(ErrorKind::config_error, "gen needs exactly one of --spec or --preset");
    if (!o.preset.empty()) {
        if (o.preset != "acceptance") throw Error(ErrorKind::config_error, "unknown preset \"" + o.preset + "\"");
        spec = acceptance_spec(o.seed.value_or(1));
    } else {
        spec = read_json_file(o.spec_path).get<SyntheticSpec>();
    }
    if (o.seed) spec.seed = *o.seed;
    const auto dir = output_dir(o.out, "gen");
    const auto train = generate_synthetic(spec, Split::train);
    std::ostringstream buf;
    write_jsonl(buf, train);
    write_text(dir / "train.jsonl", buf.str());
    std::size_t test_count = 0;
    for (const auto& c : spec.clusters) test_count += static_cast<std::size_t>(c.test_count);
    if (test_count > 0) {
        std::ostringstream tbuf;
        write_jsonl(tbuf, generate_synthetic(spec, Split::test));
        write_text(dir / "test.jsonl", tbuf.str());
    }
    write_json(dir / "spec.json", spec);
    write_manifest(dir, inv, spec);
    std::cout << "wrote " << train.size() << " train and " << test_count << " test records to " << dir.string() << '\n';
}

struct TrainOptions {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string train_data, validation_data, test_data;
    std::string out;
};

RunConfig run_config_from(const TrainOptions& o) {
    auto rc = resolve_config(o.config, o.overrides, o.seed);
    auto set = [&](const std::string& flag, std::optional<fs::path>& slot, const char* key) {
        if (flag.empty()) return;
        slot = fs::path(flag);
        rc.resolved[key] = flag;
    };
    set(o.train_data, rc.train_data, "train_data");
    set(o.validation_data, rc.validation_data, "validation_data");
    set(o.test_data, rc.test_data, "test_data");
    return rc;
}

TrainResult train_and_save(const RunConfig& rc, const fs::path& dir) {
    const auto train_records = load_required(rc.train_data, "training", rc.train.policy);
    TrainResult result = rc.validation_data
                             ? train(train_records, load_jsonl(*rc.validation_data, rc.train.policy), rc.train)
                             : train(train_records, rc.train);
    const auto ckpt_path = dir / "checkpoint.json";
    save_checkpoint(ckpt_path, result.checkpoint);
    result.report.checkpoint_path = ckpt_path.filename().string();
    write_json(dir / "train_report.json", report_to_json(result.report));
    write_text(dir / "train_metrics.csv", report_csv(result.report));
    write_json(dir / "config.resolved.json", rc.resolved);
    return result;
}

void cmd_train(const TrainOptions& o, const Invocation& inv) {
    const auto rc = run_config_from(o);
    const auto dir = output_dir(o.out, "train");
    const auto result = train_and_save(rc, dir);
    write_manifest(dir, inv, rc.resolved);
    const auto& last = result.report.epochs.back();
    std::cout << "trained " << to_string(rc.train.loss) << " for " << last.epoch << " epochs; final loss "
              << last.loss << ", inter-centroid cosine " << last.inter_centroid_cosine << '\n';
    if (last.val_eer_ensemble) std::cout << "validation EER (ensemble) " << 100.0 * *last.val_eer_ensemble << "%\n";
    if (last.val_eer_head) std::cout << "validation EER (head) " << 100.0 * *last.val_eer_head << "%\n";
    std::cout << "checkpoint: " << (dir / result.report.checkpoint_path).string() << '\n';
}

struct ScoreOptions {
    std::string checkpoint;
    std::string data;
    std::string strategy = "ensemble";
    std::string out;
};

void cmd_score(const ScoreOptions& o, const Invocation& inv) {
    const auto ckpt = load_checkpoint(o.checkpoint);
    const auto records = load_jsonl(o.data, ckpt.policy, LabelRequirement::optional);
    const auto dir = output_dir(o.out, "score");
    json summaries = json::array();
    for (auto strategy : strategies_for(o.strategy, ckpt)) {
        const auto report = score_dataset(records, ckpt, strategy);
        const std::string name(to_string(strategy));
        write_text(dir / ("scores_" + name + ".csv"), score_csv(report));
        const auto summary = summary_json(report);
        write_json(dir / ("score_summary_" + name + ".json"), summary);
        summaries.push_back(summary);
        print_summary(o.data, report);
    }
    write_manifest(dir, inv, {{"checkpoint", o.checkpoint}, {"data", o.data}, {"strategy", o.strategy}});
}

struct EvalOptions {
    std::vector<std::string> scores;
    std::string out;
};

void cmd_eval(const EvalOptions& o, const Invocation& inv) {
    const auto dir = output_dir(o.out, "eval");
    json results = json::array();
    for (const auto& path : o.scores) {
        const auto report = load_score_csv(path);
        if (!report.summary)
            throw Error(ErrorKind::empty_class, path + ": EER needs labeled bona fide and spoof scores");
        auto j = summary_json(report);
        j["file"] = path;
        results.push_back(std::move(j));
        print_summary(path, report);
    }
    write_json(dir / "eval.json", json{{"results", results}});
    write_manifest(dir, inv, {{"scores", o.scores}});
}

struct AblationArm {
    const char* name;
    LossKind loss;
    std::optional<double> lambda;  // overrides the config when set
    ScoreStrategy strategy;
    const char* reuse;             // train nothing, score this arm's checkpoint
};

constexpr AblationArm kArms[] = {
    {"wce", LossKind::wce, std::nullopt, ScoreStrategy::head, nullptr},
    {"wce_plus_quality", LossKind::wce_plus_quality, std::nullopt, ScoreStrategy::head, nullptr},
    {"qamo", LossKind::qamo, std::nullopt, ScoreStrategy::ensemble, nullptr},
    {"qamo_no_quality", LossKind::qamo, 0.0, ScoreStrategy::ensemble, nullptr},
    {"qamo_max_inference", LossKind::qamo, std::nullopt, ScoreStrategy::max, "qamo"},
};

void cmd_ablate(const TrainOptions& o, const Invocation& inv) {
    const auto rc = run_config_from(o);
    const auto test = load_required(rc.test_data, "test", rc.train.policy);
    const auto dir = output_dir(o.out, "ablate");

    std::map<std::string, Checkpoint> trained;
    std::ostringstream table;
    table << "arm,loss,lambda,strategy,test_eer,inter_centroid_cosine\n";
    std::cout << std::left << std::setw(20) << "arm" << std::setw(18) << "loss" << std::setw(8) << "lambda"
              << std::setw(10) << "strategy" << std::setw(10) << "EER(%)" << "centroid cos\n";
    for (const auto& arm : kArms) {
        const auto arm_dir = dir / arm.name;
        fs::create_directories(arm_dir);
        if (!arm.reuse) {
            RunConfig arm_rc = rc;
            arm_rc.train.loss = arm.loss;
            if (arm.lambda) arm_rc.train.hyper.lambda = *arm.lambda;
            arm_rc.resolved = arm_rc.train;
            for (const char* key : kDataKeys)
                if (rc.resolved.contains(key)) arm_rc.resolved[key] = rc.resolved[key];
            trained[arm.name] = train_and_save(arm_rc, arm_dir).checkpoint;
        }
        const Checkpoint& ckpt = trained.at(arm.reuse ? arm.reuse : arm.name);
        const auto report = score_dataset(test, ckpt, arm.strategy);
        write_text(arm_dir / ("scores_" + std::string(to_string(arm.strategy)) + ".csv"), score_csv(report));
        const double eer = report.summary ? report.summary->eer.eer : std::nan("");
        const double cos = ckpt.bank.mean_pairwise_cosine();
        table << arm.name << ',' << to_string(ckpt.config.loss) << ',' << format_double(ckpt.config.hyper.lambda)
              << ',' << to_string(arm.strategy) << ',' << format_double(eer) << ',' << format_double(cos) << '\n';
        std::cout << std::setw(20) << arm.name << std::setw(18) << to_string(ckpt.config.loss) << std::setw(8)
                  << ckpt.config.hyper.lambda << std::setw(10) << to_string(arm.strategy) << std::setw(10)
                  << std::fixed << std::setprecision(2) << 100.0 * eer << std::setprecision(4) << cos
                  << std::defaultfloat << '\n';
    }
    std::cout << std::right << "polarity: " << kPolarity << '\n';
    write_text(dir / "ablation.csv", table.str());
    write_manifest(dir, inv, rc.resolved);
}

struct ExportOptions {
    std::string checkpoint;
    std::string data;
    std::string strategy = "ensemble";
    std::size_t bins = 50;
    std::string out;
};

void cmd_export(const ExportOptions& o, const Invocation& inv) {
    const auto ckpt = load_checkpoint(o.checkpoint);
    const auto records = load_jsonl(o.data, ckpt.policy, LabelRequirement::optional);
    const auto dir = output_dir(o.out, "export");
    for (auto strategy : strategies_for(o.strategy, ckpt)) {
        const auto report = score_dataset(records, ckpt, strategy);
        write_text(dir / ("histogram_" + std::string(to_string(strategy)) + ".csv"),
                   histogram_csv(export_distributions(report, o.bins)));
    }
    write_text(dir / "embeddings.csv", embeddings_csv(export_embeddings(records, ckpt.encoder)));
    write_manifest(dir, inv, {{"checkpoint", o.checkpoint}, {"data", o.data}, {"strategy", o.strategy}, {"bins", o.bins}});
    std::cout << "wrote histograms and " << records.size() << " embeddings to " << dir.string() << '\n';
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config_error:
        case ErrorKind::invalid_scheme: return kConfig;
        case ErrorKind::io_error: return kIo;
        case ErrorKind::divergence_detected: return kDivergence;
        default: return kData;
    }
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Quality-aware multi-centroid one-class training and scoring"};
    app.name("qamo");
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic quality-stratified dataset");
    gen_cmd->add_option("--spec", gen.spec_path, "SyntheticSpec JSON file");
    gen_cmd->add_option("--preset", gen.preset, "Built-in spec: acceptance");
    gen_cmd->add_option("--seed", gen.seed, "Override the spec seed");
    gen_cmd->add_option("--out", gen.out, "Output directory");

    auto add_train_flags = [](CLI::App* cmd, TrainOptions& o) {
        cmd->add_option("--config", o.config, "Run config JSON (TrainConfig fields plus data paths)");
        cmd->add_option("--set", o.overrides, "Override a config key: key.path=value (repeatable)");
        cmd->add_option("--seed", o.seed, "Override the config seed");
        cmd->add_option("--train", o.train_data, "Training JSONL (overrides train_data)");
        cmd->add_option("--validation", o.validation_data, "Validation JSONL (overrides validation_data)");
        cmd->add_option("--test", o.test_data, "Test JSONL (overrides test_data)");
        cmd->add_option("--out", o.out, "Output directory");
    };
    TrainOptions train_opts;
    auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
    add_train_flags(train_cmd, train_opts);

    TrainOptions ablate_opts;
    auto* ablate_cmd = app.add_subcommand("ablate", "Run the loss/inference ablation matrix");
    add_train_flags(ablate_cmd, ablate_opts);

    ScoreOptions score_opts;
    auto* score_cmd = app.add_subcommand("score", "Score a dataset with a checkpoint");
    score_cmd->add_option("--checkpoint", score_opts.checkpoint, "Checkpoint JSON")->required();
    score_cmd->add_option("--data", score_opts.data, "Dataset JSONL")->required();
    score_cmd->add_option("--strategy", score_opts.strategy, "labeled | max | ensemble | head | all");
    score_cmd->add_option("--out", score_opts.out, "Output directory");

    EvalOptions eval_opts;
    auto* eval_cmd = app.add_subcommand("eval", "Compute EER from score CSVs");
    eval_cmd->add_option("--scores", eval_opts.scores, "Score CSV files")->required();
    eval_cmd->add_option("--out", eval_opts.out, "Output directory");

    ExportOptions export_opts;
    auto* export_cmd = app.add_subcommand("export", "Export score histograms and embeddings as CSV");
    export_cmd->add_option("--checkpoint", export_opts.checkpoint, "Checkpoint JSON")->required();
    export_cmd->add_option("--data", export_opts.data, "Dataset JSONL")->required();
    export_cmd->add_option("--strategy", export_opts.strategy, "labeled | max | ensemble | head | all");
    export_cmd->add_option("--bins", export_opts.bins, "Histogram bin count")->check(CLI::PositiveNumber);
    export_cmd->add_option("--out", export_opts.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kUsage;
    }

    Invocation inv;
    for (int i = 1; i < argc; ++i) inv.args.emplace_back(argv[i]);
    try {
        inv.command = app.get_subcommands().front()->get_name();
        if (*gen_cmd) cmd_gen(gen, inv);
        if (*train_cmd) cmd_train(train_opts, inv);
        if (*score_cmd) cmd_score(score_opts, inv);
        if (*eval_cmd) cmd_eval(eval_opts, inv);
        if (*ablate_cmd) cmd_ablate(ablate_opts, inv);
        if (*export_cmd) cmd_export(export_opts, inv);
        return kOk;
    } catch (const Error& e) {
        std::cerr << "qamo: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "qamo: IoError: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "qamo: internal error: " << e.what() << '\n';
        return kInternal;
    }
}

}  // namespace qamo::cli
