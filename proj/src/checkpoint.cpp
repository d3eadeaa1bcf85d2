#include "qamo/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "qamo/error.hpp"

namespace qamo {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.flat().begin(), m.flat().end())}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) throw Error(ErrorKind::parse_error, "checkpoint matrix has wrong element count");
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.flat().begin());
    return m;
}

}  // namespace

json checkpoint_to_json(const Checkpoint& ckpt) {
    json layers = json::array();
    for (const auto& layer : ckpt.encoder.layers())
        layers.push_back({{"activation", to_string(layer.activation)},
                          {"weight", matrix_to_json(layer.weight)},
                          {"bias", layer.bias}});
    json head = nullptr;
    if (ckpt.head) head = {{"weight", ckpt.head->weight}, {"bias", ckpt.head->bias}};
    return json{{"format", "qamo-checkpoint"},
                {"version", kCheckpointVersion},
                {"encoder", {{"layers", std::move(layers)}}},
                {"centroids", matrix_to_json(ckpt.bank.weights)},
                {"head", std::move(head)},
                {"policy", ckpt.policy},
                {"config", ckpt.config},
                {"metadata",
                 {{"seed", ckpt.metadata.seed},
                  {"epochs_completed", ckpt.metadata.epochs_completed},
                  {"loss_curve", ckpt.metadata.loss_curve}}}};
}

Checkpoint checkpoint_from_json(const json& j) {
    try {
        if (j.at("format") != "qamo-checkpoint") throw Error(ErrorKind::parse_error, "not a qamo checkpoint");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion)
            throw Error(ErrorKind::parse_error, "unsupported checkpoint version " + std::to_string(version));
        Checkpoint ckpt;
        std::vector<DenseLayer> layers;
        for (const auto& jl : j.at("encoder").at("layers"))
            layers.push_back(DenseLayer{matrix_from_json(jl.at("weight")), jl.at("bias").get<Vec>(),
                                        parse_activation(jl.at("activation").get<std::string>())});
        ckpt.encoder = EncoderModel(std::move(layers));
        ckpt.bank.weights = matrix_from_json(j.at("centroids"));
        if (ckpt.bank.dim() != ckpt.encoder.embedding_dim())
            throw Error(ErrorKind::parse_error, "centroid dim does not match the encoder");
        if (!j.at("head").is_null()) {
            const auto& jh = j.at("head");
            ckpt.head = BinaryHead{jh.at("weight").get<Vec>(), jh.at("bias").get<double>()};
        }
        ckpt.policy = j.at("policy").get<QualityPolicy>();
        ckpt.config = j.at("config").get<TrainConfig>();
        const auto& meta = j.at("metadata");
        ckpt.metadata.seed = meta.at("seed").get<std::uint64_t>();
        ckpt.metadata.epochs_completed = meta.at("epochs_completed").get<int>();
        ckpt.metadata.loss_curve = meta.at("loss_curve").get<std::vector<double>>();
        return ckpt;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse_error, std::string("malformed checkpoint: ") + e.what());
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::io_error, "cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw Error(ErrorKind::io_error, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::io_error, "cannot rename " + tmp.string() + ": " + ec.message());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file_atomic(path, checkpoint_to_json(ckpt).dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io_error, "cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse_error, path.string() + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace qamo
