#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "qamo/losses.hpp"
#include "qamo/model.hpp"
#include "qamo/rng.hpp"

namespace qamo::testing {

inline Vec random_unit(std::size_t dim, Rng& rng) {
    Vec v(dim);
    for (double& x : v) x = rng.normal();
    return unit_normalize(v);
}

inline CentroidBank random_bank(std::size_t levels, std::size_t dim, Rng& rng) {
    return init_centroids(levels, dim, CentroidInit::random_unit, rng);
}

inline CentroidBank bank_from_rows(const std::vector<Vec>& rows) {
    CentroidBank bank{Matrix(rows.size(), rows.front().size())};
    for (std::size_t q = 0; q < rows.size(); ++q) bank.weights.set_row(q, rows[q]);
    return bank;
}

// Unit embeddings with mixed labels; every bona fide row gets a level.
inline Batch random_batch(std::size_t n, std::size_t levels, std::size_t dim, Rng& rng) {
    Batch b{Matrix(n, dim), {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        b.embeddings.set_row(i, random_unit(dim, rng));
        const bool spoof = rng.uniform() < 0.5;
        b.labels.push_back(spoof ? Label::spoof : Label::bonafide);
        b.quality.push_back(spoof ? std::nullopt : std::optional<int>(static_cast<int>(rng.index(levels))));
    }
    return b;
}

inline std::vector<Vec> rows_of(const CentroidBank& bank) {
    std::vector<Vec> rows;
    for (std::size_t q = 0; q < bank.levels(); ++q) rows.emplace_back(bank.centroid(q).begin(), bank.centroid(q).end());
    return rows;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("qamo-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace qamo::testing
