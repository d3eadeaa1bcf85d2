#include "qamo/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qamo/error.hpp"

namespace qamo {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::zero_norm: return "ZeroNorm";
        case ErrorKind::dim_mismatch: return "DimMismatch";
        case ErrorKind::mos_out_of_range: return "MosOutOfRange";
        case ErrorKind::parse_error: return "ParseError";
        case ErrorKind::missing_field: return "MissingField";
        case ErrorKind::non_finite_feature: return "NonFiniteFeature";
        case ErrorKind::missing_quality: return "MissingQuality";
        case ErrorKind::invalid_scheme: return "InvalidScheme";
        case ErrorKind::empty_class: return "EmptyClass";
        case ErrorKind::divergence_detected: return "DivergenceDetected";
        case ErrorKind::config_error: return "ConfigError";
        case ErrorKind::io_error: return "IoError";
    }
    return "Unknown";
}

void Matrix::set_row(std::size_t r, std::span<const double> values) {
    if (values.size() != cols_)
        throw Error(ErrorKind::dim_mismatch, "row of length " + std::to_string(values.size()) +
                                                 " into matrix with " + std::to_string(cols_) + " columns");
    std::copy(values.begin(), values.end(), row(r).begin());
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw Error(ErrorKind::dim_mismatch,
                    "dot of dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vec unit_normalize(std::span<const double> v) {
    const double n = norm2(v);
    if (!(n >= 1e-30)) throw Error(ErrorKind::zero_norm, "cannot normalize a vector of norm " + std::to_string(n));
    Vec out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    return std::clamp(dot(a, b), -1.0, 1.0);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) return -INFINITY;
    const double peak = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - peak);
    return peak + std::log(acc);
}

Vec finite_diff_grad(const ScalarFn& f, std::span<const double> x, double h) {
    Vec probe(x.begin(), x.end());
    Vec grad(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double saved = probe[j];
        probe[j] = saved + h;
        const double up = f(probe);
        probe[j] = saved - h;
        const double down = f(probe);
        probe[j] = saved;
        grad[j] = (up - down) / (2.0 * h);
    }
    return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    if (a.size() != b.size()) throw Error(ErrorKind::dim_mismatch, "relative_error on unequal lengths");
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(diff) / std::max({norm2(a), norm2(b), floor});
}

}  // namespace qamo
