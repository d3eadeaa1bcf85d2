#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qamo {

enum class ErrorKind {
    zero_norm,
    dim_mismatch,
    mos_out_of_range,
    parse_error,
    missing_field,
    non_finite_feature,
    missing_quality,
    invalid_scheme,
    empty_class,
    divergence_detected,
    config_error,
    io_error,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it to a category without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    // Message without the kind prefix, for re-wrapping with extra context.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

}  // namespace qamo
