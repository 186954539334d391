#pragma once

#include <stdexcept>
#include <string>

namespace mdjpt {

// All recoverable failures carry a stable machine-readable code plus a
// human-readable detail string, e.g. Error("SchemaViolation", "sampling_rate_hz").
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& detail)
        : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace mdjpt
