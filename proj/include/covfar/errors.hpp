#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace covfar {

// Two failure classes, matching the CLI exit-code contract:
// validation errors (bad input, bad flags) exit 1, numerical failures
// (non-convergence, rank deficiency, degenerate fits) exit 2.
enum class ErrorKind { validation, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    static Error validation(std::string message) {
        return Error(ErrorKind::validation, std::move(message));
    }
    static Error numerical(std::string message) {
        return Error(ErrorKind::numerical, std::move(message));
    }

private:
    ErrorKind kind_;
};

} // namespace covfar
