#pragma once

#include <stdexcept>
#include <string>

namespace tsfrac {

/// An iterative solve (per-step fixed point, backward step, sweep, Picard)
/// failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression text. `column` is 1-based.
class ParseError : public std::invalid_argument {
public:
    ParseError(const std::string& message, std::size_t column)
        : std::invalid_argument(message + " at column " + std::to_string(column)),
          column_(column) {}

    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tsfrac
