#pragma once

// Config-driven runs behind the command-line tool. A run reads one JSON
// document, solves or audits, and writes plain CSV/JSON files into an output
// directory. See README.md for the config keys of each mode.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsfrac/expr.hpp"
#include "tsfrac/focp.hpp"
#include "tsfrac/fracops.hpp"
#include "tsfrac/timescale.hpp"

namespace tsfrac {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int not_converged = 2;
inline constexpr int invalid_input = 3;
inline constexpr int io_failure = 4;
} // namespace exit_code

/// Bad configuration value. what() starts with the dotted field path.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct RunConfig {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    /// Directory that relative grid_file paths are resolved against.
    std::filesystem::path base_dir = ".";
    // Command-line overrides of the document.
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<Quadrature> quadrature;
};

/// Reads and parses a config file. IoError if unreadable, ConfigError if the
/// text is not JSON or not an object.
RunConfig load_config(const std::filesystem::path& path);

/// Grid from the "grid" object or the "grid_file" path of a config document.
TimeScaleGrid grid_from_config(const nlohmann::ordered_json& doc, const std::filesystem::path& base_dir);

/// Dispatches on the mode and writes the outputs. Errors are reported as one
/// line "error[<code>]: ..." on err; the return value is the exit code.
int run(const RunConfig& config, std::ostream& err);

/// Control model whose dynamics and running cost are expressions in t, x and
/// u. Partials come from symbolic differentiation; entries whose symbolic
/// value is not finite fall back to central differences.
FocpModel model_from_expressions(const std::vector<Expr>& dynamics, const Expr& cost,
                                 Eigen::Index control_dim);

/// Number text used in every CSV output.
std::string format_number(double v);

} // namespace tsfrac
