#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tsfrac/cli.hpp"
#include "tsfrac/error.hpp"

int main(int argc, char** argv) {
    using namespace tsfrac;

    CLI::App app{"Fractional calculus on time scales: operator evaluation, law audits, IVP and control solves"};
    std::string config_path;
    std::optional<std::string> mode, out, quadrature;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON run configuration")->required();
    app.add_option("--mode", mode, "Override the config mode")
        ->check(CLI::IsMember({"eval", "audit", "ivp", "focp"}));
    app.add_option("--out", out, "Output directory");
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--quadrature", quadrature, "Override the config quadrature")
        ->check(CLI::IsMember({"node", "cell_avg"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[" << exit_code::invalid_input << "]: " << e.what() << '\n';
        return exit_code::invalid_input;
    }

    RunConfig config;
    try {
        config = load_config(config_path);
    } catch (const IoError& e) {
        std::cerr << "error[" << exit_code::io_failure << "]: " << e.what() << '\n';
        return exit_code::io_failure;
    } catch (const ConfigError& e) {
        std::cerr << "error[" << exit_code::invalid_input << "]: " << e.what() << '\n';
        return exit_code::invalid_input;
    }
    config.mode = mode;
    config.seed = seed;
    if (out) {
        config.out_dir = *out;
    }
    if (quadrature) {
        config.quadrature = *quadrature == "node" ? Quadrature::node : Quadrature::cell_avg;
    }
    return run(config, std::cerr);
}
