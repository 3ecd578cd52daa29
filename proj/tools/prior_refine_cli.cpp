#include <cstdint>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "prior_refine/error.hpp"
#include "prior_refine/log.hpp"
#include "prior_refine/pipeline/pipeline.hpp"

namespace pr = prior_refine;

int main(int argc, char** argv) {
    CLI::App app{"prior-refine: operator priors refined by conditional video diffusion"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    std::string level = "info";
    pr::pipeline::RunOptions options;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "override the training seed");
        cmd->add_option("--jobs", options.jobs, "worker count for data generation")->check(CLI::PositiveNumber);
        cmd->add_option("--out", out, "output root (beats PRIOR_REFINE_OUT and the config)");
        cmd->add_option("--log-level", level, "debug, info, warn, error or off");
    };
    const std::map<std::string, std::string> about{
        {"gen-data", "simulate the dataset and write its manifest"},
        {"train-operator", "train the operator that produces the priors"},
        {"export-priors", "run the trained operator over every case"},
        {"train-diffusion", "train one diffusion variant"},
        {"sample", "draw fields from trained diffusion variants"},
        {"evaluate", "score the variants on the test split and write the report"},
        {"report", "re-render an existing evaluation"},
    };
    std::string target;
    for (const auto& name : pr::pipeline::kCommands) {
        auto* cmd = app.add_subcommand(name, about.at(name));
        add_common(cmd);
        if (name == "train-diffusion") {
            cmd->add_option("--target", target, "full or residual")->check(CLI::IsMember({"full", "residual"}));
            cmd->add_flag("--no-prior", options.no_prior, "train without the operator prior channel");
        }
        if (name == "sample" || name == "evaluate") {
            cmd->add_option("--variants", options.variants, "comma-separated, e.g. sdon,vd-np,vd-pc-d,vd-pc-r")->delimiter(',');
        }
        if (name == "evaluate") cmd->add_flag("--force", options.force, "evaluate despite lineage mismatches");
    }
    CLI11_PARSE(app, argc, argv);

    const auto* cmd = app.get_subcommands().front();
    try {
        pr::log::set_level(pr::log::level_from_string(level));
        if (cmd->count("--seed")) options.seed = seed;
        if (!out.empty()) options.out = out;
        if (!target.empty()) options.target = target;
        const auto config = pr::pipeline::load_config(config_path);
        pr::pipeline::dispatch(cmd->get_name(), config, options);
    } catch (const pr::Error& e) {
        std::cerr << "error [" << pr::to_string(e.kind()) << "]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
