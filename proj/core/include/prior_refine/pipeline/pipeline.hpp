#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prior_refine/datagen/dataset.hpp"
#include "prior_refine/diffusion/training.hpp"
#include "prior_refine/eval/report.hpp"
#include "prior_refine/sdon/sdon.hpp"

namespace prior_refine::pipeline {

struct EvalSection {
    std::vector<std::string> variants = eval::kVariants;
    std::uint64_t seed = 0;  ///< sampling seed; case c uses derive_seed(seed, c)
    int samples_per_case = 1;
    bool exclude_zero_frames = true;
    int n_steps = 0;        ///< 0 keeps the trained schedule
    double guidance = -1;   ///< negative keeps the trained value
    std::string out_dir = "eval";
};

struct PipelineConfig {
    std::uint64_t seed = 0;  ///< training seed for the operator and diffusion stages
    std::string out = "runs";
    datagen::DatasetConfig dataset;
    sdon::OperatorConfig op;
    diffusion::DiffusionConfig diffusion;
    std::string priors = "priors/priors";  ///< relative paths resolve against the output root
    EvalSection eval;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Every key is optional except that unknown keys, and values of the wrong
/// JSON type, are rejected with the dotted key path in the message.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
std::string dump_config(const PipelineConfig& config);

/// Training configuration of a diffusion variant: the base diffusion section
/// with the target and prior flags the variant implies.
diffusion::DiffusionConfig variant_config(const diffusion::DiffusionConfig& base, const std::string& variant);

inline const std::vector<std::string> kCommands{"gen-data",        "train-operator", "export-priors", "train-diffusion",
                                                "sample",          "evaluate",       "report"};

struct RunOptions {
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::optional<std::filesystem::path> out;  ///< beats PRIOR_REFINE_OUT, which beats the config
    std::vector<std::string> variants;         ///< sample / evaluate; empty means the config list
    std::optional<std::string> target;         ///< train-diffusion
    bool no_prior = false;                     ///< train-diffusion
    bool force = false;                        ///< evaluate past lineage mismatches
};

/// Artifact locations under one output root.
struct Layout {
    std::filesystem::path root;
    std::filesystem::path dataset;
    std::filesystem::path op;
    std::filesystem::path priors;
    std::filesystem::path eval;
    std::filesystem::path logs;

    std::filesystem::path diffusion(const std::string& variant) const;
    std::filesystem::path samples(const std::string& variant) const;
};

Layout layout(const PipelineConfig& config, const RunOptions& options);

/// Runs one stage. Artifacts are written atomically, plus a run log under
/// `logs/`. Module errors propagate as prior_refine::Error.
void dispatch(const std::string& command, const PipelineConfig& config, const RunOptions& options = {});

/// Rebuilds the ablation report from an evaluate output directory.
eval::AblationReport read_report(const std::filesystem::path& eval_dir);

}  // namespace prior_refine::pipeline
