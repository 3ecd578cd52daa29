#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prior_refine/datagen/dataset.hpp"
#include "prior_refine/diffusion/training.hpp"
#include "prior_refine/eval/metrics.hpp"
#include "prior_refine/sdon/training.hpp"

namespace prior_refine::eval {

/// Report rows in display order.
inline const std::vector<std::string> kVariants{"sdon", "vd-np", "vd-pc-d", "vd-pc-r"};

struct CaseErrors {
    int case_id = 0;
    double rel_l2 = 0.0;
    double rmae = 0.0;
    double mae = 0.0;
    std::size_t zero_frames = 0;
};

struct VariantSummary {
    std::string variant;
    std::vector<CaseErrors> cases;
    double mean_rel_l2 = 0.0;  ///< over cases with a finite value
    double mean_rmae = 0.0;
    double mean_mae = 0.0;
    Percentiles rel_l2_pct;
    Percentiles rmae_pct;
    Percentiles mae_pct;
    std::size_t flagged_cases = 0;  ///< cases with a zero-norm ground-truth frame
};

struct AblationReport {
    std::vector<VariantSummary> variants;
    bool masked = false;
    std::string units;
    nlohmann::json lineage;

    const VariantSummary* find(const std::string& variant) const;
};

std::vector<CaseErrors> score_cases(const std::vector<const FieldVideo*>& truth, const std::vector<FieldVideo>& pred,
                                    const std::vector<int>& case_ids, bool exclude_zero_frames = true);
VariantSummary summarize(const std::string& variant, std::vector<CaseErrors> cases);

struct AblationOptions {
    std::vector<std::string> variants = kVariants;
    std::uint64_t seed = 0;
    int samples_per_case = 1;  ///< >1 averages an ensemble of samples
    bool exclude_zero_frames = true;
    diffusion::SampleOptions sampling;
};

struct AblationResult {
    AblationReport report;
    std::map<std::string, std::vector<FieldVideo>> predictions;  ///< per variant, aligned with the test cases
};

/// Scores the operator priors and one sample per test case from each
/// requested diffusion model. Variants that need priors but get none, or a
/// model whose variant differs from its key, raise configuration errors.
AblationResult run_ablation(const datagen::Dataset& dataset, const std::vector<int>& test_cases,
                            const sdon::PriorSet* priors,
                            const std::map<std::string, const diffusion::DiffusionModel*>& models,
                            const AblationOptions& options);

nlohmann::json to_json(const AblationReport& report);
std::string per_case_csv(const AblationReport& report);

/// Plain-text table: mean rows (MAE only for masked data), then percentiles.
std::string render_table(const AblationReport& report);

/// Overlaid per-variant histograms; the x axis turns logarithmic when the
/// largest and smallest positive errors differ by more than 50x.
std::string histogram_svg(const AblationReport& report, const std::string& metric);
bool use_log_axis(const std::vector<double>& values);

/// Last-frame heatmaps side by side; each column has a title.
std::string field_panel_svg(const std::vector<std::pair<std::string, FieldVideo>>& columns, std::size_t frame);

/// report.json, per_case.csv, report.txt, hist_*.svg and panels for the
/// best/median/worst operator cases, each written atomically into `dir`.
void write_outputs(const std::filesystem::path& dir, const AblationResult& result, const datagen::Dataset& dataset,
                   const std::vector<int>& test_cases, const sdon::PriorSet* priors);

}  // namespace prior_refine::eval
