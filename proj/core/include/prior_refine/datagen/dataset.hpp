#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prior_refine/datagen/cavity.hpp"
#include "prior_refine/datagen/stress.hpp"
#include "prior_refine/fields.hpp"

namespace prior_refine::datagen {

enum class Benchmark { cavity, masked_stress };

std::string_view to_string(Benchmark b);
Benchmark benchmark_from_string(std::string_view name);

struct DatasetConfig {
    Benchmark benchmark = Benchmark::cavity;
    int n_cases = 64;
    int grid = 32;
    int frames = 16;
    int signal_length = 101;
    int control_points = 6;
    double value_bound = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    double reynolds = 100.0;
    double duration = 4.0;
    double stress_scale = 300.0;

    /// Defaults for a benchmark: 32x32 cavity with unit lid speed, or 48x48
    /// dogbone with a 5.5 mm displacement bound.
    static DatasetConfig defaults(Benchmark b);

    nlohmann::json to_json() const;
};

struct CaseRecord {
    int case_id = 0;
    InputSignal signal;
    FieldVideo field;
    std::optional<DomainMask> mask;
};

struct DatasetManifest {
    std::string name = "dataset";
    int n_cases = 0;
    int frames = 0;
    int height = 0;
    int width = 0;
    int signal_length = 0;
    FieldKind field_kind = FieldKind::synthetic;
    std::string units;
    double dt = 0.0;
    double signal_bound = 1.0;  ///< branch inputs are divided by this
    std::uint64_t split_seed = 0;
    bool has_masks = false;
    std::string config_hash;   ///< lineage of the generating configuration
    nlohmann::json generator;  ///< generating configuration, verbatim

    bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<CaseRecord> cases;
};

/// Exact 80-20 partition: |train| = round(0.8 N), both sides sorted.
struct Split {
    std::vector<int> train;
    std::vector<int> test;
};

Split split_cases(int n_cases, std::uint64_t split_seed);

/// Builds every case; cases are independent, so `jobs` workers split them.
/// Signals are rounded to float32 so the persisted dataset round-trips exactly.
Dataset generate_dataset(const DatasetConfig& config, int jobs = 1);

/// Writes `<base>.manifest.json`, `<base>.signals.bin`, `<base>.fields.bin`
/// and, with masks, `<base>.masks.bin`. `base` is `<dir>/<name>`.
void persist_dataset(const Dataset& dataset, const std::filesystem::path& base);
Dataset load_dataset(const std::filesystem::path& base);

}  // namespace prior_refine::datagen
