#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "prior_refine/datagen/dataset.hpp"
#include "prior_refine/sdon/sdon.hpp"
#include "prior_refine/targets/residual.hpp"

namespace prior_refine::sdon {

struct TrainingLog {
    double initial_mse = 0.0;  ///< on a fixed probe of train cases and coordinates
    double final_mse = 0.0;    ///< same probe after training
    std::vector<double> epoch_loss;
};

/// A trained (or freshly initialized) operator plus everything needed to turn
/// its normalized output back into field units.
struct OperatorModel {
    SDeepONet net{nullptr};
    OperatorConfig config;
    targets::FieldNormalizer normalizer;
    double signal_scale = 1.0;
    int frames = 0;
    int height = 0;
    int width = 0;
    std::uint64_t seed = 0;
    int epochs_trained = 0;
    TrainingLog log;
    std::string dataset_hash;
    std::string config_hash;
};

/// Hash embedded in a checkpoint trained with these settings.
std::string lineage_hash(const OperatorConfig& config, std::uint64_t seed, const std::string& dataset_hash);

/// Fresh model for a dataset's shapes; parameters drawn from `seed`.
OperatorModel init_operator(const datagen::DatasetManifest& manifest, const OperatorConfig& config, std::uint64_t seed);

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Adam with cosine-decayed learning rate on mean squared error over
/// normalized fields. Each step draws `batch_size` train cases and
/// `points_per_step` uniform grid nodes and scores every pairing.
/// Deterministic given `seed`; throws numerical_instability on a NaN loss.
OperatorModel train_operator(const datagen::Dataset& dataset, const std::vector<int>& train_cases,
                             const OperatorConfig& config, std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Full (T, H, W) prior in field units for each signal.
std::vector<FieldVideo> predict_videos(const OperatorModel& model, const std::vector<InputSignal>& signals);

void save_operator(const OperatorModel& model, const std::filesystem::path& base);
OperatorModel load_operator(const std::filesystem::path& base);

/// Frozen operator outputs for every case of a dataset, with lineage.
struct PriorSet {
    std::vector<FieldVideo> priors;  ///< indexed by case id
    std::string operator_hash;
    std::string dataset_hash;
    std::string checksum;  ///< of the persisted field blob
};

PriorSet export_priors(const OperatorModel& model, const datagen::Dataset& dataset);

/// `<base>.manifest.json` + `<base>.fields.bin`.
void persist_priors(PriorSet& priors, const std::filesystem::path& base);

/// Verifies the stored checksum; a changed blob raises lineage_mismatch.
PriorSet load_priors(const std::filesystem::path& base);

}  // namespace prior_refine::sdon
