#pragma once

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace prior_refine::checkpoint {

/// Writes every parameter and buffer of `module` as one float32 blob
/// (`<base>.params.bin`) and `body` plus a parameter table as the manifest.
void save_module(torch::nn::Module& module, const std::filesystem::path& base, std::string_view container,
                 nlohmann::json body);

/// Reads the manifest and checks container and version.
nlohmann::json read(const std::filesystem::path& base, std::string_view container);

/// Copies stored values into `module`'s parameters/buffers by name. Every
/// name must match in both directions, with identical shapes.
void load_parameters(torch::nn::Module& module, const std::filesystem::path& base, const nlohmann::json& manifest);

}  // namespace prior_refine::checkpoint
