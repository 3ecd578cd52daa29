#include "prior_refine/checkpoint.hpp"

#include <map>

#include "prior_refine/container.hpp"
#include "prior_refine/error.hpp"

namespace prior_refine::checkpoint {

namespace {

std::vector<std::pair<std::string, torch::Tensor>> named_state(torch::nn::Module& module) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : module.named_parameters(true)) out.emplace_back(item.key(), item.value());
    for (const auto& item : module.named_buffers(true)) out.emplace_back(item.key(), item.value());
    return out;
}

}  // namespace

void save_module(torch::nn::Module& module, const std::filesystem::path& base, std::string_view container_name,
                 nlohmann::json body) {
    torch::NoGradGuard no_grad;
    std::vector<float> flat;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& [name, tensor] : named_state(module)) {
        const auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
        table.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", flat.size()}});
        flat.insert(flat.end(), t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    }
    const auto info =
        container::write_blob(base, "params.bin", flat, {static_cast<std::int64_t>(flat.size())});
    body["container"] = container_name;
    body["format_version"] = container::kFormatVersion;
    body["dtype"] = container::kDtype;
    body["parameters"] = table;
    body["blobs"] = {{"params", container::to_json(info)}};
    container::write_manifest(base, body);
}

nlohmann::json read(const std::filesystem::path& base, std::string_view container_name) {
    return container::read_manifest(base, container_name);
}

void load_parameters(torch::nn::Module& module, const std::filesystem::path& base, const nlohmann::json& manifest) {
    torch::NoGradGuard no_grad;
    const auto info = container::blob_from_json(manifest.at("blobs").at("params"));
    const std::vector<float> flat = container::read_blob(base, info);

    std::map<std::string, nlohmann::json> stored;
    for (const auto& entry : manifest.at("parameters")) stored[entry.at("name").get<std::string>()] = entry;

    auto state = named_state(module);
    require(state.size() == stored.size(), ErrorKind::shape_mismatch,
            "checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                std::to_string(state.size()));
    for (auto& [name, tensor] : state) {
        auto it = stored.find(name);
        require(it != stored.end(), ErrorKind::shape_mismatch, "checkpoint lacks tensor '" + name + "'");
        const auto shape = it->second.at("shape").get<std::vector<std::int64_t>>();
        require(shape == tensor.sizes().vec(), ErrorKind::shape_mismatch, "checkpoint tensor '" + name + "' has wrong shape");
        const auto offset = it->second.at("offset").get<std::size_t>();
        const auto numel = static_cast<std::size_t>(tensor.numel());
        require(offset + numel <= flat.size(), ErrorKind::truncated_blob, "checkpoint tensor '" + name + "' overruns blob");
        auto src = torch::from_blob(const_cast<float*>(flat.data() + offset), shape, torch::kFloat32);
        tensor.copy_(src.to(tensor.dtype()));
    }
}

}  // namespace prior_refine::checkpoint
