#pragma once

// On-disk container shared by datasets, priors and checkpoints:
// `<name>.manifest.json` plus one raw little-endian float32 blob per array.
// Blobs are written first and the manifest last, each through a temp file and
// rename, so a readable manifest implies complete blobs.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace prior_refine::container {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kDtype = "f32le";

/// 64-bit FNV-1a; stable across platforms, used for lineage and checksums.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Hash of the canonical (sorted-key, compact) JSON dump.
std::string config_hash(const nlohmann::json& config);

/// `<dir>/<name>.<suffix>`
std::filesystem::path member_path(const std::filesystem::path& base, std::string_view suffix);

void write_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

std::string encode_f32le(std::span<const float> values);

/// Decodes exactly `expected_count` floats. Short files raise truncated_blob,
/// oversized files raise shape_mismatch.
std::vector<float> decode_f32le(std::string_view bytes, std::size_t expected_count, std::string_view what);

struct BlobInfo {
    std::string file;
    std::vector<std::int64_t> shape;
    std::uint64_t bytes = 0;
    std::string checksum;
};

nlohmann::json to_json(const BlobInfo& info);
BlobInfo blob_from_json(const nlohmann::json& j);

/// Writes `values` next to `base` and returns the manifest entry for it.
BlobInfo write_blob(const std::filesystem::path& base, std::string_view suffix, std::span<const float> values,
                    std::vector<std::int64_t> shape);

/// Reads a blob described by a manifest entry, checking size and shape.
std::vector<float> read_blob(const std::filesystem::path& base, const BlobInfo& info, bool verify_checksum = false);

void write_manifest(const std::filesystem::path& base, const nlohmann::json& manifest);

/// Parses `<base>.manifest.json`, checking `format_version` and `container`.
nlohmann::json read_manifest(const std::filesystem::path& base, std::string_view expected_container);

}  // namespace prior_refine::container
