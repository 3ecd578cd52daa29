#include "prior_refine/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "prior_refine/error.hpp"

namespace prior_refine::container {

namespace fs = std::filesystem;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string config_hash(const nlohmann::json& config) { return hex64(fnv1a(config.dump())); }

fs::path member_path(const fs::path& base, std::string_view suffix) {
    return base.parent_path() / (base.filename().string() + "." + std::string(suffix));
}

void write_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp-" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::io, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        require(static_cast<bool>(out), ErrorKind::io, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        fail(ErrorKind::io, "cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string encode_f32le(std::span<const float> values) {
    std::string out(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(values[i]);
        if constexpr (std::endian::native == std::endian::big) {
            bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
        }
        std::memcpy(out.data() + 4 * i, &bits, 4);
    }
    return out;
}

std::vector<float> decode_f32le(std::string_view bytes, std::size_t expected_count, std::string_view what) {
    const std::size_t expected = expected_count * 4;
    require(bytes.size() >= expected, ErrorKind::truncated_blob,
            std::string(what) + ": expected " + std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
    require(bytes.size() == expected, ErrorKind::shape_mismatch,
            std::string(what) + ": blob holds " + std::to_string(bytes.size()) + " bytes but shape needs " +
                std::to_string(expected));
    std::vector<float> out(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + 4 * i, 4);
        if constexpr (std::endian::native == std::endian::big) {
            bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
        }
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

nlohmann::json to_json(const BlobInfo& info) {
    return {{"file", info.file}, {"shape", info.shape}, {"bytes", info.bytes}, {"checksum", info.checksum}};
}

BlobInfo blob_from_json(const nlohmann::json& j) {
    BlobInfo info;
    try {
        info.file = j.at("file").get<std::string>();
        info.shape = j.at("shape").get<std::vector<std::int64_t>>();
        info.bytes = j.at("bytes").get<std::uint64_t>();
        info.checksum = j.value("checksum", "");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::shape_mismatch, std::string("malformed blob entry: ") + e.what());
    }
    return info;
}

static std::uint64_t element_count(const std::vector<std::int64_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1},
                           [](std::uint64_t acc, std::int64_t d) { return acc * static_cast<std::uint64_t>(d); });
}

BlobInfo write_blob(const fs::path& base, std::string_view suffix, std::span<const float> values,
                    std::vector<std::int64_t> shape) {
    require(element_count(shape) == values.size(), ErrorKind::internal, "blob shape does not match value count");
    const std::string bytes = encode_f32le(values);
    const fs::path path = member_path(base, suffix);
    write_atomic(path, bytes);
    return BlobInfo{path.filename().string(), std::move(shape), bytes.size(), hex64(fnv1a(bytes))};
}

std::vector<float> read_blob(const fs::path& base, const BlobInfo& info, bool verify_checksum) {
    const std::uint64_t count = element_count(info.shape);
    require(count * 4 == info.bytes, ErrorKind::shape_mismatch,
            info.file + ": manifest shape disagrees with declared byte count");
    const std::string bytes = read_file(base.parent_path() / info.file);
    auto values = decode_f32le(bytes, count, info.file);
    if (verify_checksum && !info.checksum.empty()) {
        require(hex64(fnv1a(bytes)) == info.checksum, ErrorKind::lineage_mismatch, info.file + ": checksum mismatch");
    }
    return values;
}

void write_manifest(const fs::path& base, const nlohmann::json& manifest) {
    write_atomic(member_path(base, "manifest.json"), manifest.dump(2) + "\n");
}

nlohmann::json read_manifest(const fs::path& base, std::string_view expected_container) {
    const fs::path path = member_path(base, "manifest.json");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::io, path.string() + ": " + e.what());
    }
    const int version = manifest.value("format_version", -1);
    require(version == kFormatVersion, ErrorKind::version_mismatch,
            path.string() + ": format_version " + std::to_string(version) + ", expected " +
                std::to_string(kFormatVersion));
    const std::string container = manifest.value("container", "");
    require(container == expected_container, ErrorKind::version_mismatch,
            path.string() + ": container '" + container + "', expected '" + std::string(expected_container) + "'");
    require(manifest.value("dtype", std::string(kDtype)) == kDtype, ErrorKind::version_mismatch,
            path.string() + ": unsupported dtype");
    return manifest;
}

}  // namespace prior_refine::container
