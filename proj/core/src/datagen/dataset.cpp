#include "prior_refine/datagen/dataset.hpp"

#include <cmath>
#include <exception>
#include <random>
#include <thread>

#include "prior_refine/container.hpp"
#include "prior_refine/datagen/signal.hpp"
#include "prior_refine/error.hpp"
#include "prior_refine/seeding.hpp"

namespace prior_refine::datagen {

namespace {

constexpr std::string_view kContainer = "prior_refine.dataset";
constexpr std::uint64_t kSignalStream = 1;
constexpr std::uint64_t kSpecimenStream = 2;

}  // namespace

std::string_view to_string(Benchmark b) { return b == Benchmark::cavity ? "cavity" : "masked_stress"; }

Benchmark benchmark_from_string(std::string_view name) {
    if (name == "cavity") return Benchmark::cavity;
    if (name == "masked_stress" || name == "dogbone") return Benchmark::masked_stress;
    fail(ErrorKind::invalid_argument, "unknown benchmark '" + std::string(name) + "'");
}

DatasetConfig DatasetConfig::defaults(Benchmark b) {
    DatasetConfig c;
    c.benchmark = b;
    if (b == Benchmark::masked_stress) {
        c.grid = 48;
        c.value_bound = StressConfig{}.displacement_bound;
    }
    return c;
}

nlohmann::json DatasetConfig::to_json() const {
    return {{"benchmark", std::string(to_string(benchmark))},
            {"n_cases", n_cases},
            {"grid", grid},
            {"frames", frames},
            {"signal_length", signal_length},
            {"control_points", control_points},
            {"value_bound", value_bound},
            {"seed", seed},
            {"split_seed", split_seed},
            {"reynolds", reynolds},
            {"duration", duration},
            {"stress_scale", stress_scale}};
}

Split split_cases(int n_cases, std::uint64_t split_seed) {
    require(n_cases >= 1, ErrorKind::invalid_argument, "split needs at least one case");
    std::vector<int> order(static_cast<std::size_t>(n_cases));
    for (int i = 0; i < n_cases; ++i) order[static_cast<std::size_t>(i)] = i;
    // Explicit Fisher-Yates so the partition does not depend on the standard
    // library's shuffle.
    std::mt19937_64 rng(split_seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    const auto n_train = static_cast<std::size_t>(std::lround(0.8 * n_cases));
    Split split;
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

Dataset generate_dataset(const DatasetConfig& config, int jobs) {
    require(config.n_cases >= 1, ErrorKind::invalid_argument, "n_cases must be positive");
    require(config.frames >= 2, ErrorKind::invalid_argument, "frames must be at least 2");

    Dataset ds;
    ds.manifest.name = std::string(to_string(config.benchmark));
    ds.manifest.n_cases = config.n_cases;
    ds.manifest.frames = config.frames;
    ds.manifest.height = config.grid;
    ds.manifest.width = config.grid;
    ds.manifest.signal_length = config.signal_length;
    ds.manifest.signal_bound = config.value_bound;
    ds.manifest.split_seed = config.split_seed;
    ds.manifest.dt = 1.0 / config.frames;
    ds.manifest.has_masks = config.benchmark == Benchmark::masked_stress;
    ds.manifest.generator = config.to_json();
    ds.manifest.config_hash = container::config_hash(ds.manifest.generator);
    if (config.benchmark == Benchmark::cavity) {
        ds.manifest.field_kind = FieldKind::streamfunction;
        ds.manifest.units = "m^2/s";
    } else {
        ds.manifest.field_kind = FieldKind::von_mises;
        ds.manifest.units = "MPa";
    }

    std::optional<DomainMask> mask;
    if (ds.manifest.has_masks) mask = dogbone_mask(config.grid, config.grid);
    const std::uint64_t specimen_seed = derive_seed(config.seed, kSpecimenStream);

    ds.cases.resize(static_cast<std::size_t>(config.n_cases));
    auto build = [&](std::size_t i) {
        CaseRecord& rec = ds.cases[i];
        rec.case_id = static_cast<int>(i);
        const std::uint64_t case_seed = derive_seed(derive_seed(config.seed, kSignalStream), i);
        rec.signal = sample_control_signal(case_seed, config.control_points, config.value_bound, config.signal_length);
        for (double& v : rec.signal.values) v = static_cast<double>(static_cast<float>(v));
        if (config.benchmark == Benchmark::cavity) {
            CavityConfig cc;
            cc.grid = config.grid;
            cc.reynolds = config.reynolds;
            cc.frames = config.frames;
            cc.duration = config.duration;
            rec.field = solve_cavity(rec.signal, cc);
        } else {
            StressConfig sc;
            sc.displacement_bound = config.value_bound;
            sc.stress_scale = config.stress_scale;
            rec.field = synth_masked_stress(rec.signal, *mask, specimen_seed, config.frames, sc);
            rec.mask = mask;
        }
    };

    const int workers = std::max(1, std::min(jobs, config.n_cases));
    if (workers == 1) {
        for (std::size_t i = 0; i < ds.cases.size(); ++i) build(i);
        return ds;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = static_cast<std::size_t>(w); i < ds.cases.size(); i += static_cast<std::size_t>(workers)) build(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return ds;
}

void persist_dataset(const Dataset& dataset, const std::filesystem::path& base) {
    const DatasetManifest& m = dataset.manifest;
    require(static_cast<int>(dataset.cases.size()) == m.n_cases, ErrorKind::shape_mismatch,
            "manifest n_cases disagrees with case list");
    const auto n = static_cast<std::size_t>(m.n_cases);
    const auto l = static_cast<std::size_t>(m.signal_length);
    const std::size_t frame_elems = static_cast<std::size_t>(m.frames) * static_cast<std::size_t>(m.height) *
                                    static_cast<std::size_t>(m.width);

    std::vector<float> signals;
    std::vector<float> fields;
    std::vector<float> masks;
    signals.reserve(n * l);
    fields.reserve(n * frame_elems);
    for (const CaseRecord& rec : dataset.cases) {
        require(rec.signal.length() == l, ErrorKind::shape_mismatch, "case signal length differs from manifest");
        require(rec.field.size() == frame_elems, ErrorKind::shape_mismatch, "case field shape differs from manifest");
        for (double v : rec.signal.values) signals.push_back(static_cast<float>(v));
        fields.insert(fields.end(), rec.field.data.begin(), rec.field.data.end());
        if (m.has_masks) {
            require(rec.mask.has_value(), ErrorKind::shape_mismatch, "manifest declares masks but a case has none");
            for (auto v : rec.mask->data) masks.push_back(static_cast<float>(v));
        }
    }

    const auto N = static_cast<std::int64_t>(n);
    nlohmann::json blobs;
    blobs["signals"] = container::to_json(container::write_blob(base, "signals.bin", signals, {N, m.signal_length}));
    blobs["fields"] = container::to_json(
        container::write_blob(base, "fields.bin", fields, {N, m.frames, m.height, m.width}));
    if (m.has_masks) {
        blobs["masks"] = container::to_json(container::write_blob(base, "masks.bin", masks, {N, m.height, m.width}));
    }

    const Split split = split_cases(m.n_cases, m.split_seed);
    nlohmann::json manifest = {
        {"container", kContainer},
        {"format_version", container::kFormatVersion},
        {"dtype", container::kDtype},
        {"layout", "C-order (case, T, H, W)"},
        {"name", m.name},
        {"n_cases", m.n_cases},
        {"T", m.frames},
        {"H", m.height},
        {"W", m.width},
        {"shape", {m.n_cases, m.frames, m.height, m.width}},
        {"signal_length", m.signal_length},
        {"signal_bound", m.signal_bound},
        {"field_kind", std::string(to_string(m.field_kind))},
        {"units", m.units},
        {"dt", m.dt},
        {"split_seed", m.split_seed},
        {"train_cases", split.train},
        {"test_cases", split.test},
        {"has_masks", m.has_masks},
        {"config_hash", m.config_hash},
        {"generator", m.generator},
        {"blobs", blobs},
    };
    container::write_manifest(base, manifest);
}

Dataset load_dataset(const std::filesystem::path& base) {
    const nlohmann::json j = container::read_manifest(base, kContainer);
    Dataset ds;
    DatasetManifest& m = ds.manifest;
    try {
        m.name = j.at("name").get<std::string>();
        m.n_cases = j.at("n_cases").get<int>();
        m.frames = j.at("T").get<int>();
        m.height = j.at("H").get<int>();
        m.width = j.at("W").get<int>();
        m.signal_length = j.at("signal_length").get<int>();
        m.signal_bound = j.at("signal_bound").get<double>();
        m.field_kind = field_kind_from_string(j.at("field_kind").get<std::string>());
        m.units = j.at("units").get<std::string>();
        m.dt = j.at("dt").get<double>();
        m.split_seed = j.at("split_seed").get<std::uint64_t>();
        m.has_masks = j.at("has_masks").get<bool>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.generator = j.at("generator");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::shape_mismatch, std::string("dataset manifest is missing a field: ") + e.what());
    }
    require(m.n_cases >= 1 && m.frames >= 1 && m.height >= 1 && m.width >= 1 && m.signal_length >= 2,
            ErrorKind::shape_mismatch, "dataset manifest declares an empty shape");

    require(j.value("shape", nlohmann::json()) == nlohmann::json{m.n_cases, m.frames, m.height, m.width},
            ErrorKind::shape_mismatch, "dataset manifest shape disagrees with its T/H/W fields");

    const auto& blobs = j.at("blobs");
    auto expect_shape = [](const container::BlobInfo& info, std::vector<std::int64_t> shape) {
        require(info.shape == shape, ErrorKind::shape_mismatch, info.file + ": blob shape disagrees with manifest");
    };
    const auto N = static_cast<std::int64_t>(m.n_cases);
    const auto sig_info = container::blob_from_json(blobs.at("signals"));
    const auto field_info = container::blob_from_json(blobs.at("fields"));
    expect_shape(sig_info, {N, m.signal_length});
    expect_shape(field_info, {N, m.frames, m.height, m.width});
    const auto signals = container::read_blob(base, sig_info);
    const auto fields = container::read_blob(base, field_info);
    std::vector<float> masks;
    if (m.has_masks) {
        const auto mask_info = container::blob_from_json(blobs.at("masks"));
        expect_shape(mask_info, {N, m.height, m.width});
        masks = container::read_blob(base, mask_info);
    }

    const auto l = static_cast<std::size_t>(m.signal_length);
    const auto frame_elems = static_cast<std::size_t>(m.frames * m.height * m.width);
    const auto mask_elems = static_cast<std::size_t>(m.height * m.width);
    ds.cases.resize(static_cast<std::size_t>(m.n_cases));
    for (std::size_t i = 0; i < ds.cases.size(); ++i) {
        CaseRecord& rec = ds.cases[i];
        rec.case_id = static_cast<int>(i);
        rec.signal = InputSignal::uniform(std::vector<double>(signals.begin() + static_cast<std::ptrdiff_t>(i * l),
                                                              signals.begin() + static_cast<std::ptrdiff_t>((i + 1) * l)));
        rec.field = FieldVideo(static_cast<std::size_t>(m.frames), static_cast<std::size_t>(m.height),
                               static_cast<std::size_t>(m.width));
        std::copy_n(fields.begin() + static_cast<std::ptrdiff_t>(i * frame_elems), frame_elems, rec.field.data.begin());
        rec.field.kind = m.field_kind;
        rec.field.units = m.units;
        rec.field.dt = m.dt;
        if (m.has_masks) {
            DomainMask mask;
            mask.height = static_cast<std::size_t>(m.height);
            mask.width = static_cast<std::size_t>(m.width);
            mask.data.resize(mask_elems);
            for (std::size_t k = 0; k < mask_elems; ++k) {
                mask.data[k] = static_cast<std::uint8_t>(masks[i * mask_elems + k] != 0.0f);
            }
            rec.mask = std::move(mask);
        }
    }
    return ds;
}

}  // namespace prior_refine::datagen
