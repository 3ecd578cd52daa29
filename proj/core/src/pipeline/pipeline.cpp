#include "prior_refine/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "prior_refine/container.hpp"
#include "prior_refine/error.hpp"
#include "prior_refine/log.hpp"
#include "prior_refine/sdon/training.hpp"

namespace prior_refine::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kSampleContainer = "prior_refine.samples";

std::string expected_type(const json& t) {
    if (t.is_boolean()) return "boolean";
    if (t.is_number_unsigned()) return "non-negative integer";
    if (t.is_number_integer()) return "integer";
    if (t.is_number()) return "number";
    if (t.is_string()) return "string";
    if (t.is_array()) return "array";
    return "object";
}

bool type_matches(const json& t, const json& v) {
    if (t.is_boolean()) return v.is_boolean();
    if (t.is_number_unsigned()) return v.is_number_unsigned();
    if (t.is_number_integer()) return v.is_number_integer();
    if (t.is_number()) return v.is_number();
    if (t.is_string()) return v.is_string();
    if (t.is_array()) return v.is_array();
    return v.is_object();
}

// Every key in `user` must exist in `tmpl` with a compatible type.
void check_keys(const json& user, const json& tmpl, const std::string& path) {
    for (const auto& [k, v] : user.items()) {
        const std::string key = path.empty() ? k : path + "." + k;
        require(tmpl.contains(k), ErrorKind::configuration, "unknown config key '" + key + "'");
        const auto& t = tmpl.at(k);
        require(type_matches(t, v), ErrorKind::configuration,
                "config key '" + key + "' expects " + expected_type(t) + ", got " + v.type_name());
        if (t.is_object()) check_keys(v, t, key);
    }
}

datagen::DatasetConfig dataset_from_json(const json& j) {
    auto c = datagen::DatasetConfig::defaults(datagen::benchmark_from_string(j.at("benchmark").get<std::string>()));
    c.n_cases = j.at("n_cases").get<int>();
    c.grid = j.at("grid").get<int>();
    c.frames = j.at("frames").get<int>();
    c.signal_length = j.at("signal_length").get<int>();
    c.control_points = j.at("control_points").get<int>();
    c.value_bound = j.at("value_bound").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.split_seed = j.at("split_seed").get<std::uint64_t>();
    c.reynolds = j.at("reynolds").get<double>();
    c.duration = j.at("duration").get<double>();
    c.stress_scale = j.at("stress_scale").get<double>();
    return c;
}

json eval_to_json(const EvalSection& e) {
    return {{"variants", e.variants},   {"seed", e.seed},         {"samples_per_case", e.samples_per_case},
            {"exclude_zero_frames", e.exclude_zero_frames},     {"n_steps", e.n_steps},
            {"guidance", e.guidance},   {"out_dir", e.out_dir}};
}

json template_for(datagen::Benchmark b) {
    PipelineConfig c;
    c.dataset = datagen::DatasetConfig::defaults(b);
    return c.to_json();
}

bool artifact_exists(const fs::path& base) { return fs::exists(container::member_path(base, "manifest.json")); }

void require_artifacts(const std::vector<std::pair<std::string, fs::path>>& needed, const std::string& command) {
    std::string missing;
    for (const auto& [what, base] : needed) {
        if (!artifact_exists(base)) missing += "\n  " + what + " (" + container::member_path(base, "manifest.json").string() + ")";
    }
    require(missing.empty(), ErrorKind::precondition, command + " is missing required artifacts:" + missing);
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

std::vector<int> test_split(const datagen::Dataset& ds) {
    return datagen::split_cases(ds.manifest.n_cases, ds.manifest.split_seed).test;
}

std::vector<std::string> diffusion_variants(const std::vector<std::string>& variants) {
    std::vector<std::string> out;
    for (const auto& v : variants) if (v != "sdon") out.push_back(v);
    return out;
}

diffusion::SampleOptions sample_options(const EvalSection& e) {
    diffusion::SampleOptions o;
    if (e.n_steps > 0) o.n_steps = e.n_steps;
    if (e.guidance >= 0.0) o.guidance = e.guidance;
    return o;
}

struct Stage {
    const PipelineConfig& config;
    const RunOptions& options;
    Layout paths;
    std::uint64_t seed;
    json artifacts = json::array();

    void lineage(bool ok, const std::string& message) const {
        if (ok) return;
        require(options.force, ErrorKind::lineage_mismatch, message + " (rerun the stage or pass --force)");
        log::warn("lineage check overridden: " + message);
    }

    datagen::Dataset dataset() const {
        auto ds = datagen::load_dataset(paths.dataset);
        lineage(ds.manifest.config_hash == container::config_hash(config.dataset.to_json()),
                "dataset at " + paths.dataset.string() + " was generated from a different dataset config");
        return ds;
    }

    std::string expected_operator_hash(const datagen::Dataset& ds) const {
        return sdon::lineage_hash(config.op, seed, ds.manifest.config_hash);
    }

    void gen_data() {
        log::info("generating " + std::to_string(config.dataset.n_cases) + " " +
                  std::string(datagen::to_string(config.dataset.benchmark)) + " cases");
        const auto ds = datagen::generate_dataset(config.dataset, options.jobs);
        datagen::persist_dataset(ds, paths.dataset);
        artifacts.push_back(paths.dataset.string());
    }

    void train_operator() {
        require_artifacts({{"dataset (run gen-data)", paths.dataset}}, "train-operator");
        const auto ds = dataset();
        const auto split = datagen::split_cases(ds.manifest.n_cases, ds.manifest.split_seed);
        const int every = std::max(1, config.op.epochs / 20);
        const auto model = sdon::train_operator(ds, split.train, config.op, seed, [&](int epoch, double loss) {
            if ((epoch + 1) % every == 0) log::info("epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(loss));
        });
        log::info("probe mse " + std::to_string(model.log.initial_mse) + " -> " + std::to_string(model.log.final_mse));
        sdon::save_operator(model, paths.op);
        artifacts.push_back(paths.op.string());
    }

    void export_priors() {
        require_artifacts({{"dataset (run gen-data)", paths.dataset}, {"operator checkpoint (run train-operator)", paths.op}},
                          "export-priors");
        const auto ds = dataset();
        const auto model = sdon::load_operator(paths.op);
        lineage(model.dataset_hash == ds.manifest.config_hash, "operator was trained on a different dataset");
        lineage(model.config_hash == expected_operator_hash(ds),
                "operator checkpoint hash " + model.config_hash + " does not match the current operator config");
        auto priors = sdon::export_priors(model, ds);
        sdon::persist_priors(priors, paths.priors);
        artifacts.push_back(paths.priors.string());
    }

    diffusion::DiffusionConfig training_config() const {
        auto c = config.diffusion;
        if (options.target) c.target = diffusion::target_mode_from_string(*options.target);
        if (options.no_prior) c.use_prior = false;
        c.validate();
        return c;
    }

    void train_diffusion() {
        const auto c = training_config();
        std::vector<std::pair<std::string, fs::path>> needed{{"dataset (run gen-data)", paths.dataset}};
        if (c.use_prior) needed.emplace_back("operator priors (run train-operator, then export-priors)", paths.priors);
        require_artifacts(needed, "train-diffusion (" + diffusion::variant_name(c.target, c.use_prior) + ")");
        const auto ds = dataset();
        std::optional<sdon::PriorSet> priors;
        if (c.use_prior) {
            priors = sdon::load_priors(paths.priors);
            lineage(priors->operator_hash == expected_operator_hash(ds),
                    "priors come from an operator trained with a different config");
        }
        const auto split = datagen::split_cases(ds.manifest.n_cases, ds.manifest.split_seed);
        const int every = std::max(1, c.steps / 20);
        const auto model = diffusion::train_diffusion(ds, priors ? &*priors : nullptr, split.train, c, seed,
                                                      [&](int step, double loss) {
                                                          if ((step + 1) % every == 0)
                                                              log::info("step " + std::to_string(step + 1) + " loss " +
                                                                        std::to_string(loss));
                                                      });
        const auto base = paths.diffusion(model.variant());
        diffusion::save_diffusion(model, base);
        artifacts.push_back(base.string());
    }

    std::vector<std::string> requested() const {
        auto v = options.variants.empty() ? config.eval.variants : options.variants;
        for (const auto& name : v) {
            require(std::find(eval::kVariants.begin(), eval::kVariants.end(), name) != eval::kVariants.end(),
                    ErrorKind::configuration, "unknown variant '" + name + "'");
        }
        return v;
    }

    // Loads checkpoints for the diffusion variants and checks their lineage
    // against the current config, dataset and priors.
    std::map<std::string, diffusion::DiffusionModel> load_models(const std::vector<std::string>& variants,
                                                                 const datagen::Dataset& ds,
                                                                 const sdon::PriorSet* priors) const {
        std::map<std::string, diffusion::DiffusionModel> models;
        for (const auto& v : diffusion_variants(variants)) {
            auto m = diffusion::load_diffusion(paths.diffusion(v));
            const auto c = diffusion::resolve_config(variant_config(config.diffusion, v), ds.manifest);
            const bool prior = c.use_prior;
            const auto expected = diffusion::lineage_hash(c, seed, ds.manifest.config_hash,
                                                          prior && priors ? priors->operator_hash : "",
                                                          prior && priors ? priors->checksum : "");
            lineage(m.config_hash == expected,
                    v + " checkpoint hash " + m.config_hash + " does not match the current config (expected " + expected + ")");
            lineage(m.dataset_hash == ds.manifest.config_hash, v + " checkpoint was trained on a different dataset");
            if (prior && priors) {
                lineage(m.prior_checksum == priors->checksum, v + " checkpoint was trained on different priors");
            }
            models.emplace(v, std::move(m));
        }
        return models;
    }

    std::vector<std::pair<std::string, fs::path>> needs(const std::vector<std::string>& variants) const {
        std::vector<std::pair<std::string, fs::path>> needed{{"dataset (run gen-data)", paths.dataset}};
        const bool any_prior = std::any_of(variants.begin(), variants.end(), [](const auto& v) { return v != "vd-np"; });
        if (any_prior) needed.emplace_back("operator priors (run export-priors)", paths.priors);
        for (const auto& v : diffusion_variants(variants)) {
            const auto c = variant_config(config.diffusion, v);
            needed.emplace_back(v + " checkpoint (run train-diffusion --target " + std::string(diffusion::to_string(c.target)) +
                                    (c.use_prior ? "" : " --no-prior") + ")",
                                paths.diffusion(v));
        }
        return needed;
    }

    std::optional<sdon::PriorSet> checked_priors(const std::vector<std::string>& variants, const datagen::Dataset& ds) const {
        const bool any_prior = std::any_of(variants.begin(), variants.end(), [](const auto& v) { return v != "vd-np"; });
        if (!any_prior) return std::nullopt;
        auto priors = sdon::load_priors(paths.priors);
        lineage(priors.dataset_hash == ds.manifest.config_hash, "priors were exported for a different dataset");
        lineage(priors.operator_hash == expected_operator_hash(ds),
                "priors come from an operator trained with a different config");
        return priors;
    }

    void sample() {
        auto variants = diffusion_variants(requested());
        require(!variants.empty(), ErrorKind::configuration, "sample needs at least one diffusion variant");
        require_artifacts(needs(variants), "sample");
        const auto ds = dataset();
        const auto priors = checked_priors(variants, ds);
        const auto models = load_models(variants, ds, priors ? &*priors : nullptr);
        const auto cases = test_split(ds);
        for (const auto& [v, m] : models) {
            log::info("sampling " + v + " for " + std::to_string(cases.size()) + " test cases");
            const auto pred = diffusion::generate(m, ds, priors ? &*priors : nullptr, cases, config.eval.seed,
                                                  sample_options(config.eval));
            std::vector<float> flat;
            for (const auto& p : pred) flat.insert(flat.end(), p.data.begin(), p.data.end());
            const auto base = paths.samples(v);
            const auto info = container::write_blob(base, "fields.bin", flat,
                                                    {static_cast<std::int64_t>(pred.size()), m.frames, m.height, m.width});
            container::write_manifest(base, {{"container", kSampleContainer},
                                             {"format_version", container::kFormatVersion},
                                             {"dtype", container::kDtype},
                                             {"variant", v},
                                             {"case_ids", cases},
                                             {"seed", config.eval.seed},
                                             {"units", ds.manifest.units},
                                             {"checkpoint_hash", m.config_hash},
                                             {"blobs", {{"fields", container::to_json(info)}}}});
            artifacts.push_back(base.string());
        }
    }

    void evaluate() {
        const auto variants = requested();
        require(!variants.empty(), ErrorKind::configuration, "evaluate needs at least one variant");
        require_artifacts(needs(variants), "evaluate");
        const auto ds = dataset();
        const auto priors = checked_priors(variants, ds);
        const auto models = load_models(variants, ds, priors ? &*priors : nullptr);
        std::map<std::string, const diffusion::DiffusionModel*> refs;
        for (const auto& [v, m] : models) refs[v] = &m;

        eval::AblationOptions o;
        o.variants = variants;
        o.seed = config.eval.seed;
        o.samples_per_case = config.eval.samples_per_case;
        o.exclude_zero_frames = config.eval.exclude_zero_frames;
        o.sampling = sample_options(config.eval);
        const auto cases = test_split(ds);
        auto result = eval::run_ablation(ds, cases, priors ? &*priors : nullptr, refs, o);
        eval::write_outputs(paths.eval, result, ds, cases, priors ? &*priors : nullptr);
        std::cout << eval::render_table(result.report);
        artifacts.push_back(paths.eval.string());
    }

    void report() {
        require(fs::exists(paths.eval / "per_case.csv"), ErrorKind::precondition,
                "report is missing required artifacts:\n  evaluation results (run evaluate) (" +
                    (paths.eval / "per_case.csv").string() + ")");
        const auto r = read_report(paths.eval);
        const auto table = eval::render_table(r);
        container::write_atomic(paths.eval / "report.txt", table);
        for (const std::string metric : {"rel_l2", "rmae", "mae"}) {
            container::write_atomic(paths.eval / ("hist_" + metric + ".svg"), eval::histogram_svg(r, metric));
        }
        std::cout << table;
        artifacts.push_back((paths.eval / "report.txt").string());
    }
};

}  // namespace

void PipelineConfig::validate() const {
    require(dataset.n_cases >= 2, ErrorKind::configuration, "dataset.n_cases must be at least 2");
    require(dataset.grid >= 8, ErrorKind::configuration, "dataset.grid must be at least 8");
    require(dataset.frames >= 2, ErrorKind::configuration, "dataset.frames must be at least 2");
    require(dataset.signal_length >= 2, ErrorKind::configuration, "dataset.signal_length must be at least 2");
    require(dataset.control_points >= 2, ErrorKind::configuration, "dataset.control_points must be at least 2");
    require(dataset.value_bound > 0.0, ErrorKind::configuration, "dataset.value_bound must be positive");
    op.validate();
    diffusion.validate();
    require(diffusion.target != diffusion::TargetMode::residual || !priors.empty(), ErrorKind::configuration,
            "diffusion.target = residual needs a priors path");
    require(!out.empty(), ErrorKind::configuration, "out must not be empty");
    std::set<std::string> seen;
    for (const auto& v : eval.variants) {
        require(std::find(eval::kVariants.begin(), eval::kVariants.end(), v) != eval::kVariants.end(),
                ErrorKind::configuration, "eval.variants: unknown variant '" + v + "'");
        require(seen.insert(v).second, ErrorKind::configuration, "eval.variants: duplicate '" + v + "'");
    }
    require(eval.samples_per_case >= 1, ErrorKind::configuration, "eval.samples_per_case must be at least 1");
    require(eval.n_steps >= 0, ErrorKind::configuration, "eval.n_steps must be nonnegative");
    require(!eval.out_dir.empty(), ErrorKind::configuration, "eval.out_dir must not be empty");
}

json PipelineConfig::to_json() const {
    auto d = diffusion.to_json();
    d["priors"] = priors;
    return {{"seed", seed},       {"out", out},   {"dataset", dataset.to_json()},
            {"operator", op.to_json()}, {"diffusion", d}, {"eval", eval_to_json(eval)}};
}

PipelineConfig parse_config(const json& j) {
    require(j.is_object(), ErrorKind::configuration, "config must be a JSON object");
    auto bench = datagen::Benchmark::cavity;
    if (j.contains("dataset") && j.at("dataset").is_object() && j.at("dataset").contains("benchmark")) {
        const auto& b = j.at("dataset").at("benchmark");
        require(b.is_string(), ErrorKind::configuration, "config key 'dataset.benchmark' expects string");
        bench = datagen::benchmark_from_string(b.get<std::string>());
    }
    auto merged = template_for(bench);
    check_keys(j, merged, "");
    merged.merge_patch(j);

    PipelineConfig c;
    try {
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.out = merged.at("out").get<std::string>();
        c.dataset = dataset_from_json(merged.at("dataset"));
        c.op = sdon::OperatorConfig::from_json(merged.at("operator"));
        auto d = merged.at("diffusion");
        c.priors = d.at("priors").get<std::string>();
        d.erase("priors");
        c.diffusion = diffusion::DiffusionConfig::from_json(d);
        const auto& e = merged.at("eval");
        for (const auto& v : e.at("variants")) {
            require(v.is_string(), ErrorKind::configuration, "config key 'eval.variants' expects an array of strings");
        }
        c.eval.variants = e.at("variants").get<std::vector<std::string>>();
        c.eval.seed = e.at("seed").get<std::uint64_t>();
        c.eval.samples_per_case = e.at("samples_per_case").get<int>();
        c.eval.exclude_zero_frames = e.at("exclude_zero_frames").get<bool>();
        c.eval.n_steps = e.at("n_steps").get<int>();
        c.eval.guidance = e.at("guidance").get<double>();
        c.eval.out_dir = e.at("out_dir").get<std::string>();
    } catch (const json::exception& e) {
        fail(ErrorKind::configuration, std::string("bad config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    require(fs::exists(path), ErrorKind::io, "config file not found: " + path.string());
    json j;
    try {
        j = json::parse(container::read_file(path));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::configuration, path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

std::string dump_config(const PipelineConfig& config) { return config.to_json().dump(2) + "\n"; }

diffusion::DiffusionConfig variant_config(const diffusion::DiffusionConfig& base, const std::string& variant) {
    auto c = base;
    if (variant == "vd-np") {
        c.target = diffusion::TargetMode::full;
        c.use_prior = false;
    } else if (variant == "vd-pc-d") {
        c.target = diffusion::TargetMode::full;
        c.use_prior = true;
    } else if (variant == "vd-pc-r") {
        c.target = diffusion::TargetMode::residual;
        c.use_prior = true;
    } else {
        fail(ErrorKind::configuration, "'" + variant + "' is not a diffusion variant");
    }
    return c;
}

fs::path Layout::diffusion(const std::string& variant) const { return root / "diffusion" / variant; }
fs::path Layout::samples(const std::string& variant) const { return root / "samples" / variant; }

Layout layout(const PipelineConfig& config, const RunOptions& options) {
    Layout l;
    if (options.out) {
        l.root = *options.out;
    } else if (const char* env = std::getenv("PRIOR_REFINE_OUT"); env != nullptr && *env != '\0') {
        l.root = env;
    } else {
        l.root = config.out;
    }
    l.dataset = l.root / "data" / "dataset";
    l.op = l.root / "operator" / "operator";
    l.priors = fs::path(config.priors).is_absolute() ? fs::path(config.priors) : l.root / config.priors;
    l.eval = l.root / config.eval.out_dir;
    l.logs = l.root / "logs";
    return l;
}

void dispatch(const std::string& command, const PipelineConfig& config, const RunOptions& options) {
    require(std::find(kCommands.begin(), kCommands.end(), command) != kCommands.end(), ErrorKind::invalid_argument,
            "unknown command '" + command + "'");
    require(options.jobs >= 1, ErrorKind::invalid_argument, "--jobs must be at least 1");
    config.validate();
    Stage stage{config, options, layout(config, options), options.seed.value_or(config.seed)};
    const auto started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();

    json run{{"command", command},
             {"config_hash", container::config_hash(config.to_json())},
             {"seed", stage.seed},
             {"jobs", options.jobs},
             {"started", started}};
    std::string suffix;
    if (command == "train-diffusion") {
        const auto c = stage.training_config();
        suffix = "-" + diffusion::variant_name(c.target, c.use_prior);
    }
    auto write_log = [&](const std::string& status) {
        run["status"] = status;
        run["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        run["artifacts"] = stage.artifacts;
        fs::create_directories(stage.paths.logs);
        container::write_atomic(stage.paths.logs / (command + suffix + ".json"), run.dump(2) + "\n");
    };

    try {
        if (command == "gen-data") stage.gen_data();
        else if (command == "train-operator") stage.train_operator();
        else if (command == "export-priors") stage.export_priors();
        else if (command == "train-diffusion") stage.train_diffusion();
        else if (command == "sample") stage.sample();
        else if (command == "evaluate") stage.evaluate();
        else stage.report();
    } catch (const Error& e) {
        run["error"] = {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
        try {
            write_log("failed");
        } catch (const std::exception&) {
            // the original error matters more than a lost log
        }
        throw;
    }
    write_log("ok");
}

eval::AblationReport read_report(const fs::path& dir) {
    const auto summary = json::parse(container::read_file(dir / "report.json"));
    std::istringstream csv(container::read_file(dir / "per_case.csv"));
    std::string line;
    std::getline(csv, line);
    require(line == "case_id,variant,rel_l2,rmae,mae", ErrorKind::io, "unexpected per_case.csv header");
    std::vector<std::string> order;
    std::map<std::string, std::vector<eval::CaseErrors>> rows;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string id, variant, a, b, c;
        std::getline(fields, id, ',');
        std::getline(fields, variant, ',');
        std::getline(fields, a, ',');
        std::getline(fields, b, ',');
        std::getline(fields, c, ',');
        if (!rows.count(variant)) order.push_back(variant);
        try {
            rows[variant].push_back({std::stoi(id), std::stod(a), std::stod(b), std::stod(c), 0});
        } catch (const std::exception&) {
            fail(ErrorKind::io, "malformed per_case.csv row: " + line);
        }
    }
    eval::AblationReport r;
    r.masked = summary.at("masked").get<bool>();
    r.units = summary.at("units").get<std::string>();
    r.lineage = summary.at("lineage");
    for (const auto& v : order) {
        auto s = eval::summarize(v, rows[v]);
        for (const auto& row : summary.at("variants")) {
            if (row.at("variant") == v) s.flagged_cases = row.at("flagged_cases").get<std::size_t>();
        }
        r.variants.push_back(std::move(s));
    }
    return r;
}

}  // namespace prior_refine::pipeline
