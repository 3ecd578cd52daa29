#include "prior_refine/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "prior_refine/container.hpp"
#include "prior_refine/error.hpp"
#include "prior_refine/seeding.hpp"

namespace prior_refine::eval {

namespace {

double finite_mean(const std::vector<double>& v) {
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v) {
        if (std::isfinite(x)) s += x, ++n;
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> finite_only(const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) if (std::isfinite(x)) out.push_back(x);
    return out;
}

std::vector<double> metric_values(const VariantSummary& s, const std::string& metric) {
    std::vector<double> out;
    for (const auto& c : s.cases) {
        if (metric == "rel_l2") out.push_back(c.rel_l2);
        else if (metric == "rmae") out.push_back(c.rmae);
        else if (metric == "mae") out.push_back(c.mae);
        else fail(ErrorKind::invalid_argument, "unknown metric '" + metric + "'");
    }
    return out;
}

nlohmann::json pct_json(const Percentiles& p) {
    return {{"best", p.best}, {"p25", p.p25}, {"p50", p.p50}, {"p75", p.p75}, {"worst", p.worst}};
}

nlohmann::json number(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

std::string fmt(double x, int precision) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << x;
    return s.str();
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

// three-stop ramp: dark blue, white-ish yellow, dark red
std::string ramp(double u) {
    u = std::clamp(u, 0.0, 1.0);
    const double stops[3][3] = {{49, 54, 149}, {255, 255, 191}, {165, 0, 38}};
    const int k = u < 0.5 ? 0 : 1;
    const double f = u < 0.5 ? u * 2 : (u - 0.5) * 2;
    std::ostringstream s;
    s << "rgb(";
    for (int c = 0; c < 3; ++c) s << (c ? "," : "") << static_cast<int>(stops[k][c] + f * (stops[k + 1][c] - stops[k][c]));
    s << ")";
    return s.str();
}

}  // namespace

const VariantSummary* AblationReport::find(const std::string& variant) const {
    for (const auto& v : variants) if (v.variant == variant) return &v;
    return nullptr;
}

std::vector<CaseErrors> score_cases(const std::vector<const FieldVideo*>& truth, const std::vector<FieldVideo>& pred,
                                    const std::vector<int>& case_ids, bool exclude_zero_frames) {
    require(truth.size() == pred.size() && truth.size() == case_ids.size(), ErrorKind::invalid_argument,
            "truth, predictions and case ids must align");
    std::vector<CaseErrors> out;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto l2 = rel_l2(*truth[i], pred[i], exclude_zero_frames);
        const auto l1 = rmae(*truth[i], pred[i], exclude_zero_frames);
        out.push_back({case_ids[i], l2.value, l1.value, mae(*truth[i], pred[i]), l2.zero_frames});
    }
    return out;
}

VariantSummary summarize(const std::string& variant, std::vector<CaseErrors> cases) {
    require(!cases.empty(), ErrorKind::invalid_argument, "no cases to summarize for " + variant);
    VariantSummary s;
    s.variant = variant;
    s.cases = std::move(cases);
    std::vector<double> l2, l1, ma;
    for (const auto& c : s.cases) {
        l2.push_back(c.rel_l2);
        l1.push_back(c.rmae);
        ma.push_back(c.mae);
        if (c.zero_frames > 0) ++s.flagged_cases;
    }
    s.mean_rel_l2 = finite_mean(l2);
    s.mean_rmae = finite_mean(l1);
    s.mean_mae = finite_mean(ma);
    const auto f2 = finite_only(l2), f1 = finite_only(l1);
    if (!f2.empty()) s.rel_l2_pct = percentile_report(f2);
    if (!f1.empty()) s.rmae_pct = percentile_report(f1);
    s.mae_pct = percentile_report(ma);
    return s;
}

AblationResult run_ablation(const datagen::Dataset& ds, const std::vector<int>& test_cases, const sdon::PriorSet* priors,
                            const std::map<std::string, const diffusion::DiffusionModel*>& models,
                            const AblationOptions& options) {
    require(!test_cases.empty(), ErrorKind::precondition, "test split is empty");
    require(options.samples_per_case >= 1, ErrorKind::configuration, "samples_per_case must be at least 1");
    std::vector<const FieldVideo*> truth;
    for (int id : test_cases) {
        require(id >= 0 && id < static_cast<int>(ds.cases.size()), ErrorKind::invalid_argument, "test case out of range");
        truth.push_back(&ds.cases[static_cast<std::size_t>(id)].field);
    }

    AblationResult result;
    result.report.masked = ds.manifest.has_masks;
    result.report.units = ds.manifest.units;
    result.report.lineage["dataset"] = ds.manifest.config_hash;
    for (const auto& variant : options.variants) {
        std::vector<FieldVideo> pred;
        if (variant == "sdon") {
            require(priors != nullptr, ErrorKind::configuration, "the sdon row needs exported priors");
            for (int id : test_cases) pred.push_back(priors->priors.at(static_cast<std::size_t>(id)));
            result.report.lineage["sdon"] = priors->operator_hash;
        } else {
            const auto it = models.find(variant);
            require(it != models.end() && it->second != nullptr, ErrorKind::configuration,
                    "no diffusion checkpoint for variant " + variant);
            const auto& model = *it->second;
            require(model.variant() == variant, ErrorKind::configuration,
                    "checkpoint for " + variant + " is a " + model.variant() + " model");
            require(!model.config.use_prior || priors != nullptr, ErrorKind::configuration,
                    variant + " is prior-conditioned but no priors were given");
            pred = diffusion::generate(model, ds, priors, test_cases, options.seed, options.sampling);
            for (int k = 1; k < options.samples_per_case; ++k) {
                const auto more = diffusion::generate(model, ds, priors, test_cases, derive_seed(options.seed, 1000 + k),
                                                      options.sampling);
                for (std::size_t i = 0; i < pred.size(); ++i) {
                    for (std::size_t j = 0; j < pred[i].data.size(); ++j) pred[i].data[j] += more[i].data[j];
                }
            }
            if (options.samples_per_case > 1) {
                for (auto& p : pred) for (float& x : p.data) x /= static_cast<float>(options.samples_per_case);
            }
            result.report.lineage[variant] = model.config_hash;
        }
        result.report.variants.push_back(
            summarize(variant, score_cases(truth, pred, test_cases, options.exclude_zero_frames)));
        result.predictions[variant] = std::move(pred);
    }
    return result;
}

nlohmann::json to_json(const AblationReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& v : r.variants) {
        rows.push_back({{"variant", v.variant},
                        {"mean_rel_l2", number(v.mean_rel_l2)},
                        {"mean_rmae", number(v.mean_rmae)},
                        {"mean_mae", number(v.mean_mae)},
                        {"rel_l2_percentiles", pct_json(v.rel_l2_pct)},
                        {"rmae_percentiles", pct_json(v.rmae_pct)},
                        {"mae_percentiles", pct_json(v.mae_pct)},
                        {"n_cases", v.cases.size()},
                        {"flagged_cases", v.flagged_cases}});
    }
    return {{"variants", rows}, {"masked", r.masked}, {"units", r.units}, {"lineage", r.lineage}};
}

std::string per_case_csv(const AblationReport& r) {
    std::ostringstream s;
    s << "case_id,variant,rel_l2,rmae,mae\n" << std::setprecision(9);
    for (const auto& v : r.variants) {
        for (const auto& c : v.cases) s << c.case_id << ',' << v.variant << ',' << c.rel_l2 << ',' << c.rmae << ',' << c.mae << '\n';
    }
    return s.str();
}

std::string render_table(const AblationReport& r) {
    std::ostringstream s;
    s << std::left << std::setw(16) << "" ;
    for (const auto& v : r.variants) s << std::setw(12) << v.variant;
    s << '\n';
    auto row = [&](const std::string& label, auto get) {
        s << std::setw(16) << label;
        for (const auto& v : r.variants) s << std::setw(12) << get(v);
        s << '\n';
    };
    row("Mean Rel. L2", [](const VariantSummary& v) { return fmt(100 * v.mean_rel_l2, 3) + "%"; });
    row("Mean RMAE", [](const VariantSummary& v) { return fmt(100 * v.mean_rmae, 3) + "%"; });
    if (r.masked) row("Mean MAE", [&](const VariantSummary& v) { return fmt(v.mean_mae, 3) + " " + r.units; });
    s << "\nRel. L2 by percentile\n";
    row("best", [](const VariantSummary& v) { return fmt(100 * v.rel_l2_pct.best, 3) + "%"; });
    row("25th", [](const VariantSummary& v) { return fmt(100 * v.rel_l2_pct.p25, 3) + "%"; });
    row("50th", [](const VariantSummary& v) { return fmt(100 * v.rel_l2_pct.p50, 3) + "%"; });
    row("75th", [](const VariantSummary& v) { return fmt(100 * v.rel_l2_pct.p75, 3) + "%"; });
    row("worst", [](const VariantSummary& v) { return fmt(100 * v.rel_l2_pct.worst, 3) + "%"; });
    std::size_t flagged = 0;
    for (const auto& v : r.variants) flagged = std::max(flagged, v.flagged_cases);
    if (flagged) s << "\n" << flagged << " case(s) contain zero-norm ground-truth frames\n";
    return s.str();
}

bool use_log_axis(const std::vector<double>& values) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double x : values) {
        if (std::isfinite(x) && x > 0) lo = std::min(lo, x), hi = std::max(hi, x);
    }
    return hi > 0 && hi / lo > 50.0;
}

std::string histogram_svg(const AblationReport& r, const std::string& metric) {
    std::vector<double> all;
    for (const auto& v : r.variants) for (double x : metric_values(v, metric)) if (std::isfinite(x)) all.push_back(x);
    const bool log_axis = use_log_axis(all);
    auto axis = [&](double x) { return log_axis ? std::log10(std::max(x, 1e-300)) : x; };
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double x : all) {
        if (log_axis && x <= 0) continue;
        lo = std::min(lo, axis(x));
        hi = std::max(hi, axis(x));
    }
    if (!(hi > lo)) hi = lo + 1.0;
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;

    constexpr int kBins = 20;
    constexpr double W = 640, H = 360, L = 60, R = 20, T = 30, B = 50;
    std::vector<std::vector<int>> counts;
    int peak = 1;
    for (const auto& v : r.variants) {
        std::vector<int> c(kBins, 0);
        for (double x : metric_values(v, metric)) {
            if (!std::isfinite(x) || (log_axis && x <= 0)) continue;
            const int b = std::clamp(static_cast<int>((axis(x) - lo) / (hi - lo) * kBins), 0, kBins - 1);
            peak = std::max(peak, ++c[static_cast<std::size_t>(b)]);
        }
        counts.push_back(std::move(c));
    }
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    const double pw = W - L - R, ph = H - T - B;
    for (int k = 0; k <= 4; ++k) {
        const double a = lo + (hi - lo) * k / 4.0;
        const double x = L + pw * k / 4.0;
        const double label = log_axis ? std::pow(10.0, a) : a;
        s << "<text x=\"" << x << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << std::setprecision(3) << label << "</text>\n";
    }
    s << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << metric
      << (log_axis ? " (log scale)" : "") << "</text>\n";
    s << "<text x=\"15\" y=\"" << T + ph / 2 << "\" transform=\"rotate(-90 15 " << T + ph / 2 << ")\" text-anchor=\"middle\">cases</text>\n";
    for (std::size_t v = 0; v < counts.size(); ++v) {
        s << "<polyline fill=\"none\" stroke=\"" << kColors[v % 4] << "\" stroke-width=\"1.5\" points=\"";
        for (int b = 0; b < kBins; ++b) {
            const double y = H - B - ph * counts[v][static_cast<std::size_t>(b)] / peak;
            s << L + pw * b / kBins << ',' << y << ' ' << L + pw * (b + 1) / kBins << ',' << y << ' ';
        }
        s << "\"/>\n";
        s << "<text x=\"" << W - R - 90 << "\" y=\"" << T + 14 * (v + 1) << "\" fill=\"" << kColors[v % 4] << "\">"
          << r.variants[v].variant << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string field_panel_svg(const std::vector<std::pair<std::string, FieldVideo>>& columns, std::size_t frame) {
    require(!columns.empty(), ErrorKind::invalid_argument, "panel needs at least one column");
    const auto h = columns.front().second.height, w = columns.front().second.width;
    constexpr double cell = 6, gap = 16, top = 24;
    const double pw = w * cell;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << columns.size() * (pw + gap) + gap << "\" height=\""
      << h * cell + top + gap << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t c = 0; c < columns.size(); ++c) {
        const auto& [title, video] = columns[c];
        require(video.height == h && video.width == w && frame < video.frames, ErrorKind::invalid_argument,
                "panel columns must share a grid");
        const auto f = video.frame(frame);
        float lo = *std::min_element(f.begin(), f.end()), hi = *std::max_element(f.begin(), f.end());
        if (!(hi > lo)) hi = lo + 1.0f;
        const double x0 = gap + c * (pw + gap);
        s << "<text x=\"" << x0 << "\" y=\"16\">" << title << " [" << std::setprecision(3) << lo << ", " << hi << "]</text>\n";
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                // row 0 is the bottom of the domain
                s << "<rect x=\"" << x0 + j * cell << "\" y=\"" << top + (h - 1 - i) * cell << "\" width=\"" << cell
                  << "\" height=\"" << cell << "\" fill=\"" << ramp((f[i * w + j] - lo) / (hi - lo)) << "\"/>";
            }
            s << '\n';
        }
    }
    s << "</svg>\n";
    return s.str();
}

void write_outputs(const std::filesystem::path& dir, const AblationResult& result, const datagen::Dataset& ds,
                   const std::vector<int>& test_cases, const sdon::PriorSet* priors) {
    std::filesystem::create_directories(dir);
    const auto& rep = result.report;
    container::write_atomic(dir / "report.json", to_json(rep).dump(2) + "\n");
    container::write_atomic(dir / "per_case.csv", per_case_csv(rep));
    container::write_atomic(dir / "report.txt", render_table(rep));
    for (const std::string metric : {"rel_l2", "rmae", "mae"}) {
        container::write_atomic(dir / ("hist_" + metric + ".svg"), histogram_svg(rep, metric));
    }

    // best / median / worst cases by operator error, when the operator row exists
    const auto* base = rep.find("sdon");
    if (base == nullptr || priors == nullptr) return;
    std::vector<std::size_t> order(base->cases.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        const double x = base->cases[a].rel_l2, y = base->cases[b].rel_l2;
        return (std::isfinite(x) ? x : 1e300) < (std::isfinite(y) ? y : 1e300);
    });
    const std::pair<const char*, std::size_t> picks[] = {
        {"best", order.front()}, {"median", order[order.size() / 2]}, {"worst", order.back()}};
    for (const auto& [label, idx] : picks) {
        const int id = test_cases[idx];
        const auto& truth = ds.cases[static_cast<std::size_t>(id)].field;
        std::vector<std::pair<std::string, FieldVideo>> cols{{"truth", truth}};
        for (const auto& v : rep.variants) {
            const auto it = result.predictions.find(v.variant);
            if (it == result.predictions.end()) continue;
            cols.emplace_back(v.variant, it->second[idx]);
        }
        for (const auto& v : rep.variants) {
            const auto it = result.predictions.find(v.variant);
            if (it == result.predictions.end()) continue;
            FieldVideo err = truth;
            for (std::size_t k = 0; k < err.data.size(); ++k) err.data[k] = it->second[idx].data[k] - truth.data[k];
            cols.emplace_back(v.variant + " error", std::move(err));
        }
        container::write_atomic(dir / (std::string("panel_") + label + ".svg"), field_panel_svg(cols, truth.frames - 1));
    }
}

}  // namespace prior_refine::eval
