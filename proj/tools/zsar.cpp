// zsar: experiment runner for the motion-separation zero-shot pipeline.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "zsar/config.hpp"
#include "zsar/errors.hpp"
#include "zsar/gradcheck_suite.hpp"
#include "zsar/harness.hpp"
#include "zsar/msm.hpp"

namespace fs = std::filesystem;
using namespace zsar;

namespace {

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> settings;
    std::string seeds;
    std::string out_dir = ".";
    std::string prefix;
    bool no_da = false, no_msm = false, no_mab = false;
    bool no_cl = false, no_clip = false, no_proj = false, no_neg = false;
    std::string splitting;
    double lambda_n = -1.0, temperature = -1.0, lr = -1.0;
    long epochs = -1;
};

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("--config", o.config_path, "key=value config file")->check(CLI::ExistingFile);
    app->add_option("--set", o.settings, "extra key=value override (repeatable)");
    app->add_option("--seeds", o.seeds, "seed list, e.g. 1-10 or 1,4,9");
    app->add_option("--out-dir", o.out_dir, "directory for CSV/JSON output");
    app->add_option("--prefix", o.prefix, "output file name prefix (default: subcommand)");
    app->add_flag("--no-da", o.no_da, "disable the dual adapter");
    app->add_flag("--no-msm", o.no_msm, "disable motion separation");
    app->add_flag("--no-mab", o.no_mab, "disable the aggregation block");
    app->add_option("--splitting", o.splitting, "offsets | fixed | frozen-offsets");
    app->add_flag("--no-cl", o.no_cl, "drop the contrastive loss");
    app->add_flag("--no-clip-loss", o.no_clip, "drop the frozen-reference consistency loss");
    app->add_flag("--no-proj", o.no_proj, "drop the projection loss");
    app->add_flag("--no-neg", o.no_neg, "drop the negative prompt loss");
    app->add_option("--lambda-n", o.lambda_n, "negative prompt loss weight");
    app->add_option("--temperature", o.temperature, "contrastive temperature");
    app->add_option("--lr", o.lr, "learning rate");
    app->add_option("--epochs", o.epochs, "training epochs");
}

ExperimentConfig resolve(const CommonOptions& o) {
    ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = load_config(o.config_path);
    for (const auto& s : o.settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ParameterError(fmt::format("--set expects key=value, got '{}'", s));
        cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
    if (o.no_da) cfg.use_da = false;
    if (o.no_msm) cfg.use_msm = false;
    if (o.no_mab) cfg.use_mab = false;
    if (!o.splitting.empty()) cfg.splitting = parse_splitting(o.splitting);
    if (o.no_cl) cfg.loss.cl = false;
    if (o.no_clip) cfg.loss.clip = false;
    if (o.no_proj) cfg.loss.proj = false;
    if (o.no_neg) cfg.loss.neg = false;
    if (o.lambda_n >= 0.0) cfg.lambda_n = o.lambda_n;
    if (o.temperature >= 0.0) cfg.temperature = o.temperature;
    if (o.lr >= 0.0) cfg.lr = o.lr;
    if (o.epochs >= 0) cfg.epochs = static_cast<std::size_t>(o.epochs);
    cfg.validate();
    return cfg;
}

fs::path output_path(const CommonOptions& o, const std::string& command, const std::string& ext) {
    fs::create_directories(o.out_dir);
    return fs::path(o.out_dir) / ((o.prefix.empty() ? command : o.prefix) + ext);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
}

std::vector<RunResult> run_seeds(const ExperimentConfig& cfg) {
    const std::vector<ExperimentConfig> one{cfg};
    AblationResult r = run_ablation(one, worker_count_from_env());
    std::vector<RunResult> runs;
    for (auto& cell : r.cells) runs.push_back(std::move(cell.result));
    return runs;
}

int cmd_train(const CommonOptions& o) {
    const ExperimentConfig cfg = resolve(o);
    const auto start = std::chrono::steady_clock::now();
    const auto runs = run_seeds(cfg);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const auto csv_path = output_path(o, "train", ".csv");
    std::ofstream csv(csv_path);
    write_epoch_csv_header(csv);
    for (const auto& r : runs) {
        for (const auto& rec : r.records) write_epoch_csv_row(csv, cfg.name, rec);
    }
    nlohmann::json j = run_summary_json(cfg, runs);
    j["seconds"] = seconds;
    const auto json_path = output_path(o, "train", ".json");
    write_json(json_path, j);

    const auto& acc = j["unseen_accuracy"];
    fmt::print("{}: {} seeds, unseen accuracy {:.4f} +- {:.4f}, loss decreased in {}/{} seeds ({:.1f}s)\n", cfg.name,
               runs.size(), acc["mean"].get<double>(), acc["std"].get<double>(),
               j["loss_decreased_seeds"].get<std::size_t>(), runs.size(), seconds);
    fmt::print("wrote {} and {}\n", csv_path.string(), json_path.string());
    return 0;
}

int cmd_eval(const CommonOptions& o, bool expect_baseline) {
    const ExperimentConfig cfg = resolve(o);
    const auto runs = run_seeds(cfg);

    const auto csv_path = output_path(o, "eval", ".csv");
    std::ofstream csv(csv_path);
    csv << "seed,video,prediction,baseline_prediction\n";
    nlohmann::json per_seed = nlohmann::json::array();
    bool all_match = true;
    for (const auto& r : runs) {
        for (std::size_t i = 0; i < r.unseen_predictions.size(); ++i) {
            csv << fmt::format("{},{},{},{}\n", r.seed, i, r.unseen_predictions[i], r.baseline_predictions[i]);
        }
        const bool match = r.unseen_predictions == r.baseline_predictions;
        all_match = all_match && match;
        per_seed.push_back({{"seed", r.seed},
                            {"unseen_accuracy", r.final().unseen_accuracy},
                            {"baseline_accuracy", r.baseline_accuracy},
                            {"matches_baseline", match},
                            {"unseen_confusion", r.final().confusion}});
    }
    nlohmann::json j = run_summary_json(cfg, runs);
    j["evaluation"] = per_seed;
    j["matches_baseline"] = all_match;
    const auto json_path = output_path(o, "eval", ".json");
    write_json(json_path, j);

    for (const auto& s : per_seed) {
        fmt::print("seed {}: unseen accuracy {:.4f} (frozen baseline {:.4f}){}\n", s["seed"].get<std::uint64_t>(),
                   s["unseen_accuracy"].get<double>(), s["baseline_accuracy"].get<double>(),
                   s["matches_baseline"].get<bool>() ? ", predictions identical to baseline" : "");
    }
    fmt::print("wrote {} and {}\n", csv_path.string(), json_path.string());
    if (expect_baseline && !all_match) {
        fmt::print(stderr, "assertion failed: predictions differ from the frozen baseline\n");
        return 1;
    }
    return 0;
}

AblationAxis parse_axis(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParameterError(fmt::format("--axis expects key=v1,v2, got '{}'", text));
    AblationAxis axis{text.substr(0, eq), {}};
    std::stringstream ss(text.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ',')) axis.values.push_back(v);
    return axis;
}

int cmd_ablate(const CommonOptions& o, const std::string& preset, const std::vector<std::string>& axis_texts) {
    const ExperimentConfig base = resolve(o);
    std::vector<ExperimentConfig> configs;
    if (!preset.empty()) {
        configs = preset_configs(base, preset);
    } else {
        std::vector<AblationAxis> axes;
        for (const auto& a : axis_texts) axes.push_back(parse_axis(a));
        configs = expand_axes(base, axes);
    }
    const auto start = std::chrono::steady_clock::now();
    const AblationResult result = run_ablation(configs, worker_count_from_env());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const auto csv_path = output_path(o, "ablate", ".csv");
    {
        std::ofstream csv(csv_path);
        write_ablation_csv(csv, result);
    }
    nlohmann::json j = ablation_summary_json(result);
    j["seconds"] = seconds;
    const auto json_path = output_path(o, "ablate", ".json");
    write_json(json_path, j);

    for (const auto& c : j["configs"]) {
        fmt::print("{:<24} unseen {:.4f} +- {:.4f}  seen {:.4f}\n", c["name"].get<std::string>(),
                   c["unseen_accuracy"]["mean"].get<double>(), c["unseen_accuracy"]["std"].get<double>(),
                   c["seen_accuracy"]["mean"].get<double>());
    }
    for (const auto& e : result.equivalence) {
        fmt::print("{} vs {}: {}\n", e.fixed_config, e.frozen_config, e.identical ? "bit-identical" : "DIFFERENT");
    }
    fmt::print("wrote {} and {} ({:.1f}s)\n", csv_path.string(), json_path.string(), seconds);
    if (!result.all_equivalent()) {
        fmt::print(stderr, "assertion failed: fixed splitting differs from frozen zero offsets\n");
        return 1;
    }
    return 0;
}

int cmd_gradcheck(std::size_t seeds, const std::string& filter) {
    const auto start = std::chrono::steady_clock::now();
    const auto reports = run_gradcheck_suite(seeds, filter);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool ok = !reports.empty();
    for (const auto& r : reports) {
        fmt::print("{}\n", gradcheck::format_report(r));
        ok = ok && r.passed();
    }
    fmt::print("{} checks, {} ({:.2f}s)\n", reports.size(), ok ? "all passed" : "FAILURES", seconds);
    return ok ? 0 : 1;
}

int cmd_inspect(const CommonOptions& o, std::uint64_t seed, std::size_t video, const std::string& csv_out) {
    const ExperimentConfig cfg = resolve(o);
    const Dataset data = build_dataset(cfg, seed);
    if (video >= data.train_videos.size()) {
        throw IndexError(fmt::format("video {} outside [0, {})", video, data.train_videos.size()));
    }
    RngStream model_rng(seed, streams::kModel);
    const Model model = Model::init(cfg.architecture(), cfg.channels, cfg.embed_dim, model_rng);
    const FrameFeatures& x = data.train_videos[video];
    const msm::SaliencyProfile prof = msm::saliency_profile(x, cfg.architecture().saliency);
    const auto [dg, dd] = msm::compute_offsets(prof.m, model.heads);
    const msm::StreamPair streams = msm::sample_streams(x, dg, dd);

    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!csv_out.empty()) {
        file.open(csv_out);
        out = &file;
    }
    *out << "t,v,c,v_norm,c_norm,m,delta_g,delta_d,stream,index\n";
    for (std::size_t t = 0; t < x.frames(); ++t) {
        const bool global = t % 2 == 0;
        const double index = global ? streams.i_g[t / 2] : streams.i_d[t / 2];
        *out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", t + 1, format_real(prof.v[t]), format_real(prof.c[t]),
                            format_real(prof.v_norm[t]), format_real(prof.c_norm[t]), format_real(prof.m[t]),
                            format_real(dg[t]), format_real(dd[t]), global ? "global" : "dynamic",
                            format_real(index));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zsar: zero-shot action recognition with motion separation (synthetic harness)"};
    app.require_subcommand(1);

    CommonOptions train_opts, eval_opts, ablate_opts, inspect_opts;
    auto* train = app.add_subcommand("train", "train every seed and write per-epoch metrics");
    add_common(train, train_opts);

    auto* eval = app.add_subcommand("eval", "zero-shot evaluation against the frozen baseline");
    add_common(eval, eval_opts);
    bool expect_baseline = false;
    eval->add_flag("--expect-baseline", expect_baseline, "fail unless predictions equal the frozen baseline");

    auto* ablate = app.add_subcommand("ablate", "run an ablation matrix");
    add_common(ablate, ablate_opts);
    std::string preset;
    std::vector<std::string> axes;
    ablate->add_option("--preset", preset, "table3 | table4");
    ablate->add_option("--axis", axes, "key=v1,v2 (repeatable; cross product)");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference verification of every gradient");
    std::size_t grad_seeds = 5;
    std::string grad_filter;
    grad->add_option("--seeds", grad_seeds, "seeds per check")->check(CLI::PositiveNumber);
    grad->add_option("--filter", grad_filter, "only checks whose name contains this text");

    auto* inspect = app.add_subcommand("inspect-msm", "saliency, offsets and sampling indices for one video");
    add_common(inspect, inspect_opts);
    std::uint64_t inspect_seed = 1;
    std::size_t inspect_video = 0;
    std::string inspect_csv;
    inspect->add_option("--seed", inspect_seed, "dataset seed");
    inspect->add_option("--video", inspect_video, "training video index");
    inspect->add_option("--csv", inspect_csv, "write to this file instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(train_opts);
        if (*eval) return cmd_eval(eval_opts, expect_baseline);
        if (*ablate) return cmd_ablate(ablate_opts, preset, axes);
        if (*grad) return cmd_gradcheck(grad_seeds, grad_filter);
        if (*inspect) return cmd_inspect(inspect_opts, inspect_seed, inspect_video, inspect_csv);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
