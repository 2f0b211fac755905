// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "zsar/errors.hpp"
#include "zsar/gradcheck_suite.hpp"
#include "zsar/harness.hpp"
#include "zsar/mab.hpp"
#include "zsar/msm.hpp"

using namespace zsar;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
    std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
}

bool all_finite(const Tensor& t) { return t.all_finite(); }

msm::OffsetHead random_head(RngStream& rng, double delta) {
    msm::OffsetHead h = msm::OffsetHead::zeros(8, delta);
    const double spread = 0.1 + 3.0 * rng.uniform();
    for (auto& p : h.parameters()) p.mutable_value() = rng.normal_tensor(p.shape(), spread);
    return h;
}

Tensor layer_norm_oracle(const Tensor& x) {
    Tensor out(x.shape());
    const std::size_t c = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mu = 0.0, var = 0.0;
        for (double v : x.row(r)) mu += v;
        mu /= static_cast<double>(c);
        for (double v : x.row(r)) var += (v - mu) * (v - mu);
        var /= static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) out.row(r)[j] = (x.row(r)[j] - mu) / std::sqrt(var + kLayerNormEps);
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// ---------------------------------------------------------------- 1

void gradcheck_suite() {
    const auto t0 = Clock::now();
    const auto reports = run_gradcheck_suite(5);
    const double secs = seconds_since(t0);
    double worst = 0.0;
    std::string worst_name;
    std::size_t failed = 0;
    for (const auto& r : reports) {
        if (!r.passed()) ++failed;
        if (r.max_rel_error >= worst) worst = r.max_rel_error, worst_name = r.op_name;
    }
    report(1, "gradcheck suite", failed == 0 && secs < 60.0,
           fmt::format("{} cases x 5 seeds, {} failed, worst rel err {:.3g} ({}), {:.2f}s", reports.size(), failed, worst,
                       worst_name, secs));
}

// ---------------------------------------------------------------- 2

void zero_offset_identity() {
    bool ok = true;
    std::string detail;
    for (std::size_t t : {4, 8, 16}) {
        RngStream rng(2, t);
        const FrameFeatures x(rng.normal_tensor({t, 2, 3, 4}));
        RngStream head_rng(2, 100 + t);
        for (const auto& head : {msm::OffsetHead::zeros(8, 1.5), msm::OffsetHead::init(8, 1.5, head_rng)}) {
            const msm::SaliencyProfile p = msm::saliency_profile(x, {});
            const auto [dg, dd] = msm::compute_offsets(p.m, head);
            const msm::StreamPair s = msm::sample_streams(x, dg, dd);
            const std::size_t frame = x.tensor().size() / t;
            bool same = true;
            for (std::size_t i = 0; i < t / 2; ++i) {
                for (std::size_t k = 0; k < frame; ++k) {
                    same = same && s.x_g[i * frame + k] == x.tensor()[(2 * i) * frame + k];
                    same = same && s.x_d[i * frame + k] == x.tensor()[(2 * i + 1) * frame + k];
                }
                same = same && s.i_g[i] == static_cast<double>(2 * i + 1) && s.i_d[i] == static_cast<double>(2 * i + 2);
            }
            ok = ok && same;
        }
        detail += fmt::format("T={}{} ", t, ok ? "" : "(mismatch)");
    }
    report(2, "zero-offset identity", ok, detail + "bit-exact against frames (1,3,..) and (2,4,..)");
}

// ---------------------------------------------------------------- 3

void clamp_safety() {
    RngStream rng(3, 0);
    std::size_t bad_index = 0, bad_convex = 0, trials = 10000;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::size_t t = 4 + 2 * rng.below(7);
        const double delta = 5.0 * (1.0 - rng.uniform());  // (0, 5]
        const Tensor raw = rng.normal_tensor({t, 1 + rng.below(2), 1 + rng.below(2), 3}, 0.1 + 2.0 * rng.uniform());
        const FrameFeatures x(raw);
        const msm::OffsetHead head = random_head(rng, delta);
        const msm::SaliencyProfile p = msm::saliency_profile(x, {rng.uniform(), rng.uniform()});
        const auto [dg, dd] = msm::compute_offsets(p.m, head);
        const msm::StreamPair s = msm::sample_streams(x, dg, dd);
        const std::size_t frame = raw.size() / t;
        for (int stream = 0; stream < 2; ++stream) {
            const Tensor& idx = stream == 0 ? s.i_g : s.i_d;
            const Tensor& xs = stream == 0 ? s.x_g : s.x_d;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                if (!(idx[i] >= 1.0 && idx[i] <= static_cast<double>(t))) {
                    ++bad_index;
                    continue;
                }
                const std::size_t lo = static_cast<std::size_t>(std::floor(idx[i])) - 1;
                const std::size_t hi = std::min(lo + 1, t - 1);
                for (std::size_t k = 0; k < frame; ++k) {
                    const double a = raw[lo * frame + k], b = raw[hi * frame + k], v = xs[i * frame + k];
                    if (v < std::min(a, b) || v > std::max(a, b)) ++bad_convex;
                }
            }
        }
    }
    report(3, "clamp safety", bad_index == 0 && bad_convex == 0,
           fmt::format("{} trials, delta in (0,5], {} indices outside [1,T], {} samples outside neighbour bounds", trials,
                       bad_index, bad_convex));
}

// ---------------------------------------------------------------- 4

void degenerate_clip() {
    ExperimentConfig cfg;
    cfg.k_seen = 3;
    cfg.videos_per_class = 2;
    RngStream rng(4, 0);
    const Tensor protos = rng.normal_tensor({cfg.k_seen, cfg.channels});
    std::vector<FrameFeatures> videos;
    std::vector<std::size_t> labels;
    bool stats_zero = true;
    for (std::size_t k = 0; k < cfg.k_seen; ++k) {
        for (std::size_t i = 0; i < cfg.videos_per_class; ++i) {
            videos.push_back(generate_video({k, {}, 0.0, 0.0}, protos, {cfg.frames, cfg.height, cfg.width}, RngStream(4, k)));
            labels.push_back(k);
            const msm::SaliencyProfile p = msm::saliency_profile(videos.back(), {});
            for (const Tensor* t : {&p.v, &p.c, &p.m}) {
                for (double v : t->data()) stats_zero = stats_zero && v == 0.0;
            }
        }
    }
    // Trained-looking heads so the offset path is not trivially zero.
    RngStream mrng(4, 1);
    Model model = Model::init(cfg.architecture(), cfg.channels, cfg.embed_dim, mrng);
    RngStream prng(4, 2);
    for (auto& p : model.all_parameters()) {
        Tensor& v = p.mutable_value();
        for (auto& e : v.data()) e += prng.normal(0.0, 0.2);
    }
    RngStream brng(4, 3);
    const PromptBank bank = make_prompt_bank(rng.normal_tensor({cfg.k_seen, cfg.embed_dim}), {}, brng);
    bool finite = true;
    for (auto& p : model.all_parameters()) p.zero_grad();
    const ObjectiveResult r = objective(model, bank, videos, labels, cfg.objective_options());
    ag::backward(r.total);
    finite = std::isfinite(r.total.value().item()) && all_finite(r.probs);
    for (auto& p : model.all_parameters()) finite = finite && (p.grad().empty() || all_finite(p.grad()));
    finite = finite && all_finite(bank.context.grad());

    // A clip equal in every entry may collapse to a zero embedding under
    // LayerNorm: acceptable outcomes are a finite loss or the degenerate-input
    // error, never NaN.
    bool flat_ok = false;
    std::string flat_outcome;
    try {
        const std::vector<FrameFeatures> flat{FrameFeatures(Tensor::filled({8, 2, 2, 16}, 0.7))};
        const std::vector<std::size_t> y{0};
        Model clean = Model::init(cfg.architecture(), cfg.channels, cfg.embed_dim, mrng);
        const double loss = objective(clean, bank, flat, y, cfg.objective_options()).total.value().item();
        flat_ok = std::isfinite(loss);
        flat_outcome = fmt::format("loss {:.6g}", loss);
    } catch (const DegenerateInputError&) {
        flat_ok = true;
        flat_outcome = "degenerate-input error";
    } catch (const NumericDomainError& e) {
        flat_outcome = e.what();
    }
    report(4, "degenerate constant clip", stats_zero && finite && flat_ok,
           fmt::format("v=c=m=0: {}, loss {:.6g} and all gradients finite: {}, all-equal clip: {}", stats_zero,
                       r.total.value().item(), finite, flat_outcome));
}

// ---------------------------------------------------------------- 5

void mab_identities() {
    RngStream rng(5, 0);
    double worst_zero_g = 0.0, worst_zero_w = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = 2 + rng.below(15);
        const Shape shape{2 + 2 * rng.below(4), 1 + rng.below(3), 1 + rng.below(3), c};
        const Tensor xd = rng.normal_tensor(shape, 2.0);
        const Tensor xg = rng.normal_tensor(shape, 2.0);
        mab::GateParams p = mab::GateParams::init(c);
        p.w_gate.mutable_value() = rng.normal_tensor({3 * c, c});
        worst_zero_g = std::max(worst_zero_g, max_abs_diff(mab::fuse(xd, Tensor::zeros(shape), p), layer_norm_oracle(xd)));
        const mab::GateParams zero = mab::GateParams::init(c);
        Tensor half(shape);
        for (std::size_t i = 0; i < half.size(); ++i) half[i] = xd[i] + 0.5 * xg[i];
        worst_zero_w = std::max(worst_zero_w, max_abs_diff(mab::fuse(xd, xg, zero), layer_norm_oracle(half)));
    }
    report(5, "MAB identities", worst_zero_g <= 1e-12 && worst_zero_w <= 1e-12,
           fmt::format("100 trials: X_G=0 max dev {:.3g}, W_g=0 max dev {:.3g} (tol 1e-12)", worst_zero_g, worst_zero_w));
}

// ---------------------------------------------------------------- 6

void baseline_reproduction() {
    const ExperimentConfig base;
    std::vector<ExperimentConfig> configs;
    for (auto [da, msm, split] : std::vector<std::tuple<bool, bool, Splitting>>{
             {false, false, Splitting::offsets},
             {true, false, Splitting::offsets},
             {false, true, Splitting::offsets},
             {true, true, Splitting::offsets},
             {true, true, Splitting::fixed},
             {true, true, Splitting::frozen_offsets}}) {
        ExperimentConfig c = base;
        c.use_da = da;
        c.use_msm = msm;
        c.use_mab = false;
        c.splitting = split;
        c.epochs = 0;
        configs.push_back(c);
    }
    std::size_t matched = 0, total = 0;
    for (const auto& c : configs) {
        for (auto seed : c.seeds) {
            const RunResult r = train(c, seed);
            ++total;
            matched += r.unseen_predictions == r.baseline_predictions;
        }
    }
    report(6, "baseline reproduction", matched == total,
           fmt::format("{}/{} (config, seed) evaluations equal the frozen-surrogate predictions (DA/MSM on/off, "
                       "offsets/fixed/frozen, MAB off)",
                       matched, total));
}

// ------------------------------------------------------------- 7 and 8

struct ConfigRuns {
    std::vector<double> unseen;
    double seconds = 0.0;
};

std::string config_key(ExperimentConfig c) {
    c.name.clear();
    std::string key;
    for (const auto& [k, v] : c.entries()) key += k + "=" + v + ";";
    return key;
}

class RunCache {
  public:
    explicit RunCache(std::size_t workers) : workers_(workers) {}

    const ConfigRuns& get(const ExperimentConfig& cfg) {
        const std::string key = config_key(cfg);
        auto it = runs_.find(key);
        if (it != runs_.end()) return it->second;
        const auto t0 = Clock::now();
        const std::vector<ExperimentConfig> one{cfg};
        const AblationResult res = run_ablation(one, workers_);
        ConfigRuns out;
        out.seconds = seconds_since(t0);
        for (const auto& cell : res.cells) out.unseen.push_back(cell.result.final().unseen_accuracy);
        std::printf("  [%s] unseen mean %.4f, %.1fs\n", cfg.name.c_str(), mean_std(out.unseen).mean, out.seconds);
        std::fflush(stdout);
        return runs_.emplace(key, std::move(out)).first->second;
    }

  private:
    std::size_t workers_;
    std::map<std::string, ConfigRuns> runs_;
};

const ExperimentConfig& by_name(const std::vector<ExperimentConfig>& configs, const std::string& name) {
    for (const auto& c : configs)
        if (c.name == name) return c;
    throw std::logic_error("missing preset config " + name);
}

void table4_trend(RunCache& cache) {
    const auto configs = preset_configs(ExperimentConfig{}, "table4");
    double slowest = 0.0;
    for (const auto& c : configs) slowest = std::max(slowest, cache.get(c).seconds);
    const ConfigRuns& ce = cache.get(by_name(configs, "ce"));
    const ConfigRuns& ce_neg = cache.get(by_name(configs, "ce+neg"));
    const ConfigRuns& full = cache.get(by_name(configs, "full"));
    std::size_t improved = 0;
    for (std::size_t i = 0; i < ce.unseen.size(); ++i) improved += ce_neg.unseen[i] > ce.unseen[i];
    const double m_full = mean_std(full.unseen).mean, m_ce = mean_std(ce.unseen).mean;
    report(7, "loss ablation trend", m_full > m_ce && improved >= 8 && slowest < 120.0,
           fmt::format("full {:.4f} vs ce {:.4f}; ce+neg beats ce in {}/{} seeds (need 8); slowest config {:.1f}s", m_full,
                       m_ce, improved, ce.unseen.size(), slowest));
}

void table3_trend(RunCache& cache, std::size_t workers) {
    const auto configs = preset_configs(ExperimentConfig{}, "table3");
    const double m_full = mean_std(cache.get(by_name(configs, "full")).unseen).mean;
    std::string detail = fmt::format("full {:.4f}", m_full);
    bool ok = true;
    for (const char* single : {"da", "msm", "mab"}) {
        const double m = mean_std(cache.get(by_name(configs, single)).unseen).mean;
        ok = ok && m_full >= m;
        detail += fmt::format(", {} {:.4f}", single, m);
    }
    const std::vector<ExperimentConfig> pair{by_name(configs, "full-fixed"), by_name(configs, "full-frozen-offsets")};
    const AblationResult eq = run_ablation(pair, workers);
    const bool identical = eq.all_equivalent() && eq.equivalence.size() == 1;
    report(8, "module ablation trend", ok && identical,
           detail + fmt::format("; fixed vs frozen-offsets bit-identical over {} seeds: {}", pair[0].seeds.size(), identical));
}

// ---------------------------------------------------------------- 9

void saliency_routing() {
    ExperimentConfig cfg;
    const double sigma = cfg.noise_sigma, amplitude = 5.0 * cfg.noise_sigma;
    RngStream rng(9, 0);
    const Tensor protos = rng.normal_tensor({1, cfg.channels});
    std::size_t ok = 0;
    const std::size_t trials = 1000;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        RngStream pick = rng.split(trial);
        std::vector<std::size_t> frames(cfg.frames);
        for (std::size_t t = 0; t < frames.size(); ++t) frames[t] = t + 1;
        for (std::size_t j = 0; j < cfg.motion_frames; ++j) std::swap(frames[j], frames[j + pick.below(frames.size() - j)]);
        frames.resize(cfg.motion_frames);
        const FrameFeatures v =
            generate_video({0, frames, amplitude, sigma}, protos, {cfg.frames, cfg.height, cfg.width}, pick.split(1));
        const msm::SaliencyProfile p = msm::saliency_profile(v, {cfg.alpha, cfg.beta});
        double lowest_motion = 1e300, highest_other = -1e300;
        for (std::size_t t = 1; t <= cfg.frames; ++t) {
            const bool motion = std::find(frames.begin(), frames.end(), t) != frames.end();
            if (motion) lowest_motion = std::min(lowest_motion, p.m[t - 1]);
            else highest_other = std::max(highest_other, p.m[t - 1]);
        }
        ok += lowest_motion > highest_other;
    }
    const double rate = static_cast<double>(ok) / static_cast<double>(trials);
    report(9, "saliency routing", rate >= 0.95,
           fmt::format("{}/{} trials ({:.1f}%) rank every motion frame above every static frame (amplitude {} = 5 sigma, "
                       "{} motion frames of {})",
                       ok, trials, 100.0 * rate, amplitude, cfg.motion_frames, cfg.frames));
}

// ---------------------------------------------------------------- 10

void determinism() {
    ExperimentConfig base;
    base.epochs = 20;
    const auto configs = preset_configs(base, "table4");
    std::ostringstream one, many;
    write_ablation_csv(one, run_ablation(configs, 1));
    write_ablation_csv(many, run_ablation(configs, 4));
    report(10, "worker-count determinism", one.str() == many.str() && !one.str().empty(),
           fmt::format("table4 preset, {} seeds, {} epochs: CSV with 1 worker and 4 workers byte-identical: {} ({} bytes)",
                       base.seeds.size(), base.epochs, one.str() == many.str(), one.str().size()));
}

}  // namespace

int main() {
    const std::size_t workers = worker_count_from_env();
    const auto t0 = Clock::now();
    gradcheck_suite();
    zero_offset_identity();
    clamp_safety();
    degenerate_clip();
    mab_identities();
    baseline_reproduction();
    RunCache cache(workers);
    table4_trend(cache);
    table3_trend(cache, workers);
    saliency_routing();
    determinism();
    std::printf("%d of 10 criteria failed (%.0fs, %zu workers)\n", failures, seconds_since(t0), workers);
    return failures == 0 ? 0 : 1;
}
