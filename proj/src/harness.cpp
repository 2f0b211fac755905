#include "zsar/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "zsar/errors.hpp"
#include "zsar/numerics.hpp"

namespace zsar {

namespace {

struct ClassDraw {
    std::string name;
    std::uint64_t description_seed = 0;
};

struct World {
    Tensor map;         // D x C, visual = s A^T + b is computed as row-vector s * map + b
    Tensor background;  // C
};

World make_world(const ExperimentConfig& cfg, std::uint64_t seed) {
    RngStream rng(seed, streams::kWorld);
    const std::size_t d = cfg.embed_dim, c = cfg.channels;
    World w;
    w.map = rng.normal_tensor({d, c}, cfg.domain_gap / std::sqrt(static_cast<double>(d)));
    for (std::size_t i = 0; i < std::min(d, c); ++i) w.map.at(i, i) += 1.0;
    w.background = rng.normal_tensor({c});
    const double n = l2_norm(w.background.data());
    for (auto& x : w.background.data()) x = n > 0.0 ? x * cfg.background / n : 0.0;
    return w;
}

std::vector<ClassDraw> class_draws(const ExperimentConfig& cfg) {
    std::vector<ClassDraw> out;
    const std::size_t total = cfg.k_seen + cfg.k_unseen;
    if (!cfg.classes_file.empty()) {
        const auto entries = load_class_list(cfg.classes_file);
        if (entries.size() < total) {
            throw ParameterError(fmt::format("class list {} has {} classes, config needs {}", cfg.classes_file,
                                             entries.size(), total));
        }
        for (std::size_t i = 0; i < total; ++i) out.push_back({entries[i].name, entries[i].description_seed});
        return out;
    }
    for (std::size_t i = 0; i < cfg.k_seen; ++i) out.push_back({fmt::format("seen_{}", i), i});
    for (std::size_t i = 0; i < cfg.k_unseen; ++i) out.push_back({fmt::format("unseen_{}", i), i});
    return out;
}

// Appends one class to `set`, re-drawing until its visual prototype is far
// enough from every prototype already in `taken`.
void draw_class(const ExperimentConfig& cfg, const World& world, const RngStream& class_rng, const ClassDraw& draw,
                std::vector<std::vector<double>>& taken, std::vector<double>& semantic, std::vector<double>& visual) {
    const std::size_t d = cfg.embed_dim, c = cfg.channels;
    for (std::size_t attempt = 0; attempt < kPrototypeRetries; ++attempt) {
        RngStream rng = class_rng.split(draw.description_seed).split(attempt);
        Tensor s = rng.normal_tensor({d});
        const double n = l2_norm(s.data());
        if (!(n > 0.0)) continue;
        for (auto& x : s.data()) x /= n;
        std::vector<double> v(c);
        for (std::size_t j = 0; j < c; ++j) {
            double acc = world.background[j];
            for (std::size_t i = 0; i < d; ++i) acc += s[i] * world.map.at(i, j);
            v[j] = acc;
        }
        if (l2_norm(v) == 0.0) continue;
        bool ok = true;
        for (const auto& other : taken) {
            if (cosine_sim(v, other) >= kMaxPrototypeCosine) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        Tensor desc = rng.split(1).normal_tensor({d}, cfg.text_noise / std::sqrt(static_cast<double>(d)));
        for (std::size_t i = 0; i < d; ++i) semantic.push_back(s[i] + desc[i]);
        visual.insert(visual.end(), v.begin(), v.end());
        taken.push_back(std::move(v));
        return;
    }
    throw DegenerateInputError(fmt::format("class '{}': no prototype with pairwise cosine < {} after {} draws",
                                           draw.name, kMaxPrototypeCosine, kPrototypeRetries));
}

std::vector<FrameFeatures> make_videos(const ExperimentConfig& cfg, const Tensor& prototypes, std::size_t classes,
                                       const RngStream& stream, std::vector<std::size_t>& labels) {
    std::vector<FrameFeatures> out;
    const VideoGeometry geometry{cfg.frames, cfg.height, cfg.width};
    std::size_t index = 0;
    for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t i = 0; i < cfg.videos_per_class; ++i, ++index) {
            const RngStream rng = stream.split(index);
            RngStream pick = rng.split(2);
            std::vector<std::size_t> frames(cfg.frames);
            for (std::size_t t = 0; t < frames.size(); ++t) frames[t] = t + 1;
            for (std::size_t j = 0; j < cfg.motion_frames; ++j) {
                std::swap(frames[j], frames[j + pick.below(frames.size() - j)]);
            }
            frames.resize(cfg.motion_frames);
            std::sort(frames.begin(), frames.end());
            SyntheticVideoSpec spec{k, frames, cfg.motion_amplitude, cfg.noise_sigma};
            out.push_back(generate_video(spec, prototypes, geometry, rng.split(3)));
            labels.push_back(k);
        }
    }
    return out;
}

Tensor rows_tensor(std::vector<double> data, std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols}, std::move(data));
}

PromptBankOptions bank_options(const ExperimentConfig& cfg) {
    PromptBankOptions o;
    o.context_length = cfg.context_length;
    return o;
}

std::vector<ag::Var> optimised_parameters(const Model& model, const PromptBank& bank) {
    std::vector<ag::Var> params = model.trainable();
    if (bank.context.defined()) params.push_back(bank.context);
    return params;
}

std::vector<ag::Var> every_parameter(const Model& model, const PromptBank& seen, const PromptBank& unseen) {
    std::vector<ag::Var> params = model.all_parameters();
    if (seen.context.defined()) params.push_back(seen.context);
    if (unseen.context.defined()) params.push_back(unseen.context);
    return params;
}

bool records_identical(const RunResult& a, const RunResult& b) {
    if (a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto& x = a.records[i];
        const auto& y = b.records[i];
        const auto& lx = x.loss;
        const auto& ly = y.loss;
        if (x.epoch != y.epoch || x.seen_accuracy != y.seen_accuracy || x.unseen_accuracy != y.unseen_accuracy ||
            x.confusion != y.confusion || lx.ce_s != ly.ce_s || lx.cl_s != ly.cl_s || lx.clip_s != ly.clip_s ||
            lx.proj != ly.proj || lx.ce_n != ly.ce_n || lx.total != ly.total) {
            return false;
        }
    }
    return a.unseen_predictions == b.unseen_predictions;
}

}  // namespace

Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const World world = make_world(cfg, seed);
    const auto draws = class_draws(cfg);

    Dataset data;
    std::vector<std::vector<double>> taken;
    std::vector<double> sem, vis;
    const RngStream seen_rng(seed, streams::kSeenClasses);
    for (std::size_t k = 0; k < cfg.k_seen; ++k) {
        draw_class(cfg, world, seen_rng, draws[k], taken, sem, vis);
        data.seen.names.push_back(draws[k].name);
    }
    data.seen.semantic = rows_tensor(std::move(sem), cfg.k_seen, cfg.embed_dim);
    data.seen.visual = rows_tensor(std::move(vis), cfg.k_seen, cfg.channels);

    sem.clear();
    vis.clear();
    const RngStream unseen_rng(seed, streams::kUnseenClasses);
    for (std::size_t k = 0; k < cfg.k_unseen; ++k) {
        draw_class(cfg, world, unseen_rng, draws[cfg.k_seen + k], taken, sem, vis);
        data.unseen.names.push_back(draws[cfg.k_seen + k].name);
    }
    data.unseen.semantic = rows_tensor(std::move(sem), cfg.k_unseen, cfg.embed_dim);
    data.unseen.visual = rows_tensor(std::move(vis), cfg.k_unseen, cfg.channels);

    data.train_videos =
        make_videos(cfg, data.seen.visual, cfg.k_seen, RngStream(seed, streams::kTrainVideos), data.train_labels);
    data.test_videos =
        make_videos(cfg, data.unseen.visual, cfg.k_unseen, RngStream(seed, streams::kTestVideos), data.test_labels);
    return data;
}

EvalResult score_predictions(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                             std::size_t classes) {
    if (predictions.size() != labels.size()) throw DimensionError("score_predictions: size mismatch");
    EvalResult r;
    r.predictions.assign(predictions.begin(), predictions.end());
    r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes || predictions[i] >= classes) {
            throw IndexError(fmt::format("score_predictions: class outside [0, {})", classes));
        }
        ++r.confusion[labels[i]][predictions[i]];
        correct += predictions[i] == labels[i];
    }
    r.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
    return r;
}

EvalResult evaluate_zero_shot(const Model& model, const PromptBank& bank, std::span<const FrameFeatures> videos,
                              std::span<const std::size_t> labels) {
    const auto pred = predict(model, bank, videos);
    return score_predictions(pred, labels, bank.classes());
}

std::vector<std::size_t> frozen_baseline_predictions(std::span<const FrameFeatures> videos, const PromptBank& bank) {
    const std::size_t k = bank.classes(), d = bank.dim(), m = bank.context_length;
    std::vector<std::vector<double>> classes(k, std::vector<double>(d, 0.0));
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < m; ++t) acc += bank.context.value()[(c * m + t) * d + j];
            acc += bank.desc_embed.at(c, j);
            classes[c][j] = acc / static_cast<double>(m + 1);
        }
    }
    std::vector<std::size_t> out;
    for (const auto& v : videos) {
        const Tensor& x = v.tensor();
        const std::size_t ch = v.channels(), positions = x.size() / ch;
        std::vector<double> pooled(ch, 0.0);
        for (std::size_t p = 0; p < positions; ++p) {
            for (std::size_t j = 0; j < ch; ++j) pooled[j] += x[p * ch + j];
        }
        for (auto& e : pooled) e /= static_cast<double>(positions);
        std::vector<double> scores(k);
        for (std::size_t c = 0; c < k; ++c) scores[c] = cosine_sim(pooled, classes[c]);
        out.push_back(argmax(scores));
    }
    return out;
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t h) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
    for (std::size_t i = 0; i < values.size_bytes(); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_tensor(const Tensor& t, std::uint64_t h) {
    std::vector<double> dims(t.shape().begin(), t.shape().end());
    return fnv1a(t.data(), fnv1a(dims, h));
}

std::uint64_t hash_training_visible(const Dataset& data, const PromptBank& seen_bank) {
    std::uint64_t h = hash_tensor(data.seen.semantic);
    h = hash_tensor(data.seen.visual, h);
    for (const auto& v : data.train_videos) h = hash_tensor(v.tensor(), h);
    const std::vector<double> labels(data.train_labels.begin(), data.train_labels.end());
    h = fnv1a(labels, h);
    h = hash_tensor(seen_bank.desc_embed, h);
    h = hash_tensor(seen_bank.neg_desc_embed, h);
    h = hash_tensor(seen_bank.ref_embed, h);
    if (seen_bank.context.defined()) h = hash_tensor(seen_bank.context.value(), h);
    return h;
}

std::uint64_t hash_frozen(const Dataset& data, const PromptBank& seen_bank, const PromptBank& unseen_bank) {
    std::uint64_t h = hash_tensor(data.seen.semantic);
    h = hash_tensor(data.seen.visual, h);
    h = hash_tensor(data.unseen.semantic, h);
    h = hash_tensor(data.unseen.visual, h);
    for (const auto& v : data.train_videos) h = hash_tensor(v.tensor(), h);
    for (const auto& v : data.test_videos) h = hash_tensor(v.tensor(), h);
    for (const auto* bank : {&seen_bank, &unseen_bank}) {
        h = hash_tensor(bank->desc_embed, h);
        h = hash_tensor(bank->neg_desc_embed, h);
        h = hash_tensor(bank->ref_embed, h);
    }
    if (unseen_bank.context.defined()) h = hash_tensor(unseen_bank.context.value(), h);
    return h;
}

std::uint64_t hash_parameters(std::span<const ag::Var> params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) h = hash_tensor(p.value(), h);
    return h;
}

RunResult train(const ExperimentConfig& cfg, std::uint64_t seed, const RecordSink& sink) {
    const Dataset data = build_dataset(cfg, seed);
    RngStream model_rng(seed, streams::kModel);
    const Model model = Model::init(cfg.architecture(), cfg.channels, cfg.embed_dim, model_rng);
    RngStream seen_rng(seed, streams::kSeenPrompts);
    RngStream unseen_rng(seed, streams::kUnseenPrompts);
    const PromptBank seen = make_prompt_bank(data.seen.semantic, bank_options(cfg), seen_rng);
    const PromptBank unseen = make_prompt_bank(data.unseen.semantic, bank_options(cfg), unseen_rng);
    const ObjectiveOptions options = cfg.objective_options();

    RunResult result;
    result.seed = seed;
    result.frozen_hash = hash_frozen(data, seen, unseen);
    result.training_visible_hash = hash_training_visible(data, seen);
    result.baseline_predictions = frozen_baseline_predictions(data.test_videos, unseen);
    result.baseline_accuracy = score_predictions(result.baseline_predictions, data.test_labels, unseen.classes()).accuracy;
    const std::vector<ag::Var> params = optimised_parameters(model, seen);
    const std::vector<ag::Var> all = every_parameter(model, seen, unseen);
    result.parameter_hash_before = hash_parameters(all);

    const std::size_t n = data.train_videos.size();
    const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    auto emit = [&](std::size_t epoch, const losses::LossBreakdown& loss, double seen_acc) {
        MetricsRecord rec;
        rec.seed = seed;
        rec.epoch = epoch;
        rec.loss = loss;
        rec.seen_accuracy = seen_acc;
        const EvalResult ev = evaluate_zero_shot(model, unseen, data.test_videos, data.test_labels);
        rec.unseen_accuracy = ev.accuracy;
        rec.confusion = ev.confusion;
        result.unseen_predictions = ev.predictions;
        if (sink) sink(rec);
        result.records.push_back(std::move(rec));
    };

    auto hits = [](const Tensor& probs, std::span<const std::size_t> labels) {
        std::size_t n = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) n += argmax(probs.row(i)) == labels[i];
        return n;
    };

    {
        ag::NoGradGuard guard;
        const auto r = objective(model, seen, data.train_videos, data.train_labels, options);
        emit(0, r.breakdown, static_cast<double>(hits(r.probs, data.train_labels)) / static_cast<double>(n));
    }

    RngStream shuffle(seed, streams::kShuffle);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (batch < n) {
            for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
        }
        losses::LossBreakdown sum{};
        sum.lambda_n = cfg.lambda_n;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            std::vector<FrameFeatures> videos;
            std::vector<std::size_t> labels;
            videos.reserve(count);
            for (std::size_t i = start; i < start + count; ++i) {
                videos.push_back(data.train_videos[order[i]]);
                labels.push_back(data.train_labels[order[i]]);
            }
            for (const auto& p : params) p.zero_grad();
            const auto r = objective(model, seen, videos, labels, options);
            correct += hits(r.probs, labels);
            ag::backward(r.total);
            for (const auto& p : params) {
                if (p.grad().empty()) continue;
                Tensor& v = p.mutable_value();
                const Tensor& g = p.grad();
                for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.lr * g[i];
            }
            const double w = static_cast<double>(count) / static_cast<double>(n);
            sum.ce_s += w * r.breakdown.ce_s;
            sum.cl_s += w * r.breakdown.cl_s;
            sum.clip_s += w * r.breakdown.clip_s;
            sum.proj += w * r.breakdown.proj;
            sum.ce_n += w * r.breakdown.ce_n;
            sum.total += w * r.breakdown.total;
        }
        if (batch == n) sum.total = losses::total_loss(sum.ce_s, sum.cl_s, sum.clip_s, sum.proj, sum.ce_n, cfg.lambda_n).total;
        emit(epoch, sum, static_cast<double>(correct) / static_cast<double>(n));
    }

    result.parameter_hash_after = hash_parameters(all);
    if (hash_frozen(data, seen, unseen) != result.frozen_hash) {
        throw std::logic_error("frozen state changed during training");
    }
    return result;
}

// ---- ablation ----

bool AblationResult::all_equivalent() const {
    return std::all_of(equivalence.begin(), equivalence.end(), [](const auto& e) { return e.identical; });
}

std::vector<ExperimentConfig> expand_axes(const ExperimentConfig& base, std::span<const AblationAxis> axes) {
    std::vector<ExperimentConfig> out{base};
    std::vector<std::string> names{""};
    for (const auto& axis : axes) {
        if (axis.values.empty()) throw ParameterError(fmt::format("ablation axis '{}' has no values", axis.key));
        std::vector<ExperimentConfig> next;
        std::vector<std::string> next_names;
        for (std::size_t i = 0; i < out.size(); ++i) {
            for (const auto& v : axis.values) {
                ExperimentConfig c = out[i];
                c.set(axis.key, v);
                next.push_back(std::move(c));
                next_names.push_back(names[i] + (names[i].empty() ? "" : ";") + axis.key + "=" + v);
            }
        }
        out = std::move(next);
        names = std::move(next_names);
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].name = names[i].empty() ? base.name : names[i];
    return out;
}

std::vector<ExperimentConfig> preset_configs(const ExperimentConfig& base, const std::string& preset) {
    std::vector<ExperimentConfig> out;
    auto add = [&](const std::string& name, const std::vector<std::pair<std::string, std::string>>& settings) {
        ExperimentConfig c = base;
        for (const auto& [k, v] : settings) c.set(k, v);
        c.name = name;
        out.push_back(std::move(c));
    };
    if (preset == "table3") {
        auto modules = [](bool da, bool msm, bool mab) {
            return std::vector<std::pair<std::string, std::string>>{
                {"use_da", da ? "true" : "false"}, {"use_msm", msm ? "true" : "false"}, {"use_mab", mab ? "true" : "false"},
                {"splitting", "offsets"}};
        };
        add("only-clip", modules(false, false, false));
        add("da", modules(true, false, false));
        add("msm", modules(false, true, false));
        add("mab", modules(false, false, true));
        add("da+msm", modules(true, true, false));
        add("da+mab", modules(true, false, true));
        add("msm+mab", modules(false, true, true));
        add("full", modules(true, true, true));
        auto fixed = modules(true, true, true);
        fixed.back().second = "fixed";
        add("full-fixed", fixed);
        auto frozen = modules(true, true, true);
        frozen.back().second = "frozen-offsets";
        add("full-frozen-offsets", frozen);
    } else if (preset == "table4") {
        auto losses = [](bool ce, bool cl, bool clip, bool proj, bool neg) {
            auto b = [](bool x) { return std::string(x ? "true" : "false"); };
            return std::vector<std::pair<std::string, std::string>>{
                {"use_ce", b(ce)}, {"use_cl", b(cl)}, {"use_clip", b(clip)}, {"use_proj", b(proj)}, {"use_neg", b(neg)}};
        };
        add("ce", losses(true, false, false, false, false));
        add("ce+neg", losses(true, false, false, false, true));
        add("ce+cl", losses(true, true, false, false, false));
        add("ce+cl+clip", losses(true, true, true, false, false));
        add("ce+cl+clip+proj", losses(true, true, true, true, false));
        add("full", losses(true, true, true, true, true));
    } else {
        throw ParameterError(fmt::format("unknown ablation preset '{}' (table3, table4)", preset));
    }
    return out;
}

std::size_t worker_count_from_env() {
    if (const char* env = std::getenv("ZSAR_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

AblationResult run_ablation(std::span<const ExperimentConfig> configs, std::size_t workers) {
    AblationResult result;
    result.configs.assign(configs.begin(), configs.end());
    for (std::size_t c = 0; c < configs.size(); ++c) {
        configs[c].validate();
        for (auto seed : configs[c].seeds) result.cells.push_back({c, seed, {}});
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= result.cells.size()) return;
            try {
                auto& cell = result.cells[i];
                cell.result = train(result.configs[cell.config_index], cell.seed);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(result.cells.size());
            }
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, result.cells.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<std::size_t> first(configs.size(), 0);
    for (std::size_t c = 1; c < configs.size(); ++c) first[c] = first[c - 1] + configs[c - 1].seeds.size();
    for (std::size_t a = 0; a < configs.size(); ++a) {
        if (configs[a].splitting != Splitting::fixed || !configs[a].use_msm) continue;
        for (std::size_t b = 0; b < configs.size(); ++b) {
            ExperimentConfig twin = configs[a];
            twin.splitting = Splitting::frozen_offsets;
            twin.name = configs[b].name;
            if (twin.entries() != configs[b].entries()) continue;
            EquivalenceCheck check{configs[a].name, configs[b].name, true};
            for (std::size_t s = 0; s < configs[a].seeds.size(); ++s) {
                const auto& x = result.cells[first[a] + s].result;
                const auto& y = result.cells[first[b] + s].result;
                check.identical = check.identical && records_identical(x, y);
            }
            result.equivalence.push_back(check);
        }
    }
    return result;
}

// ---- output ----

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

void write_epoch_csv_header(std::ostream& out) {
    out << "config,seed,epoch,ce_s,cl_s,clip_s,proj,ce_n,lambda_n,total,seen_accuracy,unseen_accuracy,unseen_confusion\n";
}

void write_epoch_csv_row(std::ostream& out, const std::string& config, const MetricsRecord& r) {
    std::string confusion;
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
        if (i) confusion += ';';
        for (std::size_t j = 0; j < r.confusion[i].size(); ++j) {
            if (j) confusion += ' ';
            confusion += std::to_string(r.confusion[i][j]);
        }
    }
    const auto& l = r.loss;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", config, r.seed, r.epoch, format_real(l.ce_s),
                       format_real(l.cl_s), format_real(l.clip_s), format_real(l.proj), format_real(l.ce_n),
                       format_real(l.lambda_n), format_real(l.total), format_real(r.seen_accuracy),
                       format_real(r.unseen_accuracy), confusion);
}

void write_ablation_csv(std::ostream& out, const AblationResult& result) {
    out << "config,seed,use_da,use_msm,use_mab,splitting,use_ce,use_cl,use_clip,use_proj,use_neg,epochs,"
           "baseline_unseen_accuracy,initial_unseen_accuracy,final_total_loss,seen_accuracy,unseen_accuracy\n";
    auto b = [](bool x) { return x ? "1" : "0"; };
    for (const auto& cell : result.cells) {
        const auto& c = result.configs[cell.config_index];
        const auto& r = cell.result;
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", c.name, cell.seed, b(c.use_da),
                           b(c.use_msm), b(c.use_mab), to_string(c.splitting), b(c.loss.ce), b(c.loss.cl),
                           b(c.loss.clip), b(c.loss.proj), b(c.loss.neg), c.epochs, format_real(r.baseline_accuracy),
                           format_real(r.records.front().unseen_accuracy), format_real(r.final().loss.total),
                           format_real(r.final().seen_accuracy), format_real(r.final().unseen_accuracy));
    }
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd r;
    if (values.empty()) return r;
    double s = 0.0;
    for (double v : values) s += v;
    r.mean = s / static_cast<double>(values.size());
    if (values.size() > 1) {
        double q = 0.0;
        for (double v : values) q += (v - r.mean) * (v - r.mean);
        r.stddev = std::sqrt(q / static_cast<double>(values.size() - 1));
    }
    return r;
}

nlohmann::json config_json(const ExperimentConfig& cfg) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : cfg.entries()) j[k] = v;
    return j;
}

namespace {

nlohmann::json stats_json(std::span<const double> values) {
    const MeanStd ms = mean_std(values);
    return {{"mean", ms.mean}, {"std", ms.stddev}, {"values", values}};
}

nlohmann::json runs_json(std::span<const RunResult> runs) {
    std::vector<double> unseen, seen, loss, initial;
    std::size_t decreased = 0;
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& r : runs) {
        unseen.push_back(r.final().unseen_accuracy);
        seen.push_back(r.final().seen_accuracy);
        loss.push_back(r.final().loss.total);
        initial.push_back(r.records.front().unseen_accuracy);
        const bool dec = r.records.size() > 1 && r.final().loss.total < r.records[1].loss.total;
        decreased += dec;
        per_seed.push_back({{"seed", r.seed},
                            {"epochs", r.records.size() - 1},
                            {"unseen_accuracy", r.final().unseen_accuracy},
                            {"seen_accuracy", r.final().seen_accuracy},
                            {"final_total_loss", r.final().loss.total},
                            {"loss_decreased", dec},
                            {"unseen_confusion", r.final().confusion},
                            {"frozen_hash", fmt::format("{:016x}", r.frozen_hash)},
                            {"training_visible_hash", fmt::format("{:016x}", r.training_visible_hash)}});
    }
    return {{"seeds", runs.size()},
            {"unseen_accuracy", stats_json(unseen)},
            {"seen_accuracy", stats_json(seen)},
            {"initial_unseen_accuracy", stats_json(initial)},
            {"final_total_loss", stats_json(loss)},
            {"loss_decreased_seeds", decreased},
            {"runs", per_seed}};
}

}  // namespace

nlohmann::json run_summary_json(const ExperimentConfig& cfg, std::span<const RunResult> runs) {
    nlohmann::json j = runs_json(runs);
    j["config"] = config_json(cfg);
    return j;
}

nlohmann::json ablation_summary_json(const AblationResult& result) {
    nlohmann::json configs = nlohmann::json::array();
    for (std::size_t c = 0; c < result.configs.size(); ++c) {
        std::vector<RunResult> runs;
        for (const auto& cell : result.cells) {
            if (cell.config_index == c) runs.push_back(cell.result);
        }
        nlohmann::json j = runs_json(runs);
        j["name"] = result.configs[c].name;
        j["config"] = config_json(result.configs[c]);
        configs.push_back(std::move(j));
    }
    nlohmann::json eq = nlohmann::json::array();
    for (const auto& e : result.equivalence) {
        eq.push_back({{"fixed", e.fixed_config}, {"frozen_offsets", e.frozen_config}, {"identical", e.identical}});
    }
    return {{"configs", configs}, {"equivalence", eq}, {"all_equivalent", result.all_equivalent()}};
}

}  // namespace zsar
