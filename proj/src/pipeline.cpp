#include "zsar/pipeline.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "zsar/errors.hpp"

namespace zsar {

std::string to_string(Splitting s) {
    switch (s) {
        case Splitting::offsets: return "offsets";
        case Splitting::fixed: return "fixed";
        case Splitting::frozen_offsets: return "frozen-offsets";
    }
    return "?";
}

Splitting parse_splitting(const std::string& s) {
    if (s == "offsets") return Splitting::offsets;
    if (s == "fixed") return Splitting::fixed;
    if (s == "frozen-offsets") return Splitting::frozen_offsets;
    throw ParameterError("splitting must be offsets, fixed or frozen-offsets, got '" + s + "'");
}

Model Model::init(const Architecture& arch, std::size_t channels, std::size_t embed_dim, RngStream& rng) {
    if (channels != embed_dim) {
        throw DimensionError(fmt::format("shared adapter needs channels == embed_dim, got {} vs {}", channels, embed_dim));
    }
    if (embed_dim < 4) throw DimensionError("embed_dim must be at least 4");
    Model m;
    m.arch = arch;
    RngStream adapter_rng = rng.split(1);
    RngStream head_rng = rng.split(2);
    m.adapter = DualAdapter::identity_init(embed_dim, embed_dim / 4, adapter_rng);
    m.heads = arch.splitting == Splitting::frozen_offsets ? msm::OffsetHead::zeros(arch.offset_hidden, arch.max_offset)
                                                          : msm::OffsetHead::init(arch.offset_hidden, arch.max_offset, head_rng);
    m.gate = mab::GateParams::init(channels);
    Tensor eye({channels, embed_dim});
    for (std::size_t i = 0; i < channels; ++i) eye.at(i, i) = 1.0;
    m.projection = ag::parameter(std::move(eye));
    return m;
}

std::vector<ag::Var> Model::trainable() const {
    std::vector<ag::Var> out{projection};
    if (arch.use_da) {
        for (auto& p : adapter.parameters()) out.push_back(p);
    }
    if (arch.use_msm && arch.splitting == Splitting::offsets) {
        for (auto& p : heads.parameters()) out.push_back(p);
    }
    if (arch.use_mab) {
        for (auto& p : gate.parameters()) out.push_back(p);
    }
    return out;
}

std::vector<ag::Var> Model::all_parameters() const {
    std::vector<ag::Var> out{projection};
    for (auto& p : adapter.parameters()) out.push_back(p);
    for (auto& p : heads.parameters()) out.push_back(p);
    for (auto& p : gate.parameters()) out.push_back(p);
    return out;
}

ag::Var encode_videos(const Model& model, std::span<const FrameFeatures> videos) {
    if (videos.empty()) throw DimensionError("encode_videos: no videos");
    const Architecture& arch = model.arch;
    const Shape clip = videos.front().tensor().shape();
    const std::size_t n = clip[0] * clip[1] * clip[2], c = clip[3];
    Tensor stacked({videos.size() * n, c});
    for (std::size_t i = 0; i < videos.size(); ++i) {
        const Tensor& v = videos[i].tensor();
        if (v.shape() != clip) {
            throw DimensionError(fmt::format("encode_videos: video {} is {}, expected {}", i, shape_str(v.shape()),
                                             shape_str(clip)));
        }
        std::copy(v.data().begin(), v.data().end(), stacked.data().begin() + static_cast<std::ptrdiff_t>(i * n * c));
    }
    ag::Var x = ag::constant(std::move(stacked));
    if (arch.use_da) x = apply_dual_adapter(model.adapter, x, n);
    if (!arch.use_msm && !arch.use_mab) return ag::matmul(ag::mean_row_groups(x, n), model.projection);

    const std::size_t half = n / 2, t = clip[0];
    const bool learned = arch.use_msm && arch.splitting != Splitting::fixed;
    ag::Var delta_g, delta_d;
    if (learned) {
        const ag::Var e = ag::mean_row_groups(x, clip[1] * clip[2]);
        std::vector<ag::Var> m;
        for (std::size_t i = 0; i < videos.size(); ++i) {
            m.push_back(ag::reshape(msm::saliency(ag::slice_rows(e, i * t, t), arch.saliency), {t, 1}));
        }
        const auto [dg, dd] = msm::compute_offsets(ag::reshape(ag::concat_rows(m), {videos.size() * t}), model.heads);
        delta_g = ag::reshape(dg, {videos.size() * t, 1});
        delta_d = ag::reshape(dd, {videos.size() * t, 1});
    }
    std::vector<ag::Var> globals, dynamics, interleaved;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        const ag::Var xi = ag::reshape(ag::slice_rows(x, i * n, n), clip);
        const msm::StreamVars s =
            learned ? msm::sample_streams(xi, ag::reshape(ag::slice_rows(delta_g, i * t, t), {t}),
                                          ag::reshape(ag::slice_rows(delta_d, i * t, t), {t}))
                    : msm::fixed_split(xi);
        const ag::Var g = ag::reshape(s.x_g, {half, c});
        const ag::Var d = ag::reshape(s.x_d, {half, c});
        if (arch.use_mab) {
            globals.push_back(g);
            dynamics.push_back(d);
        } else {
            interleaved.push_back(g);
            interleaved.push_back(d);
        }
    }
    if (arch.use_mab) {
        const ag::Var fused = mab::fuse(ag::concat_rows(dynamics), ag::concat_rows(globals), model.gate);
        return ag::matmul(ag::mean_row_groups(fused, half), model.projection);
    }
    return ag::matmul(ag::mean_row_groups(ag::concat_rows(interleaved), n), model.projection);
}

ag::Var encode_video(const Model& model, const FrameFeatures& video) {
    return encode_videos(model, std::span<const FrameFeatures>(&video, 1));
}

ClassEmbeddings encode_classes(const Model& model, const PromptBank& bank) {
    return encode_prompts(bank, model.arch.use_da ? &model.adapter : nullptr);
}

ObjectiveResult objective(const Model& model, const PromptBank& bank, std::span<const FrameFeatures> videos,
                          std::span<const std::size_t> labels, const ObjectiveOptions& options) {
    const ag::Var e_v = encode_videos(model, videos);
    const ClassEmbeddings cls = encode_classes(model, bank);
    const ag::Var probs = classify(e_v, cls.e_t);
    const losses::LossFlags& f = options.flags;

    struct Term {
        const char* name;
        bool enabled;
        double weight;
        ag::Var value;
    };
    std::array<Term, 5> terms{{
        {"ce_s", f.ce, 1.0, {}},
        {"cl_s", f.cl, 1.0, {}},
        {"clip_s", f.clip, 1.0, {}},
        {"proj", f.proj, 1.0, {}},
        {"ce_n", f.neg, options.lambda_n, {}},
    }};
    if (f.ce) terms[0].value = losses::ce_seen(probs, labels);
    if (f.cl) terms[1].value = losses::contrastive_seen(e_v, cls.e_t, labels, options.temperature);
    if (f.clip) terms[2].value = losses::clip_consistency(e_v, bank.ref_embed, labels);
    if (f.proj) terms[3].value = losses::projection_loss(cls.e_p, bank.ref_embed);
    if (f.neg) terms[4].value = losses::negative_prompt_loss(classify(e_v, cls.e_n), labels);

    std::array<double, 5> values{};
    ag::Var total;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (!terms[i].enabled) continue;
        values[i] = terms[i].value.value().item();
        if (!std::isfinite(values[i])) {
            throw NumericDomainError(fmt::format("non-finite loss component {}", terms[i].name));
        }
        const ag::Var weighted = terms[i].weight == 1.0 ? terms[i].value : ag::scale(terms[i].value, terms[i].weight);
        total = total.defined() ? ag::add(total, weighted) : weighted;
    }
    if (!total.defined()) throw ParameterError("objective: every loss component is disabled");

    ObjectiveResult r;
    r.breakdown = losses::total_loss(values[0], values[1], values[2], values[3], values[4], options.lambda_n);
    r.total = total;
    r.probs = probs.value();
    return r;
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

std::vector<std::size_t> predict(const Model& model, const PromptBank& bank, std::span<const FrameFeatures> videos) {
    ag::NoGradGuard guard;
    const ag::Var e_v = encode_videos(model, videos);
    const ClassEmbeddings cls = encode_classes(model, bank);
    const Tensor probs = classify(e_v, cls.e_t).value();
    std::vector<std::size_t> out(videos.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(probs.row(i));
    return out;
}

}  // namespace zsar
