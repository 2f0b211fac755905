#include "zsar/gradcheck_suite.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "zsar/backbone.hpp"
#include "zsar/losses.hpp"
#include "zsar/mab.hpp"
#include "zsar/msm.hpp"
#include "zsar/pipeline.hpp"
#include "zsar/text_space.hpp"

namespace zsar {

namespace {

using gradcheck::Instance;
using ag::Var;

Var param(RngStream& rng, Shape shape, double std = 1.0) { return ag::parameter(rng.normal_tensor(std::move(shape), std)); }

Tensor uniform(RngStream& rng, Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = lo + (hi - lo) * rng.uniform();
    return t;
}

void randomize(const std::vector<Var>& params, RngStream& rng, double std) {
    for (const auto& p : params) {
        Tensor& v = p.mutable_value();
        for (auto& x : v.data()) x = rng.normal(0.0, std);
    }
}

// Global offsets in (0, delta), dynamic offsets in (-delta, 0): every
// sampling position stays strictly inside [1, T].
msm::OffsetHead interior_head(RngStream& rng, double delta) {
    msm::OffsetHead head = msm::OffsetHead::init(8, delta, rng);
    randomize(head.parameters(), rng, 0.3);
    head.global.b2.mutable_value()[0] = 1.5;
    head.dynamic.b2.mutable_value()[0] = -1.5;
    return head;
}

std::vector<std::size_t> labels_for(RngStream& rng, std::size_t n, std::size_t classes) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i < classes ? i : rng.below(classes);
    return out;
}

// Single-op cases: f(inputs) contracted against a fixed random weight.
template <typename Build>
gradcheck::InstanceFactory unary(Shape shape, Build build, double lo = -2.0, double hi = 2.0) {
    return [shape, build, lo, hi](RngStream& rng) {
        Var x = ag::parameter(uniform(rng, shape, lo, hi));
        const Var out0 = build(x);
        const Tensor w = rng.normal_tensor(out0.shape());
        return Instance{[x, build, w] { return ag::sum(ag::mul(build(x), ag::constant(w))); }, {x}};
    };
}

std::vector<GradcheckCase> make_cases() {
    std::vector<GradcheckCase> cases;
    auto add = [&](std::string name, gradcheck::InstanceFactory f) { cases.push_back({std::move(name), std::move(f)}); };

    add("add", [](RngStream& rng) {
        Var a = param(rng, {3, 4}), b = param(rng, {3, 4});
        const Tensor w = rng.normal_tensor({3, 4});
        return Instance{[=] { return ag::sum(ag::mul(ag::add(a, b), ag::constant(w))); }, {a, b}};
    });
    add("sub", [](RngStream& rng) {
        Var a = param(rng, {3, 4}), b = param(rng, {3, 4});
        const Tensor w = rng.normal_tensor({3, 4});
        return Instance{[=] { return ag::sum(ag::mul(ag::sub(a, b), ag::constant(w))); }, {a, b}};
    });
    add("mul", [](RngStream& rng) {
        Var a = param(rng, {3, 4}), b = param(rng, {3, 4});
        const Tensor w = rng.normal_tensor({3, 4});
        return Instance{[=] { return ag::sum(ag::mul(ag::mul(a, b), ag::constant(w))); }, {a, b}};
    });
    add("scale", unary({2, 5}, [](const Var& x) { return ag::add_scalar(ag::scale(x, -1.7), 0.3); }));
    add("sigmoid", unary({2, 5}, [](const Var& x) { return ag::sigmoid(x); }, -4.0, 4.0));
    add("tanh", unary({2, 5}, [](const Var& x) { return ag::tanh(x); }, -3.0, 3.0));
    add("gelu", unary({2, 5}, [](const Var& x) { return ag::gelu(x); }, -3.0, 3.0));
    add("log", unary({2, 5}, [](const Var& x) { return ag::log(x); }, 0.2, 3.0));
    add("clamp", unary({3, 6}, [](const Var& x) { return ag::clamp(x, -0.8, 0.9); }));
    add("matmul", [](RngStream& rng) {
        Var a = param(rng, {3, 4}), b = param(rng, {4, 2});
        const Tensor w = rng.normal_tensor({3, 2});
        return Instance{[=] { return ag::sum(ag::mul(ag::matmul(a, b), ag::constant(w))); }, {a, b}};
    });
    add("transpose", unary({3, 4}, [](const Var& x) { return ag::transpose(x); }));
    add("reshape", unary({3, 4}, [](const Var& x) { return ag::reshape(x, {2, 6}); }));
    add("add_row_bias", [](RngStream& rng) {
        Var x = param(rng, {3, 4}), b = param(rng, {4});
        const Tensor w = rng.normal_tensor({3, 4});
        return Instance{[=] { return ag::sum(ag::mul(ag::add_row_bias(x, b), ag::constant(w))); }, {x, b}};
    });
    add("concat_cols", [](RngStream& rng) {
        Var a = param(rng, {3, 2}), b = param(rng, {3, 4});
        const Tensor w = rng.normal_tensor({3, 6});
        return Instance{[=] {
                            const std::array<Var, 2> parts{a, b};
                            return ag::sum(ag::mul(ag::concat_cols(parts), ag::constant(w)));
                        },
                        {a, b}};
    });
    add("concat_rows", [](RngStream& rng) {
        Var a = param(rng, {2, 3}), b = param(rng, {1, 3});
        const Tensor w = rng.normal_tensor({3, 3});
        return Instance{[=] {
                            const std::array<Var, 2> parts{a, b};
                            return ag::sum(ag::mul(ag::concat_rows(parts), ag::constant(w)));
                        },
                        {a, b}};
    });
    add("slice_rows", unary({5, 3}, [](const Var& x) { return ag::slice_rows(x, 1, 3); }));
    add("gather_rows", unary({4, 3}, [](const Var& x) {
            const std::array<std::size_t, 5> rows{2, 0, 2, 3, 1};
            return ag::gather_rows(x, rows);
        }));
    add("gather_elements", unary({3, 3}, [](const Var& x) {
            const std::array<std::size_t, 4> flat{8, 0, 4, 4};
            return ag::gather_elements(x, flat);
        }));
    add("sum", unary({3, 3}, [](const Var& x) { return ag::sum(x); }));
    add("mean", unary({3, 3}, [](const Var& x) { return ag::mean(x); }));
    add("mean_row_groups", unary({6, 2}, [](const Var& x) { return ag::mean_row_groups(x, 3); }));
    add("layer_norm", [](RngStream& rng) {
        Var x = param(rng, {3, 5}), g = param(rng, {5}), b = param(rng, {5});
        const Tensor w = rng.normal_tensor({3, 5});
        return Instance{[=] { return ag::sum(ag::mul(ag::layer_norm(x, g, b), ag::constant(w))); }, {x, g, b}};
    });
    add("softmax", unary({2, 5}, [](const Var& x) { return ag::softmax(x); }, -3.0, 3.0));
    add("log_softmax", unary({2, 5}, [](const Var& x) { return ag::log_softmax(x); }, -3.0, 3.0));
    add("cosine_matrix", [](RngStream& rng) {
        Var a = param(rng, {3, 4}), b = param(rng, {2, 4});
        const Tensor w = rng.normal_tensor({3, 2});
        return Instance{[=] { return ag::sum(ag::mul(ag::cosine_matrix(a, b), ag::constant(w))); }, {a, b}};
    });
    add("block_attention", [](RngStream& rng) {
        Var q = param(rng, {6, 3}), k = param(rng, {6, 3}), v = param(rng, {6, 2});
        const Tensor w = rng.normal_tensor({6, 2});
        return Instance{[=] { return ag::sum(ag::mul(ag::block_attention(q, k, v, 3, 0.7), ag::constant(w))); },
                        {q, k, v}};
    });
    add("cross_entropy_probs", [](RngStream& rng) {
        Var x = param(rng, {3, 4});
        Tensor t = uniform(rng, {3, 4}, 0.0, 1.0);
        t.at(0, 1) = 0.0;
        return Instance{[=] { return ag::cross_entropy_probs(ag::softmax(x), t); }, {x}};
    });

    // motion statistics
    add("deviation_from_mean", unary({6, 3}, [](const Var& e) { return ag::deviation_from_mean(e); }));
    add("central_difference", unary({6, 3}, [](const Var& e) { return ag::central_difference(e); }));
    add("minmax_normalize", unary({7}, [](const Var& x) { return ag::minmax_normalize(x); }));
    add("interpolate_rows", [](RngStream& rng) {
        const std::size_t t = 6;
        Var x = param(rng, {t, 3});
        Var idx = ag::parameter(uniform(rng, {5}, 1.0, static_cast<double>(t)));
        const Tensor w = rng.normal_tensor({5, 3});
        return Instance{[=] { return ag::sum(ag::mul(ag::interpolate_rows(x, idx), ag::constant(w))); }, {x, idx}};
    });

    // MSM
    add("msm_frame_embed", unary({4, 2, 2, 3}, [](const Var& x) { return msm::frame_embed(x); }));
    add("msm_saliency", unary({8, 4}, [](const Var& e) { return msm::saliency(e, {0.5, 0.5}); }));
    add("msm_offsets", [](RngStream& rng) {
        msm::OffsetHead head = msm::OffsetHead::init(8, 1.5, rng);
        randomize(head.parameters(), rng, 0.8);
        Var m = ag::parameter(uniform(rng, {8}, 0.0, 1.0));
        const Tensor wg = rng.normal_tensor({8}), wd = rng.normal_tensor({8});
        std::vector<Var> params = head.parameters();
        params.push_back(m);
        return Instance{[=] {
                            const auto [dg, dd] = msm::compute_offsets(m, head);
                            return ag::add(ag::sum(ag::mul(dg, ag::constant(wg))), ag::sum(ag::mul(dd, ag::constant(wd))));
                        },
                        params};
    });
    add("msm_sample_streams", [](RngStream& rng) {
        Var x = param(rng, {8, 2, 1, 3});
        Var dg = ag::parameter(uniform(rng, {8}, 0.0, 0.9));
        Var dd = ag::parameter(uniform(rng, {8}, -0.9, 0.0));
        const Tensor wg = rng.normal_tensor({4, 2, 1, 3}), wd = rng.normal_tensor({4, 2, 1, 3});
        return Instance{[=] {
                            const auto s = msm::sample_streams(x, dg, dd);
                            return ag::add(ag::sum(ag::mul(s.x_g, ag::constant(wg))),
                                           ag::sum(ag::mul(s.x_d, ag::constant(wd))));
                        },
                        {x, dg, dd}};
    });
    add("msm_separate", [](RngStream& rng) {
        const msm::OffsetHead head = interior_head(rng, 0.9);
        Var x = param(rng, {8, 2, 1, 3});
        const Tensor wg = rng.normal_tensor({4, 2, 1, 3}), wd = rng.normal_tensor({4, 2, 1, 3});
        std::vector<Var> params = head.parameters();
        params.push_back(x);
        return Instance{[=] {
                            const auto s = msm::separate(x, head, {0.5, 0.5}).streams;
                            return ag::add(ag::sum(ag::mul(s.x_g, ag::constant(wg))),
                                           ag::sum(ag::mul(s.x_d, ag::constant(wd))));
                        },
                        params};
    });

    // MAB
    add("mab_fuse", [](RngStream& rng) {
        mab::GateParams gate = mab::GateParams::init(4);
        randomize(gate.parameters(), rng, 0.7);
        Var xd = param(rng, {2, 2, 1, 4}), xg = param(rng, {2, 2, 1, 4});
        const Tensor w = rng.normal_tensor({2, 2, 1, 4});
        std::vector<Var> params = gate.parameters();
        params.push_back(xd);
        params.push_back(xg);
        return Instance{[=] { return ag::sum(ag::mul(mab::fuse(xd, xg, gate), ag::constant(w))); }, params};
    });

    // backbone
    add("dual_adapter", [](RngStream& rng) {
        DualAdapter a = DualAdapter::zeros(4, 2);
        randomize(a.parameters(), rng, 0.5);
        Var tokens = param(rng, {5, 4});
        const Tensor w = rng.normal_tensor({5, 4});
        std::vector<Var> params = a.parameters();
        params.push_back(tokens);
        return Instance{[=] { return ag::sum(ag::mul(apply_dual_adapter(a, tokens), ag::constant(w))); }, params};
    });
    add("pool_video_embedding", [](RngStream& rng) {
        Var x = param(rng, {4, 2, 1, 3}), proj = param(rng, {3, 5});
        const Tensor w = rng.normal_tensor({1, 5});
        return Instance{[=] { return ag::sum(ag::mul(pool_video_embedding(x, proj), ag::constant(w))); }, {x, proj}};
    });

    // text space
    add("encode_prompts", [](RngStream& rng) {
        DualAdapter a = DualAdapter::zeros(4, 2);
        randomize(a.parameters(), rng, 0.5);
        RngStream bank_rng = rng.split(7);
        const PromptBank bank = make_prompt_bank(rng.normal_tensor({3, 4}), {2, 0.5, 0.1}, bank_rng);
        const Tensor wt = rng.normal_tensor({3, 4}), wn = rng.normal_tensor({3, 4});
        std::vector<Var> params = a.parameters();
        params.push_back(bank.context);
        return Instance{[=] {
                            const auto e = encode_prompts(bank, &a);
                            return ag::add(ag::sum(ag::mul(e.e_t, ag::constant(wt))),
                                           ag::sum(ag::mul(e.e_n, ag::constant(wn))));
                        },
                        params};
    });
    add("classify", [](RngStream& rng) {
        Var v = param(rng, {3, 4}), t = param(rng, {2, 4});
        const Tensor w = rng.normal_tensor({3, 2});
        return Instance{[=] { return ag::sum(ag::mul(classify(v, t), ag::constant(w))); }, {v, t}};
    });

    // losses
    add("loss_ce_seen", [](RngStream& rng) {
        Var v = param(rng, {4, 5}), t = param(rng, {3, 5});
        const auto y = labels_for(rng, 4, 3);
        return Instance{[=] { return losses::ce_seen(classify(v, t), y); }, {v, t}};
    });
    add("loss_contrastive_seen", [](RngStream& rng) {
        Var v = param(rng, {5, 4}), t = param(rng, {3, 4});
        const auto y = labels_for(rng, 5, 3);
        return Instance{[=] { return losses::contrastive_seen(v, t, y, 0.07); }, {v, t}};
    });
    add("loss_clip_consistency", [](RngStream& rng) {
        Var v = param(rng, {4, 5});
        const Tensor ref = rng.normal_tensor({3, 5});
        const auto y = labels_for(rng, 4, 3);
        return Instance{[=] { return losses::clip_consistency(v, ref, y); }, {v}};
    });
    add("loss_projection", [](RngStream& rng) {
        Var p = param(rng, {3, 4});
        const Tensor anchor = rng.normal_tensor({3, 4});
        return Instance{[=] { return losses::projection_loss(p, anchor); }, {p}};
    });
    add("loss_negative_prompt", [](RngStream& rng) {
        Var v = param(rng, {4, 5}), n = param(rng, {3, 5});
        const auto y = labels_for(rng, 4, 3);
        return Instance{[=] { return losses::negative_prompt_loss(classify(v, n), y); }, {v, n}};
    });

    // everything at once
    add("total_loss_end_to_end", [](RngStream& rng) {
        const std::size_t c = 4, classes = 3;
        RngStream model_rng = rng.split(11);
        Architecture arch;
        arch.max_offset = 0.9;
        Model model = Model::init(arch, c, c, model_rng);
        randomize(model.adapter.parameters(), rng, 0.4);
        model.heads = interior_head(rng, 0.9);
        randomize(model.gate.parameters(), rng, 0.5);
        Tensor& proj = model.projection.mutable_value();
        for (auto& x : proj.data()) x += rng.normal(0.0, 0.3);
        RngStream bank_rng = rng.split(12);
        const PromptBank bank = make_prompt_bank(rng.normal_tensor({classes, c}), {2, 0.3, 0.1}, bank_rng);
        std::vector<FrameFeatures> videos;
        for (std::size_t i = 0; i < 4; ++i) videos.emplace_back(rng.normal_tensor({8, 1, 2, c}));
        const auto y = labels_for(rng, videos.size(), classes);
        std::vector<Var> params = model.trainable();
        params.push_back(bank.context);
        return Instance{[=] { return objective(model, bank, videos, y, ObjectiveOptions{}).total; }, params};
    });
    return cases;
}

}  // namespace

const std::vector<GradcheckCase>& gradcheck_cases() {
    static const std::vector<GradcheckCase> cases = make_cases();
    return cases;
}

std::vector<gradcheck::GradReport> run_gradcheck_suite(std::size_t seeds, const std::string& filter) {
    std::vector<gradcheck::GradReport> out;
    const auto& cases = gradcheck_cases();
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        if (cases[ci].name.find(filter) == std::string::npos) continue;
        gradcheck::GradReport merged;
        merged.op_name = cases[ci].name;
        merged.kink_distance = INFINITY;
        merged.attempts = 0;
        for (std::size_t s = 1; s <= seeds; ++s) {
            gradcheck::GradReport r;
            try {
                r = gradcheck::check_avoiding_kinks(cases[ci].name, cases[ci].factory, RngStream(s, 1000 + ci));
            } catch (const std::runtime_error&) {
                r.max_rel_error = r.max_abs_error = INFINITY;
            }
            merged.max_rel_error = std::max(merged.max_rel_error, r.max_rel_error);
            merged.max_abs_error = std::max(merged.max_abs_error, r.max_abs_error);
            merged.checked_params += r.checked_params;
            merged.kink_distance = std::min(merged.kink_distance, r.kink_distance);
            merged.attempts += r.attempts;
        }
        out.push_back(merged);
    }
    return out;
}

}  // namespace zsar
