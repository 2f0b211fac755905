#include "zsar/losses.hpp"

#include <map>
#include <vector>

#include <fmt/format.h>

#include "zsar/errors.hpp"
#include "zsar/text_space.hpp"

namespace zsar::losses {

namespace {

void check_labels(std::span<const std::size_t> labels, std::size_t rows, std::size_t classes, const char* op) {
    if (labels.size() != rows) {
        throw DimensionError(fmt::format("{}: {} labels for {} rows", op, labels.size(), rows));
    }
    for (auto y : labels) {
        if (y >= classes) throw IndexError(fmt::format("{}: label {} outside [0, {})", op, y, classes));
    }
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    Tensor t({labels.size(), classes});
    for (std::size_t i = 0; i < labels.size(); ++i) t.at(i, labels[i]) = 1.0;
    return t;
}

}  // namespace

ag::Var ce_seen(const ag::Var& probs, std::span<const std::size_t> labels) {
    const Tensor& p = probs.value();
    if (p.rank() != 2) throw DimensionError("ce_seen: expected B x K probabilities, got " + shape_str(p.shape()));
    check_labels(labels, p.rows(), p.cols(), "ce_seen");
    return ag::cross_entropy_probs(probs, one_hot(labels, p.cols()));
}

ag::Var contrastive_seen(const ag::Var& e_v, const ag::Var& e_t, std::span<const std::size_t> labels,
                         double temperature) {
    if (!(temperature > 0.0)) throw ParameterError(fmt::format("contrastive_seen: temperature {} must be > 0", temperature));
    const std::size_t b = e_v.value().rows(), k = e_t.value().rows();
    check_labels(labels, b, k, "contrastive_seen");

    const ag::Var logits = ag::scale(ag::cosine_matrix(e_v, e_t), 1.0 / temperature);

    // video -> text
    std::vector<std::size_t> picks(b);
    for (std::size_t i = 0; i < b; ++i) picks[i] = i * k + labels[i];
    const ag::Var v2t = ag::scale(ag::sum(ag::gather_elements(ag::log_softmax(logits), picks)), -1.0 / static_cast<double>(b));

    // text -> video, one softmax row per (class, positive video)
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < b; ++i) members[labels[i]].push_back(i);
    std::vector<ag::Var> per_class;
    for (const auto& [cls, positives] : members) {
        std::vector<std::size_t> negatives;
        for (std::size_t i = 0; i < b; ++i) {
            if (labels[i] != cls) negatives.push_back(i);
        }
        const std::size_t width = 1 + negatives.size();
        std::vector<std::size_t> flat;
        flat.reserve(positives.size() * width);
        for (auto p : positives) {
            flat.push_back(p * k + cls);
            for (auto n : negatives) flat.push_back(n * k + cls);
        }
        const ag::Var rows = ag::reshape(ag::gather_elements(logits, flat), {positives.size(), width});
        const ag::Var lsm = ag::log_softmax(rows);
        std::vector<std::size_t> firsts(positives.size());
        for (std::size_t r = 0; r < positives.size(); ++r) firsts[r] = r * width;
        per_class.push_back(ag::scale(ag::sum(ag::gather_elements(lsm, firsts)), -1.0 / static_cast<double>(positives.size())));
    }
    const ag::Var t2v = ag::scale(ag::sum(ag::concat_rows(per_class)), 1.0 / static_cast<double>(per_class.size()));
    return ag::scale(ag::add(v2t, t2v), 0.5);
}

ag::Var clip_consistency(const ag::Var& e_v, const Tensor& ref_embed, std::span<const std::size_t> labels) {
    return ce_seen(classify(e_v, ag::constant(ref_embed)), labels);
}

ag::Var projection_loss(const ag::Var& e_p, const Tensor& anchor) {
    require_same_shape(e_p.value(), anchor, "projection_loss");
    const ag::Var diff = ag::sub(e_p, ag::constant(anchor));
    return ag::scale(ag::sum(ag::mul(diff, diff)), 1.0 / static_cast<double>(anchor.rows()));
}

Tensor complementary_targets(std::span<const std::size_t> labels, std::size_t classes) {
    if (classes < 2) {
        throw DegenerateInputError(fmt::format("complementary label needs at least 2 classes, got {}", classes));
    }
    Tensor t = Tensor::filled({labels.size(), classes}, 1.0 / static_cast<double>(classes - 1));
    for (std::size_t i = 0; i < labels.size(); ++i) t.at(i, labels[i]) = 0.0;
    return t;
}

ag::Var negative_prompt_loss(const ag::Var& neg_probs, std::span<const std::size_t> labels) {
    const Tensor& p = neg_probs.value();
    if (p.rank() != 2) throw DimensionError("negative_prompt_loss: expected B x K, got " + shape_str(p.shape()));
    if (p.cols() < 2) {
        throw DegenerateInputError(fmt::format("negative_prompt_loss: needs at least 2 classes, got {}", p.cols()));
    }
    check_labels(labels, p.rows(), p.cols(), "negative_prompt_loss");
    return ag::cross_entropy_probs(neg_probs, complementary_targets(labels, p.cols()));
}

LossBreakdown total_loss(double ce_s, double cl_s, double clip_s, double proj, double ce_n, double lambda_n) {
    if (lambda_n < 0.0) throw ParameterError(fmt::format("lambda_n {} must be >= 0", lambda_n));
    LossBreakdown b{ce_s, cl_s, clip_s, proj, ce_n, lambda_n, 0.0};
    b.total = ce_s + cl_s + clip_s + proj + lambda_n * ce_n;
    return b;
}

}  // namespace zsar::losses
