#pragma once

#include <cstddef>
#include <span>

#include "zsar/autograd.hpp"
#include "zsar/tensor.hpp"

namespace zsar::losses {

inline constexpr double kDefaultLambdaNegative = 0.1;
inline constexpr double kDefaultTemperature = 0.07;

// All batch reductions are means. Labels are 0-based class rows; every loss
// throws IndexError for a label outside [0, K).

// mean_i -log P_S[i, y_i]
ag::Var ce_seen(const ag::Var& probs, std::span<const std::size_t> labels);

// Symmetric InfoNCE over cosine logits / temperature. The video->text half is
// a K-way cross-entropy per video; the text->video half contrasts each
// (class, positive video) pair against the videos of other classes only,
// averaged per class and then over the classes present. Throws
// ParameterError for temperature <= 0.
ag::Var contrastive_seen(const ag::Var& e_v, const ag::Var& e_t, std::span<const std::size_t> labels,
                         double temperature);

// Cross-entropy of softmax(cos(e_v, ref_embed)) against the labels.
ag::Var clip_consistency(const ag::Var& e_v, const Tensor& ref_embed, std::span<const std::size_t> labels);

// mean_k ||e_p[k] - anchor[k]||^2
ag::Var projection_loss(const ag::Var& e_p, const Tensor& anchor);

// Cross-entropy against the complementary label: uniform mass on every
// negative prompt j != y_i and none on y_i. Throws DegenerateInputError for
// K < 2.
ag::Var negative_prompt_loss(const ag::Var& neg_probs, std::span<const std::size_t> labels);

// Row i holds 1/(K-1) everywhere except column labels[i].
Tensor complementary_targets(std::span<const std::size_t> labels, std::size_t classes);

struct LossFlags {
    bool ce = true;
    bool cl = true;
    bool clip = true;
    bool proj = true;
    bool neg = true;
};

struct LossBreakdown {
    double ce_s = 0.0;
    double cl_s = 0.0;
    double clip_s = 0.0;
    double proj = 0.0;
    double ce_n = 0.0;
    double lambda_n = kDefaultLambdaNegative;
    double total = 0.0;
};

// total = ce_s + cl_s + clip_s + proj + lambda_n * ce_n. Throws
// ParameterError for lambda_n < 0.
LossBreakdown total_loss(double ce_s, double cl_s, double clip_s, double proj, double ce_n, double lambda_n);

}  // namespace zsar::losses
