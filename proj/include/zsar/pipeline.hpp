#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "zsar/autograd.hpp"
#include "zsar/backbone.hpp"
#include "zsar/losses.hpp"
#include "zsar/mab.hpp"
#include "zsar/msm.hpp"
#include "zsar/rng.hpp"
#include "zsar/text_space.hpp"

namespace zsar {

enum class Splitting {
    offsets,         // learned offsets from saliency
    fixed,           // odd/even anchors, no offset computation at all
    frozen_offsets,  // offsets computed from zero-initialized heads that never train
};

std::string to_string(Splitting s);
Splitting parse_splitting(const std::string& s);

struct Architecture {
    bool use_da = true;
    bool use_msm = true;
    bool use_mab = true;
    Splitting splitting = Splitting::offsets;
    msm::SaliencyWeights saliency{};
    double max_offset = 1.5;
    std::size_t offset_hidden = 8;
};

// Trainable parts on top of the frozen features. The projection maps the
// pooled C-dim features into the shared D-dim space.
struct Model {
    Architecture arch;
    DualAdapter adapter;
    msm::OffsetHead heads;
    mab::GateParams gate;
    ag::Var projection;  // C x D

    // Identity adapter, zero offsets, 0.5 gates, identity projection:
    // encode_video starts as plain mean pooling when MAB is off. Requires
    // channels == embed_dim because the adapter is shared with prompts.
    static Model init(const Architecture& arch, std::size_t channels, std::size_t embed_dim, RngStream& rng);

    // Parameters the optimizer updates for this architecture.
    std::vector<ag::Var> trainable() const;
    // Every parameter, trained or not.
    std::vector<ag::Var> all_parameters() const;
};

// Adapter (optional) -> separation (optional) -> fusion (optional) -> pooling.
// Without MAB the two streams are concatenated along time; MAB without MSM
// fuses the fixed split. Returns e_V as [B x D]; all videos share one shape.
ag::Var encode_videos(const Model& model, std::span<const FrameFeatures> videos);
ag::Var encode_video(const Model& model, const FrameFeatures& video);

ClassEmbeddings encode_classes(const Model& model, const PromptBank& bank);

struct ObjectiveOptions {
    losses::LossFlags flags{};
    double lambda_n = losses::kDefaultLambdaNegative;
    double temperature = losses::kDefaultTemperature;
};

struct ObjectiveResult {
    ag::Var total;
    losses::LossBreakdown breakdown;
    Tensor probs;  // P_S, B x K
};

// Disabled components contribute neither value nor gradient and are reported
// as 0. Throws NumericDomainError naming the first non-finite component.
ObjectiveResult objective(const Model& model, const PromptBank& bank, std::span<const FrameFeatures> videos,
                          std::span<const std::size_t> labels, const ObjectiveOptions& options);

// argmax of P_S per video; no graph is recorded.
std::vector<std::size_t> predict(const Model& model, const PromptBank& bank, std::span<const FrameFeatures> videos);

std::size_t argmax(std::span<const double> values);

}  // namespace zsar
