#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zsar/autograd.hpp"
#include "zsar/backbone.hpp"
#include "zsar/rng.hpp"
#include "zsar/tensor.hpp"

namespace zsar {

// Learnable context tokens plus frozen per-class description surrogates.
// desc_embed, neg_desc_embed and ref_embed are plain tensors: nothing in the
// training loop can write to them.
struct PromptBank {
    ag::Var context;        // K x M x D, undefined when M == 0
    std::size_t context_length = 0;
    Tensor desc_embed;      // K x D
    Tensor neg_desc_embed;  // K x D
    Tensor ref_embed;       // K x D frozen reference class embeddings

    std::size_t classes() const { return desc_embed.dim(0); }
    std::size_t dim() const { return desc_embed.dim(1); }
};

struct PromptBankOptions {
    std::size_t context_length = 4;
    double context_init_std = 0.02;
    double negative_noise_std = 0.1;
};

// Context tokens ~ N(0, context_init_std); neg_desc = -desc + N(0,
// negative_noise_std); ref_embed is the encoding of the initial bank with no
// adapter.
PromptBank make_prompt_bank(const Tensor& desc_embed, const PromptBankOptions& options, RngStream& rng);

struct ClassEmbeddings {
    ag::Var e_t;  // K x D positive class embeddings
    ag::Var e_n;  // K x D negative class embeddings
    ag::Var e_p;  // K x D projected positive embeddings (the same node as e_t)
};

// Each class runs [p_k^1 .. p_k^M, desc_k] (or the negative description)
// through the optional shared adapter and averages the tokens. Throws
// DegenerateInputError when a resulting embedding has zero norm.
ClassEmbeddings encode_prompts(const PromptBank& bank, const DualAdapter* adapter);

// softmax over cosine similarities: [B x D] x [K x D] -> [B x K].
ag::Var classify(const ag::Var& e_v, const ag::Var& class_embeds);
// Single video: e_v [D] -> probabilities [K].
Tensor classify(const Tensor& e_v, const Tensor& class_embeds);

// One line per class: "id, name[, description seed]". Blank lines and lines
// starting with '#' are skipped. The seed defaults to the id.
struct ClassEntry {
    std::size_t id = 0;
    std::string name;
    std::uint64_t description_seed = 0;
};
std::vector<ClassEntry> parse_class_list(const std::string& text);
std::vector<ClassEntry> load_class_list(const std::filesystem::path& path);

}  // namespace zsar
