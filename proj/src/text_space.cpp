#include "zsar/text_space.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "zsar/errors.hpp"

namespace zsar {

namespace {

// Every class becomes the token run [p_k^1 .. p_k^M, desc_k]; all runs go
// through the adapter together with attention confined to each run.
ag::Var encode_all(const PromptBank& bank, const Tensor& descriptions, const DualAdapter* adapter) {
    const std::size_t k = bank.classes(), d = bank.dim(), m = bank.context_length;
    ag::Var tokens = ag::constant(descriptions);
    if (m > 0) {
        const std::array<ag::Var, 2> parts{ag::reshape(bank.context, {k * m, d}), tokens};
        std::vector<std::size_t> order;
        order.reserve(k * (m + 1));
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t j = 0; j < m; ++j) order.push_back(c * m + j);
            order.push_back(k * m + c);
        }
        tokens = ag::gather_rows(ag::concat_rows(parts), order);
    }
    if (adapter) tokens = apply_dual_adapter(*adapter, tokens, m + 1);
    ag::Var out = ag::mean_row_groups(tokens, m + 1);
    for (std::size_t c = 0; c < k; ++c) {
        if (l2_norm(out.value().row(c)) == 0.0) {
            throw DegenerateInputError(fmt::format("encode_prompts: class {} embedding has zero norm", c));
        }
    }
    return out;
}

std::string trim(std::string s) {
    auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

}  // namespace

PromptBank make_prompt_bank(const Tensor& desc_embed, const PromptBankOptions& options, RngStream& rng) {
    if (desc_embed.rank() != 2) throw DimensionError("make_prompt_bank: descriptions must be K x D");
    const std::size_t k = desc_embed.dim(0), d = desc_embed.dim(1);
    PromptBank bank;
    bank.context_length = options.context_length;
    bank.desc_embed = desc_embed;
    if (options.context_length > 0) {
        bank.context = ag::parameter(rng.normal_tensor({k, options.context_length, d}, options.context_init_std));
    }
    bank.neg_desc_embed = Tensor(desc_embed.shape());
    for (std::size_t i = 0; i < desc_embed.size(); ++i) {
        bank.neg_desc_embed[i] = -desc_embed[i] + rng.normal(0.0, options.negative_noise_std);
    }
    ag::NoGradGuard guard;
    bank.ref_embed = encode_all(bank, bank.desc_embed, nullptr).value();
    return bank;
}

ClassEmbeddings encode_prompts(const PromptBank& bank, const DualAdapter* adapter) {
    if (adapter && adapter->dim != bank.dim()) {
        throw DimensionError(fmt::format("encode_prompts: adapter dim {} vs prompt dim {}", adapter->dim, bank.dim()));
    }
    ClassEmbeddings out;
    out.e_t = encode_all(bank, bank.desc_embed, adapter);
    out.e_n = encode_all(bank, bank.neg_desc_embed, adapter);
    out.e_p = out.e_t;
    return out;
}

ag::Var classify(const ag::Var& e_v, const ag::Var& class_embeds) {
    return ag::softmax(ag::cosine_matrix(e_v, class_embeds));
}

Tensor classify(const Tensor& e_v, const Tensor& class_embeds) {
    ag::NoGradGuard guard;
    const Tensor row = e_v.reshaped({1, e_v.size()});
    const Tensor p = classify(ag::constant(row), ag::constant(class_embeds)).value();
    return p.reshaped({p.size()});
}

std::vector<ClassEntry> parse_class_list(const std::string& text) {
    std::vector<ClassEntry> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(trim(field));
        if (fields.size() < 2 || fields.size() > 3 || fields[1].empty()) {
            throw std::invalid_argument(fmt::format("class list line {}: expected 'id, name[, seed]'", lineno));
        }
        ClassEntry e;
        try {
            e.id = std::stoull(fields[0]);
            e.description_seed = fields.size() == 3 ? std::stoull(fields[2]) : e.id;
        } catch (const std::logic_error&) {
            throw std::invalid_argument(fmt::format("class list line {}: id and seed must be integers", lineno));
        }
        e.name = fields[1];
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<ClassEntry> load_class_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open class list " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_class_list(ss.str());
}

}  // namespace zsar
