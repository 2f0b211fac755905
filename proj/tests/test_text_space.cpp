#include <doctest.h>

#include <cmath>

#include "zsar/errors.hpp"
#include "zsar/gradcheck.hpp"
#include "zsar/text_space.hpp"

using namespace zsar;

TEST_CASE("no context and no adapter returns the descriptions") {
    RngStream rng(1, 0);
    const Tensor desc = rng.normal_tensor({3, 8});
    PromptBankOptions o;
    o.context_length = 0;
    const PromptBank bank = make_prompt_bank(desc, o, rng);
    CHECK_FALSE(bank.context.defined());
    CHECK(encode_prompts(bank, nullptr).e_t.value() == desc);
    const DualAdapter zero = DualAdapter::zeros(8, 2);
    CHECK(encode_prompts(bank, &zero).e_t.value() == desc);
}

TEST_CASE("prompt bank surrogates") {
    RngStream rng(2, 0);
    const Tensor desc = rng.normal_tensor({4, 8});
    const PromptBank bank = make_prompt_bank(desc, {}, rng);
    CHECK(bank.context.shape() == Shape{4, 4, 8});
    for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t j = 0; j < 8; ++j) {
            double mean = desc.at(k, j);
            for (std::size_t t = 0; t < 4; ++t) mean += bank.context.value()[(k * 4 + t) * 8 + j];
            CHECK(bank.ref_embed.at(k, j) == doctest::Approx(mean / 5.0).epsilon(1e-14));
        }
        double dot_neg = 0.0;
        for (std::size_t j = 0; j < 8; ++j) dot_neg += desc.at(k, j) * bank.neg_desc_embed.at(k, j);
        CHECK(dot_neg < 0.0);
    }
    const DualAdapter zero = DualAdapter::zeros(8, 2);
    const ClassEmbeddings e = encode_prompts(bank, &zero);
    CHECK(e.e_t.value() == bank.ref_embed);
    CHECK(e.e_p.value() == e.e_t.value());
    const DualAdapter narrow = DualAdapter::zeros(4, 1);
    CHECK_THROWS_AS(encode_prompts(bank, &narrow), DimensionError);
}

TEST_CASE("zero class embedding is degenerate") {
    RngStream rng(3, 0);
    PromptBankOptions o;
    o.context_length = 0;
    CHECK_THROWS_AS(make_prompt_bank(Tensor::zeros({2, 4}), o, rng), DegenerateInputError);
}

TEST_CASE("context tokens receive correct gradients through the shared adapter") {
    RngStream rng(4, 0);
    PromptBankOptions o;
    o.context_length = 2;
    o.context_init_std = 0.5;
    const PromptBank bank = make_prompt_bank(rng.normal_tensor({3, 8}), o, rng);
    DualAdapter a = DualAdapter::zeros(8, 2);
    for (auto& p : a.parameters()) p.mutable_value() = rng.normal_tensor(p.shape(), 0.3);
    const ag::Var w = ag::constant(rng.normal_tensor({3, 8}));
    const auto f = [&] {
        const ClassEmbeddings e = encode_prompts(bank, &a);
        return ag::add(ag::sum(ag::mul(e.e_t, w)), ag::sum(ag::mul(e.e_n, e.e_n)));
    };
    std::vector<ag::Var> params{bank.context};
    CHECK(gradcheck::check_gradient("context", f, params).max_rel_error < 1e-4);
}

TEST_CASE("classification over cosines") {
    const Tensor classes = Tensor::matrix({{1, 0, 0}, {0, 2, 0}, {0, 0, 1}});
    const Tensor p = classify(Tensor::vector({0, 3, 0}), classes);
    CHECK(p[1] > p[0]);
    CHECK(p[1] > p[2]);

    RngStream rng(5, 0);
    const Tensor cls = rng.normal_tensor({3, 6});
    const Tensor e = rng.normal_tensor({6});
    const Tensor q = classify(e, cls);
    CHECK(classify(scale(e, 10.0), cls) == q);
    double z = 0.0;
    std::vector<double> cosines;
    for (std::size_t k = 0; k < 3; ++k) {
        double d = 0.0, ne = 0.0, nc = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            d += e[j] * cls.at(k, j);
            ne += e[j] * e[j];
            nc += cls.at(k, j) * cls.at(k, j);
        }
        cosines.push_back(d / std::sqrt(ne * nc));
        z += std::exp(cosines.back());
    }
    for (std::size_t k = 0; k < 3; ++k) CHECK(q[k] == doctest::Approx(std::exp(cosines[k]) / z).epsilon(1e-12));

    Tensor rescaled = cls;
    for (std::size_t j = 0; j < 6; ++j) rescaled.at(1, j) *= 7.5;
    const Tensor r = classify(e, rescaled);
    for (std::size_t k = 0; k < 3; ++k) CHECK(r[k] == doctest::Approx(q[k]).epsilon(1e-12));
    CHECK_THROWS_AS(classify(Tensor::zeros({6}), cls), DegenerateInputError);
}

TEST_CASE("class list parsing") {
    const auto entries = parse_class_list("# id, name, seed\n0, wave\n\n1, clap, 42\n 2 , jump rope , 7 \n");
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].name == "wave");
    CHECK(entries[0].description_seed == 0);
    CHECK(entries[1].description_seed == 42);
    CHECK(entries[2].name == "jump rope");
    CHECK_THROWS(parse_class_list("x, name\n"));
    CHECK_THROWS(parse_class_list("3\n"));
    CHECK_THROWS(load_class_list("/nonexistent/classes.txt"));
}
