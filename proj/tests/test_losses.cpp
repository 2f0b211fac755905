#include <doctest.h>

#include <cmath>
#include <vector>

#include "zsar/errors.hpp"
#include "zsar/gradcheck.hpp"
#include "zsar/losses.hpp"
#include "zsar/text_space.hpp"

using namespace zsar;

namespace {

double cosine(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        d += a.at(i, c) * b.at(j, c);
        na += a.at(i, c) * a.at(i, c);
        nb += b.at(j, c) * b.at(j, c);
    }
    return d / std::sqrt(na * nb);
}

// -log(exp(pos) / sum exp(all)) with pos = all[0]
double nll_first(const std::vector<double>& logits) {
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    return -(logits[0] - std::log(z));
}

double infonce_oracle(const Tensor& ev, const Tensor& et, const std::vector<std::size_t>& y, double tau) {
    const std::size_t b = ev.rows(), k = et.rows();
    double v2t = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        std::vector<double> row{cosine(ev, i, et, y[i]) / tau};
        for (std::size_t j = 0; j < k; ++j)
            if (j != y[i]) row.push_back(cosine(ev, i, et, j) / tau);
        v2t += nll_first(row) / b;
    }
    double t2v = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < b; ++i) {
            if (y[i] != c) continue;
            std::vector<double> row{cosine(ev, i, et, c) / tau};
            for (std::size_t n = 0; n < b; ++n)
                if (y[n] != c) row.push_back(cosine(ev, n, et, c) / tau);
            sum += nll_first(row);
            ++count;
        }
        if (count == 0) continue;
        t2v += sum / count;
        ++present;
    }
    return 0.5 * (v2t + t2v / present);
}

}  // namespace

TEST_CASE("seen cross-entropy") {
    const std::vector<std::size_t> y{1, 0};
    CHECK(losses::ce_seen(ag::constant(Tensor::matrix({{0, 1}, {1, 0}})), y).value().item() == 0.0);
    const std::vector<std::size_t> y4{2};
    CHECK(losses::ce_seen(ag::constant(Tensor::filled({1, 4}, 0.25)), y4).value().item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-15));

    RngStream rng(1, 0);
    const Tensor p = softmax(rng.normal_tensor({5, 3}));
    const std::vector<std::size_t> labels{0, 2, 1, 1, 0};
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i) want -= std::log(p.at(i, labels[i])) / 5.0;
    CHECK(losses::ce_seen(ag::constant(p), labels).value().item() == doctest::Approx(want).epsilon(1e-12));
    const std::vector<std::size_t> bad{0, 3, 1, 1, 0};
    CHECK_THROWS_AS(losses::ce_seen(ag::constant(p), bad), IndexError);
}

TEST_CASE("contrastive loss") {
    const std::vector<std::size_t> one{0};
    CHECK(losses::contrastive_seen(ag::constant(Tensor::matrix({{1, 2}})), ag::constant(Tensor::matrix({{3, -1}})), one, 0.07)
              .value()
              .item() == 0.0);

    const Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const std::vector<std::size_t> y3{0, 1, 2};
    const double sharp = losses::contrastive_seen(ag::constant(eye), ag::constant(eye), y3, 0.01).value().item();
    const double soft = losses::contrastive_seen(ag::constant(eye), ag::constant(eye), y3, 0.5).value().item();
    CHECK(sharp < 1e-40);
    CHECK(soft > sharp);

    RngStream rng(2, 0);
    const Tensor ev = rng.normal_tensor({4, 5});
    const Tensor et = rng.normal_tensor({3, 5});
    const std::vector<std::size_t> y{2, 0, 2, 1};
    CHECK(losses::contrastive_seen(ag::constant(ev), ag::constant(et), y, 0.07).value().item() ==
          doctest::Approx(infonce_oracle(ev, et, y, 0.07)).epsilon(1e-10));
    CHECK_THROWS_AS(losses::contrastive_seen(ag::constant(ev), ag::constant(et), y, 0.0), ParameterError);
}

TEST_CASE("clip consistency") {
    const Tensor ref = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const std::vector<std::size_t> y{0, 1, 2};
    CHECK(losses::clip_consistency(ag::constant(ref), ref, y).value().item() < std::log(3.0));
    RngStream rng(3, 0);
    const Tensor ev = rng.normal_tensor({3, 3});
    CHECK(losses::clip_consistency(ag::constant(ev), Tensor::filled({3, 3}, 0.4), y).value().item() ==
          doctest::Approx(std::log(3.0)).epsilon(1e-15));

    const Tensor r = rng.normal_tensor({3, 3});
    double want = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> row{cosine(ev, i, r, y[i])};
        for (std::size_t j = 0; j < 3; ++j)
            if (j != y[i]) row.push_back(cosine(ev, i, r, j));
        want += nll_first(row) / 3.0;
    }
    CHECK(losses::clip_consistency(ag::constant(ev), r, y).value().item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("projection loss") {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    CHECK(losses::projection_loss(ag::constant(a), a).value().item() == 0.0);
    CHECK(losses::projection_loss(ag::constant(Tensor::matrix({{4, 6}})), Tensor::matrix({{1, 2}})).value().item() == 25.0);
    CHECK_THROWS_AS(losses::projection_loss(ag::constant(a), Tensor::zeros({2, 3})), DimensionError);

    RngStream rng(4, 0);
    const ag::Var e = ag::parameter(rng.normal_tensor({3, 4}));
    const Tensor anchor = rng.normal_tensor({3, 4});
    ag::backward(losses::projection_loss(e, anchor));
    for (std::size_t i = 0; i < 12; ++i) CHECK(e.grad()[i] == doctest::Approx(2.0 * (e.value()[i] - anchor[i]) / 3.0));
    std::vector<ag::Var> params{e};
    CHECK(gradcheck::check_gradient("proj", [&] { return losses::projection_loss(e, anchor); }, params).max_rel_error <
          1e-4);
}

TEST_CASE("negative prompt loss") {
    const std::vector<std::size_t> y0{0};
    CHECK(losses::negative_prompt_loss(ag::constant(Tensor::matrix({{0, 1}})), y0).value().item() == 0.0);
    for (std::size_t y = 0; y < 4; ++y) {
        const std::vector<std::size_t> lab{y};
        CHECK(losses::negative_prompt_loss(ag::constant(Tensor::filled({1, 4}, 0.25)), lab).value().item() ==
              doctest::Approx(-3.0 * (1.0 / 3.0) * std::log(0.25)).epsilon(1e-15));
    }
    const std::vector<std::size_t> y1{1};
    CHECK(losses::negative_prompt_loss(ag::constant(Tensor::matrix({{0.01, 0.97, 0.01, 0.01}})), y1).value().item() >
          std::log(4.0));
    CHECK_THROWS_AS(losses::negative_prompt_loss(ag::constant(Tensor::matrix({{1.0}})), y0), DegenerateInputError);

    // Grid search over K=3 distributions: the complementary-uniform target is the minimum.
    const std::vector<std::size_t> y2{2};
    double best = 1e300;
    double best_a = -1, best_b = -1;
    for (int i = 1; i < 100; ++i) {
        for (int j = 1; i + j < 100; ++j) {
            const double a = i / 100.0, b = j / 100.0;
            const double l = losses::negative_prompt_loss(ag::constant(Tensor::matrix({{a, b, 1 - a - b}})), y2).value().item();
            if (l < best) best = l, best_a = a, best_b = b;
        }
    }
    CHECK(best_a == doctest::Approx(0.495).epsilon(0.02));
    CHECK(best_b == doctest::Approx(0.495).epsilon(0.02));
}

TEST_CASE("total loss") {
    const losses::LossBreakdown zero = losses::total_loss(0, 0, 0, 0, 0, 0.1);
    CHECK(zero.total == 0.0);
    const losses::LossBreakdown no_neg = losses::total_loss(1.5, 0.25, 2.0, 0.125, 9.0, 0.0);
    CHECK(no_neg.total == 1.5 + 0.25 + 2.0 + 0.125);
    RngStream rng(5, 0);
    for (int i = 0; i < 20; ++i) {
        const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform(), e = rng.uniform();
        CHECK(std::abs(losses::total_loss(a, b, c, d, e, 0.1).total - (a + b + c + d + 0.1 * e)) <= 1e-15);
    }
    CHECK(losses::total_loss(1, 1, 1, 1, 1, 0.1).lambda_n == 0.1);
    CHECK(losses::kDefaultLambdaNegative == 0.1);
    CHECK_THROWS_AS(losses::total_loss(0, 0, 0, 0, 0, -0.1), ParameterError);
}
