#include <doctest.h>

#include <cmath>

#include "zsar/errors.hpp"
#include "zsar/numerics.hpp"
#include "zsar/rng.hpp"

using namespace zsar;

TEST_CASE("matmul by identity and by hand") {
    const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
    const Tensor a = Tensor::matrix({{1.5, -2}, {0.25, 7}});
    CHECK(matmul(eye, a) == a);
    CHECK(matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}})) == Tensor::matrix({{2}, {4}}));
}

TEST_CASE("matmul matches a triple loop") {
    RngStream rng(3, 0);
    const Tensor a = rng.normal_tensor({5, 7});
    const Tensor b = rng.normal_tensor({7, 3});
    const Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{5, 3});
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 7; ++k) acc += a.at(i, k) * b.at(k, j);
            CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
    CHECK_THROWS_AS(matmul(Tensor::vector({1, 2}), Tensor::matrix({{1}, {2}})), DimensionError);
}

TEST_CASE("layer_norm") {
    const Tensor ones = Tensor::filled({4}, 1.0);
    const Tensor zeros = Tensor::zeros({4});
    const Tensor flat = layer_norm(Tensor::filled({1, 4}, 3.2), ones, zeros);
    for (double v : flat.data()) CHECK(v == 0.0);

    const Tensor two = layer_norm(Tensor::matrix({{1, 3}}), Tensor::filled({2}, 1.0), Tensor::zeros({2}), 1e-300);
    CHECK(two.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(two.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(layer_norm(Tensor::matrix({{1, 3}}), Tensor::filled({2}, 1.0), Tensor::zeros({2}), 0.0), ParameterError);

    RngStream rng(5, 0);
    const Tensor x = rng.normal_tensor({4, 8}, 3.0);
    const Tensor y = layer_norm(x, Tensor::filled({8}, 1.0), Tensor::zeros({8}));
    for (std::size_t r = 0; r < 4; ++r) {
        double mu = 0.0, var = 0.0;
        for (double v : y.row(r)) mu += v / 8.0;
        for (double v : y.row(r)) var += (v - mu) * (v - mu) / 8.0;
        CHECK(std::abs(mu) < 1e-10);
        CHECK(std::abs(var - 1.0) < 1e-5);
    }
}

TEST_CASE("softmax") {
    const Tensor uniform = softmax(Tensor::vector({0, 0, 0}));
    for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
    const Tensor big = softmax(Tensor::vector({1000, 0}));
    CHECK(big.all_finite());
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] < 1e-300);
    RngStream rng(7, 0);
    double s = 0.0;
    const Tensor p = softmax(rng.normal_tensor({5}, 4.0));
    for (double v : p.data()) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
}

TEST_CASE("cosine similarity") {
    const Tensor a = Tensor::vector({1, 2, -3});
    const Tensor b = Tensor::vector({0.5, -1, 4});
    CHECK(cosine_sim(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine_sim(Tensor::vector({1, 0}), Tensor::vector({0, 1})) == 0.0);
    CHECK(std::abs(cosine_sim(scale(a, 2.0), b) - cosine_sim(a, b)) < 1e-12);
    CHECK_THROWS_AS(cosine_sim(a, Tensor::zeros({3})), DegenerateInputError);
}

TEST_CASE("activations") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(tanh(Tensor::vector({0}))[0] == 0.0);
    for (double x : {-7.0, -0.3, 0.9, 12.0}) CHECK(std::abs(sigmoid(-x) - (1.0 - sigmoid(x))) < 1e-12);
    const Tensor sat = tanh(Tensor::vector({50, -50}));
    CHECK(sat[0] == 1.0);
    CHECK(sat[1] == -1.0);
    CHECK(sigmoid(Tensor::vector({800, -800})).all_finite());
}

TEST_CASE("shape mismatch is an error") {
    CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
    CHECK_THROWS_AS(Tensor::zeros({2, 3}).reshaped({4}), DimensionError);
}

TEST_CASE("rng streams are pure functions of seed and id") {
    RngStream a(11, 4), b(11, 4), c(11, 5);
    const Tensor ta = a.normal_tensor({16});
    CHECK(ta == b.normal_tensor({16}));
    CHECK_FALSE(ta == c.normal_tensor({16}));
    RngStream p(11, 4);
    RngStream s1 = p.split(2);
    p.normal_tensor({100});
    CHECK(p.split(2).normal_tensor({4}) == s1.normal_tensor({4}));
    RngStream u(1, 1);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform_open();
        CHECK((x > 0.0 && x < 1.0));
    }
}

TEST_CASE("column mean") {
    const Tensor m = column_mean(Tensor::matrix({{1, 2}, {3, 6}}));
    CHECK(m == Tensor::vector({2, 4}));
    const Tensor same = column_mean(Tensor::matrix({{0.1, -0.7}, {0.1, -0.7}, {0.1, -0.7}}));
    CHECK(same == Tensor::vector({0.1, -0.7}));
    RngStream rng(8, 0);
    const Tensor x = rng.normal_tensor({5, 3});
    const Tensor y = column_mean(x);
    for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (std::size_t r = 0; r < 5; ++r) acc += x.at(r, j);
        CHECK(y[j] == doctest::Approx(acc / 5.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(column_mean(Tensor::vector({1, 2})), DimensionError);
}
