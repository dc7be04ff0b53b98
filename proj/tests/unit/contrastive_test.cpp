#include "test_support.hpp"

#include "verigrag/contrastive.hpp"
#include "verigrag/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace verigrag;
using contrastive::info_nce;

namespace {

double loss(const Matrix& a, const Matrix& b, double tau) {
    ag::NoGradGuard guard;
    return info_nce(ag::constant(a), ag::constant(b), tau).item();
}

}  // namespace

TEST_SUITE("contrastive") {
    TEST_CASE("two orthonormal pairs at unit temperature") {
        const Matrix eye = Matrix::Identity(2, 2);
        CHECK(loss(eye, eye, 1.0) == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
        CHECK(loss(eye, eye, 1.0) == doctest::Approx(0.313262).epsilon(1e-5));
    }

    TEST_CASE("matches the loop reference on random batches") {
        std::mt19937_64 rng(3);
        for (int t = 0; t < 20; ++t) {
            const Matrix a = nn::normal_matrix(5, 6, 1.0, rng);
            const Matrix b = nn::normal_matrix(5, 6, 1.0, rng);
            CHECK(loss(a, b, 0.3) == doctest::Approx(testing::info_nce_reference(a, b, 0.3)).epsilon(1e-10));
        }
    }

    TEST_CASE("a single pair has zero loss") {
        std::mt19937_64 rng(4);
        CHECK(loss(nn::normal_matrix(1, 3, 1.0, rng), nn::normal_matrix(1, 3, 1.0, rng), 0.5) == 0.0);
    }

    TEST_CASE("sharp temperature on aligned orthogonal rows vanishes") {
        const Matrix eye = Matrix::Identity(4, 4);
        CHECK(loss(eye, eye, 0.01) < 1e-3);
    }

    TEST_CASE("loss is bounded by ln B + 2 / tau") {
        std::mt19937_64 rng(8);
        for (int t = 0; t < 50; ++t) {
            const Matrix a = nn::normal_matrix(6, 4, 1.0, rng);
            const Matrix b = -a + 0.1 * nn::normal_matrix(6, 4, 1.0, rng);
            const double tau = 0.05 + 0.1 * t / 50.0;
            const double l = loss(a, b, tau);
            CHECK(l >= 0.0);
            CHECK(l <= std::log(6.0) + 2.0 / tau);
        }
    }

    TEST_CASE("gradients match finite differences") {
        std::mt19937_64 rng(9);
        const Matrix a = nn::normal_matrix(3, 4, 1.0, rng);
        const Matrix b = nn::normal_matrix(3, 4, 1.0, rng);
        CHECK(testing::gradient_check([&](const ag::Tensor& t) { return info_nce(t, ag::constant(b), 0.5); }, a) <
              1e-3);
        CHECK(testing::gradient_check([&](const ag::Tensor& t) { return info_nce(ag::constant(a), t, 0.5); }, b) <
              1e-3);
    }

    TEST_CASE("invalid inputs") {
        const Matrix eye = Matrix::Identity(2, 2);
        CHECK_THROWS_AS(loss(eye, eye, 0.0), DomainError);
        CHECK_THROWS_AS(loss(eye, eye, -1.0), DomainError);
        Matrix nan = eye;
        nan(0, 0) = std::nan("");
        CHECK_THROWS_AS(loss(nan, eye, 1.0), DomainError);
        CHECK_THROWS_AS(loss(eye, Matrix::Identity(3, 3), 1.0), ShapeError);
        Matrix zero = eye;
        zero.row(1).setZero();
        CHECK_THROWS_AS(loss(zero, eye, 1.0), DegenerateInput);
    }

    TEST_CASE("the symmetric form averages both directions") {
        std::mt19937_64 rng(10);
        const Matrix s = nn::normal_matrix(4, 4, 1.0, rng);
        ag::NoGradGuard guard;
        const double row = contrastive::info_nce_from_similarity(ag::constant(s), 0.7).item();
        const double col = contrastive::info_nce_from_similarity(ag::constant(Matrix(s.transpose())), 0.7).item();
        CHECK(contrastive::symmetric_info_nce_from_similarity(ag::constant(s), 0.7).item() ==
              doctest::Approx(0.5 * (row + col)).epsilon(1e-12));
    }
}
