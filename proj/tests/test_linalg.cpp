#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "soma/matrix.hpp"
#include "soma/svd.hpp"

using namespace soma;

namespace {

double orthonormality_error(const Matrix& q_cols) {
    // ||Q^T Q - I||_F for column-orthonormal Q
    const Matrix g = matmul(q_cols.transposed(), q_cols);
    Matrix eye = Matrix::identity(g.rows());
    return frobenius(g - eye);
}

double reconstruction_error(const SvdFactors& f, const Matrix& w) {
    return frobenius(reconstruct(f, {0, f.k()}) - w);
}

}  // namespace

TEST_CASE("matrix construction rejects bad input") {
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(Matrix(1, 1, {std::numeric_limits<double>::infinity()}),
                    std::invalid_argument);
}

TEST_CASE("matmul identity and hand cases") {
    Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
    CHECK(matmul(Matrix::identity(3), m) == m);

    Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    Matrix b = Matrix::from_rows({{0}, {1}});
    Matrix c = matmul(a, b);
    CHECK(c(0, 0) == 2.0);
    CHECK(c(1, 0) == 4.0);

    CHECK_THROWS_AS(matmul(a, Matrix(3, 1)), std::invalid_argument);
}

TEST_CASE("matmul matches triple-loop oracle") {
    std::mt19937_64 rng(42);
    Matrix a = oracle::random_matrix(7, 5, rng);
    Matrix b = oracle::random_matrix(5, 3, rng);
    CHECK(max_abs_diff(matmul(a, b), oracle::matmul_naive(a, b)) < 1e-12);
}

TEST_CASE("frobenius hand values") {
    CHECK(frobenius(Matrix::identity(4)) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(frobenius(Matrix(3, 5)) == 0.0);
    CHECK(frobenius(Matrix::from_rows({{3, 4}})) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("svd of a diagonal matrix") {
    Matrix w = Matrix::from_rows({{3, 0, 0}, {0, 2, 0}, {0, 0, 1}});
    SvdFactors f = svd(w);
    REQUIRE(f.k() == 3);
    CHECK(f.sigma[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(f.sigma[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(f.sigma[2] == doctest::Approx(1.0).epsilon(1e-14));
    // identity up to the sign convention, which makes every pivot positive
    CHECK(max_abs_diff(f.u, Matrix::identity(3)) < 1e-14);
    CHECK(max_abs_diff(f.vt, Matrix::identity(3)) < 1e-14);
}

TEST_CASE("svd of the zero matrix") {
    Matrix w(4, 6);
    SvdFactors f = svd(w);
    REQUIRE(f.k() == 4);
    for (double s : f.sigma) CHECK(s == 0.0);
    CHECK(orthonormality_error(f.u) < 1e-12);
    CHECK(orthonormality_error(f.vt.transposed()) < 1e-12);
    CHECK(f.numerical_rank() == 0);
}

TEST_CASE("svd random 32x48 against the Gram eigen-oracle") {
    std::mt19937_64 rng(7);
    Matrix w = oracle::random_matrix(32, 48, rng);
    SvdFactors f = svd(w);
    CHECK(reconstruction_error(f, w) <= 1e-10 * frobenius(w));
    std::vector<double> expected = oracle::singular_values_via_gram(w);
    REQUIRE(expected.size() == f.k());
    for (std::size_t i = 0; i < f.k(); ++i) {
        CHECK(std::abs(f.sigma[i] - expected[i]) <= 1e-8 * std::max(1.0, expected[i]));
    }
}

TEST_CASE("svd invariants over random shapes, incl. rank-deficient") {
    std::mt19937_64 rng(123);
    for (int c = 0; c < 60; ++c) {
        const std::size_t m = 1 + rng() % 40;
        const std::size_t n = 1 + rng() % 40;
        const std::size_t k = std::min(m, n);
        Matrix w = (c % 4 == 0 && k > 1)
                       ? oracle::random_low_rank(m, n, 1 + rng() % k, rng)
                       : oracle::random_matrix(m, n, rng, 2.0);
        SvdFactors f = svd(w);
        const double sqrt_k = std::sqrt(static_cast<double>(k));
        CHECK(orthonormality_error(f.u) <= 1e-10 * sqrt_k);
        CHECK(orthonormality_error(f.vt.transposed()) <= 1e-10 * sqrt_k);
        for (std::size_t i = 0; i + 1 < f.k(); ++i) CHECK(f.sigma[i] >= f.sigma[i + 1]);
        for (double s : f.sigma) CHECK(s >= 0.0);
        CHECK(reconstruction_error(f, w) <= 1e-10 * std::max(1.0, frobenius(w)));
    }
}

TEST_CASE("svd determinism: identical bytes in, identical factors out") {
    std::mt19937_64 rng(5);
    Matrix w = oracle::random_matrix(17, 11, rng);
    SvdFactors f1 = svd(w);
    SvdFactors f2 = svd(w);
    CHECK(f1.u == f2.u);
    CHECK(f1.sigma == f2.sigma);
    CHECK(f1.vt == f2.vt);
}

TEST_CASE("svd rejects bad input") {
    CHECK_THROWS_AS(svd(Matrix()), std::invalid_argument);
}

TEST_CASE("reconstruct: full range, adjacent split, invalid range") {
    std::mt19937_64 rng(9);
    Matrix w = oracle::random_matrix(10, 8, rng);
    SvdFactors f = svd(w);
    const std::size_t k = f.k();

    CHECK(frobenius(reconstruct(f, {0, k}) - w) <= 1e-10 * frobenius(w));
    for (std::size_t j = 0; j <= k; ++j) {
        Matrix sum = reconstruct(f, {0, j}) + reconstruct(f, {j, k});
        CHECK(frobenius(sum - w) <= 1e-10 * frobenius(w));
    }
    CHECK_THROWS_AS(reconstruct(f, {0, k + 1}), std::invalid_argument);
    CHECK_THROWS_AS(reconstruct(f, {5, 2}), std::invalid_argument);
}

TEST_CASE("Eckart-Young: top-r truncation error equals the sigma tail") {
    std::mt19937_64 rng(21);
    Matrix w = oracle::random_matrix(12, 9, rng);
    SvdFactors f = svd(w);
    for (std::size_t r = 1; r < f.k(); ++r) {
        const double err = frobenius(w - reconstruct(f, {0, r}));
        double tail = 0.0;
        for (std::size_t i = r; i < f.k(); ++i) tail += f.sigma[i] * f.sigma[i];
        tail = std::sqrt(tail);
        CHECK(std::abs(err - tail) <= 1e-8 * std::max(1.0, tail));
    }
}

TEST_CASE("Eckart-Young: rank-r truncation beats random rank-r competitors") {
    std::mt19937_64 rng(33);
    for (int c = 0; c < 10; ++c) {
        const std::size_t m = 5 + rng() % 10, n = 5 + rng() % 10;
        Matrix w = oracle::random_matrix(m, n, rng);
        SvdFactors f = svd(w);
        const std::size_t r = 1 + rng() % (f.k() - 1);
        const double best = frobenius(w - reconstruct(f, {0, r}));
        for (int p = 0; p < 20; ++p) {
            Matrix comp = oracle::random_low_rank(m, n, r, rng);
            CHECK(best <= frobenius(w - comp) + 1e-9);
        }
    }
}
