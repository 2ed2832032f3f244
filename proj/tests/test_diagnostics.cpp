#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "soma/diagnostics.hpp"
#include "soma/svd.hpp"

using namespace soma;

TEST_CASE("smr of a zero update is zero") {
    std::mt19937_64 rng(1);
    Matrix w0 = oracle::random_matrix(8, 6, rng);
    SmrReport rep = smr(w0, Matrix(8, 6));
    REQUIRE(rep.values.size() == 6);
    for (double v : rep.values) CHECK(v == 0.0);
}

TEST_CASE("smr picks out a constructed single-direction update") {
    std::mt19937_64 rng(2);
    Matrix w0 = oracle::random_matrix(10, 7, rng);
    SvdFactors f = svd(w0);
    const double c = 0.37;
    Matrix dw(10, 7);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 7; ++j) dw(i, j) = c * f.u(i, 3) * f.vt(3, j);
    SmrReport rep = smr(w0, dw);
    for (std::size_t i = 0; i < rep.values.size(); ++i) {
        if (i == 3)
            CHECK(std::abs(rep.values[i] - c / f.sigma[3]) <= 1e-10);
        else
            CHECK(rep.values[i] <= 1e-10);
    }
}

TEST_CASE("smr of the base itself is all ones") {
    std::mt19937_64 rng(3);
    Matrix w0 = oracle::random_matrix(9, 9, rng);
    SmrReport rep = smr(w0, w0);
    for (double v : rep.values) CHECK(std::abs(v - 1.0) <= 1e-10);
}

TEST_CASE("smr excludes directions below the rank tolerance") {
    std::mt19937_64 rng(4);
    Matrix w0 = oracle::random_low_rank(8, 8, 3, rng);
    SmrReport rep = smr(w0, oracle::random_matrix(8, 8, rng));
    CHECK(rep.excluded == 5);
    CHECK(rep.values.size() == 3);
    for (double v : rep.values) CHECK(std::isfinite(v));
}

TEST_CASE("smr errors: shape mismatch and empty spectrum") {
    Matrix w0(4, 4);
    CHECK_THROWS_AS(smr(w0, Matrix(4, 4)), std::invalid_argument);  // all-zero base
    std::mt19937_64 rng(5);
    CHECK_THROWS_AS(smr(oracle::random_matrix(4, 4, rng), Matrix(4, 5)), std::invalid_argument);
}

TEST_CASE("smr properties: sign flip invariance and scale covariance") {
    std::mt19937_64 rng(6);
    Matrix w0 = oracle::random_matrix(7, 7, rng);
    Matrix dw = oracle::random_matrix(7, 7, rng);
    SmrReport base = smr(w0, dw);
    SmrReport flipped = smr(w0, dw * -1.0);
    SmrReport scaled = smr(w0, dw * 2.5);
    for (std::size_t i = 0; i < base.values.size(); ++i) {
        CHECK(flipped.values[i] == doctest::Approx(base.values[i]).epsilon(1e-14));
        CHECK(std::abs(scaled.values[i] - 2.5 * base.values[i]) <= 1e-12);
    }
}

TEST_CASE("group_smr hand cases and remainder policy") {
    CHECK(group_smr({1, 1, 2, 2}, 2) == std::vector<double>{1.0, 2.0});
    std::vector<double> constant(12, 0.5);
    for (double g : group_smr(constant, 4)) CHECK(g == doctest::Approx(0.5));
    // remainder absorbed by the last group: 7 values / 3 groups -> 2,2,3
    std::vector<double> v{1, 1, 2, 2, 3, 3, 3};
    CHECK(group_smr(v, 3) == std::vector<double>{1.0, 2.0, 3.0});
    CHECK_THROWS_AS(group_smr(v, 0), std::invalid_argument);
}

TEST_CASE("group_smr is permutation-invariant within each group slice") {
    std::vector<double> v{4, 2, 7, 1, 9, 5};
    std::vector<double> swapped{2, 4, 7, 1, 5, 9};  // swaps inside groups of 2
    CHECK(group_smr(v, 3) == group_smr(swapped, 3));
}

TEST_CASE("truncation_study evaluates each range and restores exactly") {
    std::mt19937_64 rng(7);
    Matrix w1 = oracle::random_matrix(6, 6, rng);
    Matrix w2 = oracle::random_matrix(6, 6, rng);
    const Matrix w1_before = w1, w2_before = w2;

    auto metric = [&] { return frobenius(w1) + frobenius(w2); };
    std::vector<ComponentRange> ranges{{0, 6}, {3, 6}, {0, 0}};
    TruncationStudy study = truncation_study({&w1, &w2}, ranges, metric);

    REQUIRE(study.metric_after.size() == 3);
    CHECK(study.metric_before == doctest::Approx(metric()));
    CHECK(study.metric_after[0] <= 1e-9);          // everything removed
    CHECK(study.metric_after[2] ==
          doctest::Approx(study.metric_before).epsilon(1e-12));  // empty range removes nothing
    CHECK(w1 == w1_before);  // bit-exact restore
    CHECK(w2 == w2_before);
}

TEST_CASE("truncation_study restores the weights when eval throws") {
    std::mt19937_64 rng(8);
    Matrix w = oracle::random_matrix(5, 5, rng);
    const Matrix before = w;
    int calls = 0;
    auto metric = [&]() -> double {
        if (++calls > 1) throw std::runtime_error("eval blew up");
        return 0.0;
    };
    CHECK_THROWS_AS(truncation_study({&w}, {{0, 5}}, metric), std::runtime_error);
    CHECK(w == before);
}

TEST_CASE("truncation_study with an empty range list gives metric_before only") {
    std::mt19937_64 rng(9);
    Matrix w = oracle::random_matrix(4, 4, rng);
    TruncationStudy study = truncation_study({&w}, {}, [&] { return frobenius(w); });
    CHECK(study.metric_after.empty());
    CHECK(study.metric_before == doctest::Approx(frobenius(w)));
}

TEST_CASE("truncation_study rejects out-of-range component indices") {
    std::mt19937_64 rng(10);
    Matrix w = oracle::random_matrix(4, 4, rng);
    CHECK_THROWS_AS(truncation_study({&w}, {{0, 5}}, [] { return 0.0; }),
                    std::invalid_argument);
}
