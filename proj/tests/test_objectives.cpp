#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fairsad/objectives.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fairsad;

namespace {

Matrix column(std::initializer_list<double> values) {
    Matrix m(values.size(), 1);
    std::copy(values.begin(), values.end(), m.data().begin());
    return m;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            out(r, c) = a(r, c);
        }
        for (std::size_t c = 0; c < b.cols(); ++c) {
            out(r, a.cols() + c) = b(r, c);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("classification loss closed forms") {
    const std::vector<int> y{1, 1, 0};
    const std::vector<std::size_t> first{0};
    CHECK(classification_loss(Matrix(3, 1, 0.0), y, first) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(classification_loss(Matrix(3, 1, 30.0), y, first) < 1e-9);
    const std::vector<std::size_t> both{0, 1};
    CHECK(classification_loss(Matrix(3, 1, 0.0), y, both) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_WITH_AS(classification_loss(Matrix(3, 1, 0.0), y, {}),
                         doctest::Contains("empty training mask"), std::invalid_argument);

    ad::Tape t;
    const ad::NodeId l = classification_loss(t, t.constant(Matrix(3, 1, 0.0)), y, both);
    CHECK(t.scalar(l) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("dcov degenerate cases") {
    CHECK(dcov_squared(column({3, 3, 3, 3}), column({1, 5, 2, 8})) == 0.0);
    // Two points: the centered distance matrix is [[-1/2, 1/2], [1/2, -1/2]],
    // not zero, so the self-covariance is 4 * (1/4) / 4.
    CHECK(oracle::dcov_squared(column({0, 1}), column({0, 1})) == 0.25);
    CHECK(dcov_squared(column({0, 1}), column({0, 1})) == doctest::Approx(0.25).epsilon(1e-15));
    // The pair term of two-point channels is still 1.
    CHECK(distance_correlation(column({0, 1}), column({5, 9})) == doctest::Approx(1.0));
    CHECK_THROWS_WITH_AS(dcov_squared(column({1}), column({1})),
                         doctest::Contains("at least 2 rows"), std::invalid_argument);
}

TEST_CASE("dcov of a line against its squares matches the brute-force oracle") {
    const Matrix a = column({1, 2, 3, 4});
    const Matrix b = column({1, 4, 9, 16});
    const double expected = oracle::dcov_squared(a, b);
    // Frozen from an independent numpy computation: 65/16.
    CHECK(expected == doctest::Approx(4.0625).epsilon(1e-14));
    CHECK(std::abs(dcov_squared(a, b) - expected) < 1e-12);
}

TEST_CASE("distance correlation loss examples") {
    Rng rng(3);
    const Matrix z = testing::random_matrix(20, 3, rng);
    CHECK(distance_correlation_loss(z, 1) == 0.0);
    CHECK(distance_correlation_loss(hstack(z, z), 2) == doctest::Approx(1.0).epsilon(1e-12));
    Matrix affine = z;
    for (auto& v : affine.data()) {
        v = 3.0 * v + 5.0;
    }
    CHECK(distance_correlation_loss(hstack(z, affine), 2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(oracle::dcor_pair(z, affine) - 1.0) < 1e-12);

    // A constant channel trips the guard.
    CHECK(distance_correlation_loss(hstack(z, Matrix(20, 3, 0.7)), 2) == 0.0);
}

TEST_CASE("discriminator loss examples") {
    const std::vector<std::size_t> nodes{0, 1, 2};
    std::vector<Matrix> uniform(4, Matrix(3, 4, 0.0));
    CHECK(discriminator_loss(uniform, nodes) == doctest::Approx(4.0 * std::log(4.0)).epsilon(1e-14));
    CHECK(4.0 * std::log(4.0) == doctest::Approx(5.545).epsilon(1e-3));

    std::vector<Matrix> confident(4, Matrix(3, 4, 0.0));
    for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t r = 0; r < 3; ++r) {
            confident[k](r, k) = 50.0;
        }
    }
    CHECK(discriminator_loss(confident, nodes) < 1e-15);

    std::vector<Matrix> single(1, Matrix(3, 1, 0.3));
    CHECK(discriminator_loss(single, nodes) == 0.0);
    CHECK_THROWS_AS(discriminator_loss(uniform, {}), std::invalid_argument);
}

TEST_CASE("mask covariance loss examples") {
    const std::vector<int> s{0, 0, 1, 1};
    Matrix h(4, 3, 0.0);
    h(0, 1) = h(1, 1) = 1.0;
    CHECK(mask_covariance_loss(h, s) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(mask_covariance_loss(Matrix(4, 3, 2.5), s) == 0.0);
    const std::vector<int> one_group{1, 1, 1, 1};
    CHECK_THROWS_WITH_AS(mask_covariance_loss(h, one_group), doctest::Contains("single group"),
                         std::invalid_argument);
    // Restricting to a subset that still holds both groups.
    const std::vector<std::size_t> subset{0, 2};
    CHECK(mask_covariance_loss(h, s, subset) == doctest::Approx(0.25).epsilon(1e-15));
    const std::vector<std::size_t> one_side{0, 1};
    CHECK_THROWS_AS(mask_covariance_loss(h, s, one_side), std::invalid_argument);
}

TEST_CASE("a permuted copy of s is nearly uncorrelated with s") {
    // Monte-Carlo oracle: the covariance of s with a random permutation of s
    // has standard deviation about 0.25/sqrt(n) ~ 0.008 at n = 1000.
    Rng rng(17);
    std::vector<int> s(1000);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = i % 2 == 0 ? 1 : 0;
    }
    int failures = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> perm = s;
        for (std::size_t i = perm.size() - 1; i > 0; --i) {
            std::swap(perm[i], perm[rng.below(i + 1)]);
        }
        Matrix h(1000, 1);
        for (std::size_t i = 0; i < 1000; ++i) {
            h[i] = perm[i];
        }
        failures += mask_covariance_loss(h, s) < 0.05 ? 0 : 1;
    }
    CHECK(failures == 0);
}

TEST_CASE("total loss combination") {
    const LossBreakdown b = total_loss(1, 2, 3, 4, 0.1, 1.0);
    CHECK(b.total == doctest::Approx(5.5).epsilon(1e-15));
    CHECK(std::abs(b.total - (b.classification + b.alpha * (b.distance_correlation + b.discriminator) +
                              b.beta * b.mask)) < 1e-12);
    CHECK(total_loss(0.7, 2, 3, 4, 0.0, 0.0).total == 0.7);
    CHECK_THROWS_AS(total_loss(1, 1, 1, 1, -0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(total_loss(1, 1, 1, 1, 0.1, -1.0), std::invalid_argument);

    ad::Tape t;
    const auto c = [&](double v) { return t.constant(Matrix(1, 1, v)); };
    const LossNodes nodes = combine_losses(t, c(1), c(2), c(3), c(4), 0.1, 1.0);
    CHECK(t.scalar(nodes.total) == doctest::Approx(5.5).epsilon(1e-15));
}

TEST_CASE("tape builders agree with value-level losses") {
    Rng rng(21);
    const Matrix h = testing::random_matrix(30, 8, rng);
    std::vector<int> s(30);
    for (std::size_t i = 0; i < 30; ++i) {
        s[i] = static_cast<int>(rng.below(2));
    }
    s[0] = 0;
    s[1] = 1;
    ad::Tape t;
    const ad::NodeId x = t.constant(h);
    CHECK(std::abs(t.scalar(distance_correlation_loss(t, x, 4)) -
                   distance_correlation_loss(h, 4)) < 1e-12);
    CHECK(std::abs(t.scalar(mask_covariance_loss(t, x, s)) - mask_covariance_loss(h, s)) < 1e-14);
    CHECK(std::abs(t.scalar(dcov_squared(t, x, x)) - dcov_squared(h, h)) < 1e-12);
    CHECK(std::abs(t.scalar(dcov_squared_composite(t, x, x)) - dcov_squared(h, h)) < 1e-12);
}

TEST_CASE("dcov symmetry, nonnegativity and oracle equivalence") {
    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 2 + rng.below(63);
        const std::size_t w = 1 + rng.below(4);
        Matrix a = testing::random_matrix(n, w, rng, -2.0, 2.0);
        Matrix b = testing::random_matrix(n, w, rng, -2.0, 2.0);
        if (trial % 5 == 0) {
            // Coarse values force ties.
            for (auto& v : a.data()) {
                v = std::round(v);
            }
        }
        CHECK(dcov_squared(a, b) == dcov_squared(b, a));
        CHECK(dcov_squared(a, b) >= 0.0);
        CHECK(std::abs(dcov_squared(a, b) - oracle::dcov_squared(a, b)) < 1e-10);
        const double pair = distance_correlation(a, b);
        CHECK(pair >= -1e-9);
        CHECK(pair <= 1.0 + 1e-9);
        CHECK(std::abs(pair - oracle::dcor_pair(a, b)) < 1e-10);
    }
}

TEST_CASE("pair terms are invariant to positive affine maps") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5 + rng.below(40);
        const std::size_t w = 1 + rng.below(4);
        const Matrix a = testing::random_matrix(n, w, rng);
        const Matrix b = testing::random_matrix(n, w, rng);
        const double scale = rng.uniform(0.1, 10.0);
        Matrix moved = a;
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                moved(r, c) = scale * a(r, c) + static_cast<double>(c) - 3.0;
            }
        }
        CHECK(std::abs(distance_correlation(moved, b) - distance_correlation(a, b)) < 1e-9);
        CHECK(std::abs(distance_correlation(moved, a) - 1.0) < 1e-9);
    }
}

TEST_CASE("mask loss matches the covariance definition") {
    Rng rng(12);
    const Matrix h = testing::random_matrix(25, 6, rng);
    std::vector<int> s(25);
    for (std::size_t i = 0; i < 25; ++i) {
        s[i] = i < 10 ? 1 : 0;
    }
    double expected = 0.0;
    const double ms = 10.0 / 25.0;
    for (std::size_t c = 0; c < 6; ++c) {
        double mc = 0.0;
        for (std::size_t i = 0; i < 25; ++i) {
            mc += h(i, c) / 25.0;
        }
        double cov = 0.0;
        for (std::size_t i = 0; i < 25; ++i) {
            cov += (s[i] - ms) * (h(i, c) - mc) / 25.0;
        }
        expected += std::abs(cov);
        CHECK(std::abs(column_covariance_with(h, s)[c] - cov) < 1e-15);
    }
    CHECK(std::abs(mask_covariance_loss(h, s) - expected) < 1e-14);
}
