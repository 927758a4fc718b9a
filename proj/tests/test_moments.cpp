#include <catch2/catch_amalgamated.hpp>

#include "critstats/moments.hpp"
#include "critstats/rng.hpp"

using namespace critstats;

namespace {
const char* kModels[] = {"rwm", "bf", "mix:0.5"};
}

TEST_CASE("sigma_blocks radius guards", "[moments]") {
    const RadialKernel k = make_rwm();
    CHECK_THROWS_AS(sigma_blocks(k, 1e-4), RadiusTooSmall);
    CHECK_THROWS_AS(sigma_blocks(k, 0.0), RadiusTooSmall);
    // a polynomial "kernel" with a large r^8 term drives |alpha2| past 2
    CHECK_THROWS_AS(sigma_blocks(make_poly(0.3, 0.1, 1.0), 1.5), RadiusTooLarge);
    // unnormalized kernels are rejected
    CHECK_THROWS_AS(sigma_blocks(make_bessel_j0(), 0.1), Error);
}

TEST_CASE("exact entries agree with the series at small r", "[moments]") {
    for (const char* model : kModels) {
        const RadialKernel k = parse_model(model);
        const TaylorCoeffs c = taylor_coeffs(k);
        const BlockCovariance ex = sigma_blocks(k, 0.01);
        const BlockCovariance se = sigma_blocks_series(c, 0.01);
        CHECK(ex.alpha1 == Catch::Approx(se.alpha1).margin(1e-10));
        CHECK(ex.alpha2 == Catch::Approx(se.alpha2).margin(1e-10));
        CHECK(ex.beta1 == Catch::Approx(se.beta1).margin(1e-8));
        CHECK(ex.beta2 == Catch::Approx(se.beta2).margin(1e-8));
        CHECK(ex.gamma1 == Catch::Approx(se.gamma1).margin(1e-7));
        CHECK(ex.gamma2 == Catch::Approx(se.gamma2).margin(1e-7));
        CHECK(ex.gamma3 == Catch::Approx(se.gamma3).margin(1e-7));
    }
}

TEST_CASE("det A closed form equals the generic 4x4 determinant", "[moments]") {
    for (const char* model : kModels) {
        const RadialKernel k = parse_model(model);
        for (double r : {0.05, 0.1, 0.3, 0.5}) {
            const BlockCovariance b = sigma_blocks(k, r);
            // the oracle needs extended precision: near r = 0 the cofactor
            // expansion of the 4x4 cancels down to O(r^4)
            const long double generic =
                b.gradient_block().cast<long double>().determinant();
            CHECK(det_A(b) == Catch::Approx(static_cast<double>(generic)).epsilon(1e-12));
        }
    }
}

TEST_CASE("Sigma(r) is symmetric and Delta(r) PSD on (0, 0.5]", "[moments]") {
    for (const char* model : kModels) {
        const RadialKernel k = parse_model(model);
        for (double r : {0.01, 0.05, 0.1, 0.2, 0.35, 0.5}) {
            const BlockCovariance b = sigma_blocks(k, r);
            const auto sigma = b.assemble();
            CHECK((sigma - sigma.transpose()).norm() == 0.0);
            const Matrix6d delta = conditional_delta(b).assemble();
            Eigen::SelfAdjointEigenSolver<Matrix6d> solver(delta);
            CHECK(solver.eigenvalues()(0) >= -1e-9);
        }
    }
}

TEST_CASE("closed-form Delta matches the Schur complement", "[moments]") {
    for (const char* model : kModels) {
        const RadialKernel k = parse_model(model);
        for (double r : {0.05, 0.1, 0.3}) {
            const BlockCovariance b = sigma_blocks(k, r);
            const Matrix6d closed = conditional_delta(b).assemble();
            const Matrix6d schur = conditional_delta_schur(b);
            CHECK((closed - schur).norm() <= 1e-10 * schur.norm());
        }
    }
}

TEST_CASE("eigen system reconstructs Delta and matches a generic solver", "[moments]") {
    for (const char* model : kModels) {
        const RadialKernel k = parse_model(model);
        for (double r : {0.05, 0.1, 0.3}) {
            const ConditionalCovariance delta = conditional_delta(sigma_blocks(k, r));
            const Matrix6d dm = delta.assemble();
            const EigenSystem es = eigen_system(delta);
            CHECK_FALSE(es.generic_fallback);
            CHECK((es.reconstruct() - dm).norm() <= 1e-10 * dm.norm());

            Eigen::SelfAdjointEigenSolver<Matrix6d> solver(dm);
            std::array<double, 6> sorted = es.lambda;
            std::sort(sorted.begin(), sorted.end());
            for (int i = 0; i < 6; ++i)
                CHECK(std::abs(sorted[i] - solver.eigenvalues()(i)) <= 1e-10 * dm.norm());

            // column convention: unit norm, first nonzero component positive
            for (int j = 0; j < 6; ++j) {
                CHECK(es.Q.col(j).norm() == Catch::Approx(1.0).margin(1e-12));
                for (int i = 0; i < 6; ++i) {
                    if (std::abs(es.Q(i, j)) > 1e-14) {
                        CHECK(es.Q(i, j) > 0);
                        break;
                    }
                }
            }
        }
    }
}

TEST_CASE("bf at r = 0.2 has a strictly positive spectrum", "[moments]") {
    const EigenSystem es = eigen_system(conditional_delta(sigma_blocks(make_bargmann_fock(), 0.2)));
    for (double l : es.lambda) CHECK(l > 0);
}

TEST_CASE("degenerate off-diagonal falls back to the generic solver", "[moments]") {
    // a4 = a8 and a1+a4 symmetric: the closed-form eigenvector components are 0/0
    ConditionalCovariance d;
    d.r = 0.0;
    d.coeffs = taylor_coeffs(make_bargmann_fock());
    d.a = {1.0, 2.0, 3.0, 0.5, 0.2, 0.1, 0.3, 0.5};
    d.a[7] = d.a[3]; // A4m = 0
    const EigenSystem es = eigen_system(d);
    CHECK(es.generic_fallback);
    const Matrix6d dm = d.assemble();
    CHECK((es.reconstruct() - dm).norm() <= 1e-10 * dm.norm());
}

TEST_CASE("whitening reproduces Delta and rejects negative spectra", "[moments]") {
    for (const char* model : kModels) {
        const RadialKernel k = parse_model(model);
        for (double r : {0.1, 0.3}) {
            const ConditionalCovariance delta = conditional_delta(sigma_blocks(k, r));
            const Matrix6d dm = delta.assemble();
            const Matrix6d M = whitening(eigen_system(delta));
            CHECK((M * M.transpose() - dm).norm() <= 1e-9 * dm.norm());
        }
    }
    // the monochromatic kernel has an exactly singular Delta: eigenvalues that
    // are zero up to roundoff must be clamped, not rejected
    const ConditionalCovariance rwm = conditional_delta(sigma_blocks(make_rwm(), 0.1));
    CHECK_NOTHROW(whitening(eigen_system(rwm)));

    EigenSystem bad;
    bad.lambda = {-1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    CHECK_THROWS_AS(whitening(bad), NonPositiveEigenvalue);
}

TEST_CASE("sampled whitened vectors reproduce Delta entrywise", "[moments]") {
    const ConditionalCovariance delta = conditional_delta(sigma_blocks(make_bargmann_fock(), 0.2));
    const Matrix6d dm = delta.assemble();
    const Matrix6d M = whitening(eigen_system(delta));
    const std::size_t n = 100000;
    Matrix6d acc = Matrix6d::Zero();
    CounterRng rng(CounterRng::derive_key(42, 0));
    for (std::size_t s = 0; s < n; ++s) {
        Vector6d xi;
        for (int i = 0; i < 6; ++i) xi(i) = rng.next_gaussian();
        const Vector6d z = M * xi;
        acc += z * z.transpose();
    }
    acc /= static_cast<double>(n);
    // entrywise 4-standard-error band; var(z_i z_j) <= d_ii d_jj + d_ij^2
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            const double var = dm(i, i) * dm(j, j) + dm(i, j) * dm(i, j);
            const double se = std::sqrt(var / static_cast<double>(n));
            CHECK(std::abs(acc(i, j) - dm(i, j)) <= 4.0 * se + 1e-12);
        }
    }
}
