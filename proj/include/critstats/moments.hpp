#ifndef CRITSTATS_MOMENTS_HPP
#define CRITSTATS_MOMENTS_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "critstats/errors.hpp"
#include "critstats/kernels.hpp"

namespace critstats {

// Below this radius 4 - alpha_i^2 and the a_i cancel catastrophically in
// double precision; use the series forms instead.
inline constexpr double kRadiusMin = 1e-3;

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

// Joint covariance of (grad F(x), grad F(y), hess F(x), hess F(y)) at
// x = (0,0), y = (0,r), as structured blocks. Hessians are vectorized as
// (F11, F12, F22).
struct BlockCovariance {
    double r = 0.0;
    TaylorCoeffs coeffs;
    double alpha1 = 0.0, alpha2 = 0.0; // diagonal of the cross gradient block A(r)
    double beta1 = 0.0, beta2 = 0.0;   // entries of B(r)
    double gamma1 = 0.0, gamma2 = 0.0, gamma3 = 0.0; // entries of C(r)

    // 4x4 covariance of (grad F(x), grad F(y))
    Eigen::Matrix4d gradient_block() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
        m(0, 0) = m(1, 1) = m(2, 2) = m(3, 3) = 2.0;
        m(0, 2) = m(2, 0) = alpha1;
        m(1, 3) = m(3, 1) = alpha2;
        return m;
    }

    // 4x6 covariance between the gradients and the two vectorized Hessians
    Eigen::Matrix<double, 4, 6> cross_block() const {
        Eigen::Matrix<double, 2, 3> b;
        b << 0, beta1, 0,
             beta1, 0, beta2;
        Eigen::Matrix<double, 4, 6> m = Eigen::Matrix<double, 4, 6>::Zero();
        m.block<2, 3>(0, 3) = b;
        m.block<2, 3>(2, 0) = -b;
        return m;
    }

    // 6x6 covariance of the two vectorized Hessians
    Matrix6d hessian_block() const {
        const double g4 = coeffs.g4;
        Eigen::Matrix3d c0;
        c0 << 24 * g4, 0, 8 * g4,
              0, 8 * g4, 0,
              8 * g4, 0, 24 * g4;
        Eigen::Matrix3d cr;
        cr << gamma1, 0, gamma2,
              0, gamma2, 0,
              gamma2, 0, gamma3;
        Matrix6d m;
        m.block<3, 3>(0, 0) = c0;
        m.block<3, 3>(3, 3) = c0;
        m.block<3, 3>(0, 3) = cr;
        m.block<3, 3>(3, 0) = cr;
        return m;
    }

    Eigen::Matrix<double, 10, 10> assemble() const {
        Eigen::Matrix<double, 10, 10> s;
        s.block<4, 4>(0, 0) = gradient_block();
        s.block<4, 6>(0, 4) = cross_block();
        s.block<6, 4>(4, 0) = cross_block().transpose();
        s.block<6, 6>(4, 4) = hessian_block();
        return s;
    }
};

// Exact entries via the isotropic-field differentiation identities; the
// truncated series forms below are the cross-check oracle.
inline BlockCovariance sigma_blocks(const RadialKernel& kernel, double r) {
    if (!(r >= kRadiusMin)) throw RadiusTooSmall("sigma_blocks: r below supported minimum");
    BlockCovariance b;
    b.r = r;
    b.coeffs = taylor_coeffs(kernel);
    if (!b.coeffs.normalized) throw Error("sigma_blocks: kernel must be normalized (g2 = 1)");
    const double c1 = kernel.deriv(1, r);
    const double c2 = kernel.deriv(2, r);
    const double c3 = kernel.deriv(3, r);
    const double c4 = kernel.deriv(4, r);
    b.alpha1 = -c1 / r;
    b.alpha2 = -c2;
    b.beta1 = -(c2 - c1 / r) / r;
    b.beta2 = -c3;
    b.gamma1 = 3 * (c2 - c1 / r) / (r * r);
    b.gamma2 = c3 / r - 2 * c2 / (r * r) + 2 * c1 / (r * r * r);
    b.gamma3 = c4;
    if (std::abs(b.alpha1) >= 2.0 || std::abs(b.alpha2) >= 2.0)
        throw RadiusTooLarge("sigma_blocks: gradient pair covariance not positive definite at this radius");
    return b;
}

// Truncated Taylor forms of the same entries (diagnostic mode for r below
// kRadiusMin, and the series route of the cross-check).
inline BlockCovariance sigma_blocks_series(const TaylorCoeffs& c, double r) {
    BlockCovariance b;
    b.r = r;
    b.coeffs = c;
    const double r2 = r * r, r3 = r2 * r, r4 = r2 * r2;
    b.alpha1 = 2 - 4 * c.g4 * r2 + 6 * c.g6 * r4;
    b.alpha2 = 2 - 12 * c.g4 * r2 + 30 * c.g6 * r4;
    b.beta1 = -8 * c.g4 * r + 24 * c.g6 * r3;
    b.beta2 = -24 * c.g4 * r + 120 * c.g6 * r3;
    b.gamma1 = 24 * c.g4 - 72 * c.g6 * r2 + 144 * c.g8 * r4;
    b.gamma2 = 8 * c.g4 - 72 * c.g6 * r2 + 240 * c.g8 * r4;
    b.gamma3 = 24 * c.g4 - 360 * c.g6 * r2 + 1680 * c.g8 * r4;
    return b;
}

// det of the 4x4 gradient block as the product of its two 2x2 sub-determinants
inline double det_A(const BlockCovariance& b) {
    const double d = (4.0 - b.alpha1 * b.alpha1) * (4.0 - b.alpha2 * b.alpha2);
    if (!(d > 1e-300))
        throw DegenerateGradientPair("det A underflows: distribution of (grad F(x), grad F(y)) is degenerate");
    return d;
}

// Covariance of the two Hessians conditioned on both gradients vanishing.
struct ConditionalCovariance {
    double r = 0.0;
    TaylorCoeffs coeffs;
    std::array<double, 8> a{}; // a[0] = a1(r), ..., a[7] = a8(r)

    Eigen::Matrix3d delta1() const {
        const double corner = 64.0 / 3.0 * coeffs.g4;
        Eigen::Matrix3d m;
        m << corner + a[0], 0, a[3],
             0, a[1], 0,
             a[3], 0, a[2];
        return m;
    }
    Eigen::Matrix3d delta2() const {
        const double corner = 64.0 / 3.0 * coeffs.g4;
        Eigen::Matrix3d m;
        m << corner + a[4], 0, a[7],
             0, a[5], 0,
             a[7], 0, a[6];
        return m;
    }
    Matrix6d assemble() const {
        Matrix6d m;
        m.block<3, 3>(0, 0) = delta1();
        m.block<3, 3>(3, 3) = delta1();
        m.block<3, 3>(0, 3) = delta2();
        m.block<3, 3>(3, 0) = delta2();
        return m;
    }
};

inline ConditionalCovariance conditional_delta(const BlockCovariance& b) {
    det_A(b); // propagate DegenerateGradientPair
    ConditionalCovariance d;
    d.r = b.r;
    d.coeffs = b.coeffs;
    const double g4 = b.coeffs.g4;
    const double q1 = 4.0 - b.alpha1 * b.alpha1;
    const double q2 = 4.0 - b.alpha2 * b.alpha2;
    const double b1 = b.beta1, b2 = b.beta2;
    d.a[0] = -2 * b1 * b1 / q2 + 8.0 / 3.0 * g4;
    d.a[1] = -2 * b1 * b1 / q1 + 8.0 * g4;
    d.a[2] = -2 * b2 * b2 / q2 + 24.0 * g4;
    d.a[3] = -2 * b1 * b2 / q2 + 8.0 * g4;
    d.a[4] = b.gamma1 - b.alpha2 * b1 * b1 / q2 - 64.0 / 3.0 * g4;
    d.a[5] = b.gamma2 - b.alpha1 * b1 * b1 / q1;
    d.a[6] = b.gamma3 - b.alpha2 * b2 * b2 / q2;
    d.a[7] = b.gamma2 - b.alpha2 * b1 * b2 / q2;
    return d;
}

// Direct Schur complement C - B^t A^{-1} B; independent route used by the
// validation checks.
inline Matrix6d conditional_delta_schur(const BlockCovariance& b) {
    const Eigen::Matrix4d A = b.gradient_block();
    const Eigen::Matrix<double, 4, 6> B = b.cross_block();
    return b.hessian_block() - B.transpose() * A.ldlt().solve(B);
}

// Eigen-system of Delta(r) in the fixed closed-form order, with normalized
// columns and the "first nonzero component positive" sign convention.
struct EigenSystem {
    double r = 0.0;
    std::array<double, 6> lambda{};
    Matrix6d Q = Matrix6d::Identity(); // eigenvectors as columns
    bool generic_fallback = false;

    Matrix6d reconstruct() const {
        Vector6d l;
        for (int i = 0; i < 6; ++i) l(i) = lambda[i];
        return Q * l.asDiagonal() * Q.transpose();
    }
};

namespace detail {

inline void apply_sign_convention(Matrix6d& Q) {
    for (int j = 0; j < 6; ++j) {
        for (int i = 0; i < 6; ++i) {
            if (std::abs(Q(i, j)) > 1e-14) {
                if (Q(i, j) < 0) Q.col(j) = -Q.col(j);
                break;
            }
        }
    }
}

} // namespace detail

inline EigenSystem eigen_system(const ConditionalCovariance& delta) {
    EigenSystem es;
    es.r = delta.r;
    const auto& a = delta.a;
    const double g4 = delta.coeffs.g4;
    const double A1p = a[0] + a[4] + 128.0 / 3.0 * g4;
    const double A1m = a[0] - a[4];
    const double A2p = a[1] + a[5], A2m = a[1] - a[5];
    const double A3p = a[2] + a[6], A3m = a[2] - a[6];
    const double A4p = a[3] + a[7], A4m = a[3] - a[7];

    if (std::abs(A4m) < 1e-14 || std::abs(A4p) < 1e-14) {
        // Closed-form eigenvector components are 0/0 here (r -> 0 limit);
        // fall back to a generic symmetric solve and flag the result.
        Eigen::SelfAdjointEigenSolver<Matrix6d> solver(delta.assemble());
        if (solver.info() != Eigen::Success) throw EigenvectorDegeneracy("generic eigensolve failed");
        for (int i = 0; i < 6; ++i) es.lambda[i] = solver.eigenvalues()(i);
        es.Q = solver.eigenvectors();
        detail::apply_sign_convention(es.Q);
        es.generic_fallback = true;
        return es;
    }

    const double sm = std::sqrt((A1m - A3m) * (A1m - A3m) + 4 * A4m * A4m);
    const double sp = std::sqrt((A1p - A3p) * (A1p - A3p) + 4 * A4p * A4p);
    // Small roots via the product of the 2x2 block's eigenvalues: the textbook
    // "-sqrt" expression cancels catastrophically when the block is nearly
    // singular (the monochromatic kernel drives lambda3 to ~r^10).
    const double l4 = 0.5 * (A1m + A3m + sm);
    const double l6 = 0.5 * (A1p + A3p + sp);
    const double l3 = l4 > 0 ? (A1m * A3m - A4m * A4m) / l4 : 0.5 * (A1m + A3m - sm);
    const double l5 = l6 > 0 ? (A1p * A3p - A4p * A4p) / l6 : 0.5 * (A1p + A3p - sp);
    es.lambda = {A2m, A2p, l3, l4, l5, l6};

    // Pick the cancellation-free root of v^2 - ((A3-A1)/A4) v - 1 = 0; the
    // other component follows from v31*v41 = -1.
    double v31, v41, v51, v61;
    if (A3m - A1m >= 0) {
        v31 = (A3m - A1m + sm) / (2 * A4m);
        v41 = -1.0 / v31;
    } else {
        v41 = (A3m - A1m - sm) / (2 * A4m);
        v31 = -1.0 / v41;
    }
    if (A3p - A1p >= 0) {
        v51 = (A3p - A1p + sp) / (2 * A4p);
        v61 = -1.0 / v51;
    } else {
        v61 = (A3p - A1p - sp) / (2 * A4p);
        v51 = -1.0 / v61;
    }

    Matrix6d V;
    V.col(0) << 0, -1, 0, 0, 1, 0;
    V.col(1) << 0, 1, 0, 0, 1, 0;
    V.col(2) << v31, 0, -1, -v31, 0, 1;
    V.col(3) << v41, 0, -1, -v41, 0, 1;
    V.col(4) << -v51, 0, 1, -v51, 0, 1;
    V.col(5) << -v61, 0, 1, -v61, 0, 1;
    for (int j = 0; j < 6; ++j) V.col(j).normalize();
    detail::apply_sign_convention(V);
    es.Q = V;
    return es;
}

// Map M = Q Lambda^{1/2}: if xi is standard Gaussian, M xi has covariance
// Delta(r).  Degenerate fields (e.g. monochromatic ones, where Delta F is a
// multiple of F) make Delta(r) exactly singular; eigenvalues that are zero up
// to roundoff are clamped so the Gaussian is supported on the image subspace.
inline Matrix6d whitening(const EigenSystem& es) {
    double lmax = 0.0;
    for (int i = 0; i < 6; ++i) lmax = std::max(lmax, es.lambda[i]);
    Vector6d sq;
    for (int i = 0; i < 6; ++i) {
        if (es.lambda[i] < -1e-9 * lmax)
            throw NonPositiveEigenvalue("whitening: Delta(r) is not positive semidefinite");
        sq(i) = std::sqrt(std::max(es.lambda[i], 0.0));
    }
    return es.Q * sq.asDiagonal();
}

} // namespace critstats

#endif
