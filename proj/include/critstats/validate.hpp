#ifndef CRITSTATS_VALIDATE_HPP
#define CRITSTATS_VALIDATE_HPP

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "critstats/kacrice.hpp"
#include "critstats/kernels.hpp"
#include "critstats/moments.hpp"

namespace critstats {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ValidationOptions {
    std::string only;                 // empty = run everything
    double gamma2_perturbation = 0.0; // fault-injection hook for testing the suite itself
    std::size_t sphere_samples = 1u << 18;
    std::uint64_t seed = 0;
    int threads = 0;
};

namespace detail {

inline const std::vector<std::string>& validation_models() {
    static const std::vector<std::string> models = {"rwm", "bf", "mix:0.5"};
    return models;
}

// Slope of log|exact - series| vs log r for one Sigma entry, dropping points
// whose residual sits below the double-precision noise floor of the entry.
// noise_pow is the cancellation amplification of the exact formula: beta1
// divides an O(r^2) difference by r, the gamma entries divide by r^2, so
// their roundoff grows like eps / r^k toward the origin.
inline double entry_residual_slope(const RadialKernel& kernel, const TaylorCoeffs& coeffs,
                                   double BlockCovariance::*entry, int noise_pow) {
    std::vector<std::array<double, 3>> pts;
    const int n = 40;
    for (int i = 0; i < n; ++i) {
        const double r = 1e-3 * std::pow(100.0, static_cast<double>(i) / (n - 1));
        const BlockCovariance exact = sigma_blocks(kernel, r);
        const BlockCovariance series = sigma_blocks_series(coeffs, r);
        const double resid = std::abs(exact.*entry - series.*entry);
        const double noise_floor = 16.0 * 2.220446049250313e-16 *
                                   (std::abs(exact.*entry) + 1.0 + 4.0 / std::pow(r, noise_pow));
        if (resid > noise_floor) pts.push_back({r, resid, 0.0});
    }
    if (pts.size() < 4) throw Error("series residual fit: too few points above the noise floor");
    return decay_exponent_fit(pts).slope;
}

} // namespace detail

// Exact-vs-series residual decay: the truncated forms miss terms of order
// r^6 (alpha, gamma entries) and r^5 (beta entries).
inline CheckResult check_series(const ValidationOptions& opts) {
    CheckResult res{"series", true, ""};
    std::ostringstream detail;
    struct Entry {
        const char* label;
        double BlockCovariance::*ptr;
        double min_slope;
        int noise_pow;
    };
    const Entry entries[] = {
        {"alpha1", &BlockCovariance::alpha1, 5.5, 0}, {"alpha2", &BlockCovariance::alpha2, 5.5, 0},
        {"beta1", &BlockCovariance::beta1, 4.5, 1},   {"beta2", &BlockCovariance::beta2, 4.5, 0},
        {"gamma1", &BlockCovariance::gamma1, 5.5, 2}, {"gamma2", &BlockCovariance::gamma2, 5.5, 2},
        {"gamma3", &BlockCovariance::gamma3, 5.5, 0},
    };
    for (const auto& model : detail::validation_models()) {
        const RadialKernel kernel = parse_model(model);
        const TaylorCoeffs coeffs = taylor_coeffs(kernel);
        for (const auto& e : entries) {
            double slope;
            try {
                if (opts.gamma2_perturbation != 0.0 && std::string(e.label) == "gamma2") {
                    // fault injection: offset the exact entry before fitting
                    std::vector<std::array<double, 3>> pts;
                    for (int i = 0; i < 16; ++i) {
                        const double r = 1e-3 * std::pow(100.0, i / 15.0);
                        const BlockCovariance ex = sigma_blocks(kernel, r);
                        const BlockCovariance se = sigma_blocks_series(coeffs, r);
                        pts.push_back({r, std::abs(ex.gamma2 + opts.gamma2_perturbation - se.gamma2), 0.0});
                    }
                    slope = decay_exponent_fit(pts).slope;
                } else {
                    slope = detail::entry_residual_slope(kernel, coeffs, e.ptr, e.noise_pow);
                }
            } catch (const Error& err) {
                res.pass = false;
                detail << model << "/" << e.label << ": " << err.what() << "; ";
                continue;
            }
            const bool ok = slope >= e.min_slope;
            if (!ok) res.pass = false;
            detail << model << "/" << e.label << " slope=" << slope << (ok ? "" : " FAIL") << "; ";
        }
    }
    res.detail = detail.str();
    return res;
}

// Closed-form Delta vs Schur complement, eigen reconstruction, and agreement
// of the closed-form spectrum with a generic symmetric solver.
inline CheckResult check_eigen(const ValidationOptions& opts) {
    CheckResult res{"eigen", true, ""};
    std::ostringstream detail;
    const double radii[] = {0.05, 0.1, 0.3};
    for (const auto& model : detail::validation_models()) {
        const RadialKernel kernel = parse_model(model);
        for (double r : radii) {
            const BlockCovariance blocks = sigma_blocks(kernel, r);
            BlockCovariance blocks_schur = blocks;
            blocks_schur.gamma2 += opts.gamma2_perturbation;
            const Matrix6d closed = conditional_delta(blocks).assemble();
            const Matrix6d schur = conditional_delta_schur(blocks_schur);
            const double rel_delta = (closed - schur).norm() / schur.norm();

            const EigenSystem es = eigen_system(conditional_delta(blocks));
            const double rel_recon = (es.reconstruct() - closed).norm() / closed.norm();

            Eigen::SelfAdjointEigenSolver<Matrix6d> solver(closed);
            std::array<double, 6> sorted = es.lambda;
            std::sort(sorted.begin(), sorted.end());
            double rel_spec = 0.0;
            for (int i = 0; i < 6; ++i)
                rel_spec = std::max(rel_spec, std::abs(sorted[i] - solver.eigenvalues()(i)));
            rel_spec /= closed.norm();

            const bool ok = rel_delta <= 1e-10 && rel_recon <= 1e-10 && rel_spec <= 1e-10;
            if (!ok) {
                res.pass = false;
                detail << model << "/r=" << r << ": delta=" << rel_delta << " recon=" << rel_recon
                       << " spec=" << rel_spec << " FAIL; ";
            }
        }
    }
    if (res.pass) detail << "all closed-vs-Schur, reconstruction and spectrum checks <= 1e-10";
    res.detail = detail.str();
    return res;
}

// a_F quotient form vs the simplified identity on random admissible pairs.
inline CheckResult check_af(const ValidationOptions& opts) {
    CheckResult res{"af", true, ""};
    CounterRng rng(CounterRng::derive_key(opts.seed, 0xafULL));
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        TaylorCoeffs c;
        c.g2 = 1.0;
        c.normalized = true;
        c.g4 = 0.05 + 1.45 * rng.next_double();
        // keep g6/g4^2 in [0.45, 3]: admissible with real A, B (the branch
        // goes complex on (2/5, 4/9), see ComplexBranch)
        c.g6 = (0.45 + 2.55 * rng.next_double()) * c.g4 * c.g4;
        c.g8 = rng.next_double();
        const AsymptoticConstants ac = asymptotic_constants(c);
        if (!(ac.phi > 0)) {
            res.pass = false;
            res.detail = "phi <= 0 on admissible pair";
            return res;
        }
        const double quotient = kSqrt3 / (kPi * kPi) * (ac.A * ac.A + ac.B * ac.B) / std::sqrt(ac.phi);
        const double simplified = kSqrt3 / (kPi * kPi) * (10 * c.g6 - 4 * c.g4 * c.g4);
        worst = std::max(worst, std::abs(quotient - simplified) / std::abs(simplified));
    }
    res.pass = worst <= 1e-12;
    std::ostringstream detail;
    detail << "worst relative identity gap over 1000 admissible pairs: " << worst;
    res.detail = detail.str();
    return res;
}

// Quadrature sanity: integral of 1 over S^5 is pi^3; integral of s1^2 is pi^3/6.
inline CheckResult check_sphere(const ValidationOptions& opts) {
    CheckResult res{"sphere", true, ""};
    SphereQuadrature quad;
    quad.n_samples = opts.sphere_samples;
    quad.seed = opts.seed;
    quad.threads = opts.threads;
    const double area = kPi * kPi * kPi;
    const IntegralEstimate one = sphere_integral(quad, [](const std::array<double, 6>&) { return 1.0; });
    const IntegralEstimate s1sq =
        sphere_integral(quad, [](const std::array<double, 6>& s) { return s[0] * s[0]; });
    const bool ok_one = std::abs(one.value - area) <= 3.0 * one.std_error + 1e-12;
    const bool ok_s1 = std::abs(s1sq.value - area / 6.0) <= 3.0 * s1sq.std_error + 1e-12;
    res.pass = ok_one && ok_s1;
    std::ostringstream detail;
    detail << "area=" << one.value << " (target " << area << "), int s1^2=" << s1sq.value
           << " (target " << area / 6.0 << " +- " << 3.0 * s1sq.std_error << ")";
    res.detail = detail.str();
    return res;
}

inline std::vector<CheckResult> run_validation(const ValidationOptions& opts) {
    std::vector<CheckResult> results;
    auto wanted = [&](const char* name) { return opts.only.empty() || opts.only == name; };
    if (wanted("series")) results.push_back(check_series(opts));
    if (wanted("eigen")) results.push_back(check_eigen(opts));
    if (wanted("af")) results.push_back(check_af(opts));
    if (wanted("sphere")) results.push_back(check_sphere(opts));
    if (results.empty()) throw Error("validate: unknown check '" + opts.only + "'");
    return results;
}

// One diagnostic dump row per radius: the Sigma entries, the conditional a_i
// and the Delta spectrum.
struct DiagnosticRow {
    double r = 0.0;
    BlockCovariance blocks;
    std::array<double, 8> a{};
    std::array<double, 6> lambda{};
};

inline DiagnosticRow diagnostic_row(const RadialKernel& kernel, double r) {
    DiagnosticRow row;
    row.r = r;
    row.blocks = sigma_blocks(kernel, r);
    const ConditionalCovariance delta = conditional_delta(row.blocks);
    row.a = delta.a;
    row.lambda = eigen_system(delta).lambda;
    return row;
}

} // namespace critstats

#endif
