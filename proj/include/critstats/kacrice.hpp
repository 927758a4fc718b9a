#ifndef CRITSTATS_KACRICE_HPP
#define CRITSTATS_KACRICE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "critstats/errors.hpp"
#include "critstats/kernels.hpp"
#include "critstats/moments.hpp"
#include "critstats/parallel.hpp"
#include "critstats/rng.hpp"

namespace critstats {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt3 = 1.7320508075688772935;

// ---- density (one-point statistics) ---------------------------------------

// Expected number of critical points in a ball of radius R (g2 = 1 units).
inline double expected_count_in_ball(const TaylorCoeffs& c, double R) {
    return 8.0 / kSqrt3 * c.g4 * R * R;
}

// Critical points per unit area.
inline double density_per_area(const TaylorCoeffs& c) {
    return 8.0 * c.g4 / (kSqrt3 * kPi);
}

// Convert a per-area density computed in normalized units back to the
// kernel's original units (the normalization rescales lengths by 1/s).
inline double density_in_original_units(double density_normalized, const RadialKernel& k) {
    const double s = k.length_scale();
    return density_normalized / (s * s);
}

inline double expected_abs_det_hessian(const TaylorCoeffs& c) {
    return 32.0 * c.g4 / kSqrt3;
}

struct MomentEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
};

// Monte Carlo estimate of E|Y1 Y3 - Y2^2| for the Hessian-shaped covariance
// rows (3,0,1),(0,1,0),(1,0,3); the closed form is 4/sqrt(3).
inline MomentEstimate mc_abs_det_hessian_moment(std::size_t n, std::uint64_t seed) {
    const std::size_t batches = 64;
    const std::size_t per_batch = (n + batches - 1) / batches;
    std::vector<double> means(batches);
    for (std::size_t b = 0; b < batches; ++b) {
        CounterRng rng(CounterRng::derive_key(seed, b));
        // Cholesky of [[3,1],[1,3]] for (Y1,Y3)
        const double l11 = std::sqrt(3.0);
        const double l21 = 1.0 / l11;
        const double l22 = std::sqrt(3.0 - l21 * l21);
        double acc = 0.0;
        for (std::size_t i = 0; i < per_batch; ++i) {
            double z1 = rng.next_gaussian(), z2 = rng.next_gaussian(), z3 = rng.next_gaussian();
            double y1 = l11 * z1;
            double y3 = l21 * z1 + l22 * z3;
            double y2 = z2;
            acc += std::abs(y1 * y3 - y2 * y2);
        }
        means[b] = acc / static_cast<double>(per_batch);
    }
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(batches);
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(batches - 1);
    return {mean, std::sqrt(var / static_cast<double>(batches)), per_batch * batches};
}

// ---- near-diagonal asymptotic constants ------------------------------------

struct AsymptoticConstants {
    double phi = 0.0;
    double varphi = 0.0;
    double A = 0.0;
    double B = 0.0;
    double a_F = 0.0;
};

// a_F via the simplified identity A^2 + B^2 = (10 g6 - 4 g4^2) sqrt(phi);
// algebraic, hence valid on the whole admissible region including the
// Cauchy-Schwarz boundary g4^2 = (5/2) g6 where it vanishes.
inline double a_f_identity(const TaylorCoeffs& c) {
    if (!c.normalized) throw Error("a_f_identity: coefficients must be normalized");
    check_admissibility(c);
    return kSqrt3 / (kPi * kPi) * (10 * c.g6 - 4 * c.g4 * c.g4);
}

inline AsymptoticConstants asymptotic_constants(const TaylorCoeffs& c) {
    if (!c.normalized) throw Error("asymptotic_constants: coefficients must be normalized");
    check_admissibility(c);
    const double g4 = c.g4, g6 = c.g6;
    AsymptoticConstants out;
    out.phi = 100 * g4 * g4 * g4 * g4 - 396 * g4 * g4 * g6 + 405 * g6 * g6;
    out.varphi = -20 * g4 * g4 * g4 * g4 + 88 * g4 * g4 * g6 - 99 * g6 * g6;
    const double sqrt_phi = std::sqrt(out.phi);
    const double t = 2 * g4 * g4 - 5 * g6;
    const double A2 = out.varphi - t * sqrt_phi;
    const double B2 = -out.varphi - t * sqrt_phi;
    const double scale = std::max({std::abs(out.varphi), std::abs(t * sqrt_phi), 1e-30});
    if (A2 < -1e-12 * scale || B2 < -1e-12 * scale)
        throw ComplexBranch("asymptotic_constants: A^2 or B^2 negative");
    out.A = std::sqrt(std::max(A2, 0.0));
    out.B = std::sqrt(std::max(B2, 0.0));
    // Two routes for a_F: the quotient form and the simplified identity
    // A^2 + B^2 = (10 g6 - 4 g4^2) sqrt(phi). They must agree.
    const double simplified = kSqrt3 / (kPi * kPi) * (10 * g6 - 4 * g4 * g4);
    if (sqrt_phi > 0) {
        const double quotient = kSqrt3 / (kPi * kPi) * (out.A * out.A + out.B * out.B) / sqrt_phi;
        if (std::abs(quotient - simplified) > 1e-12 * std::max(std::abs(simplified), 1e-30))
            throw Error("asymptotic_constants: a_F identity violated");
        out.a_F = quotient;
    } else {
        out.a_F = simplified;
    }
    return out;
}

// ---- sphere quadrature ------------------------------------------------------

struct SphereQuadrature {
    enum class Method { PlainMC, RandomizedQMC };
    std::size_t n_samples = 1u << 20;
    std::uint64_t seed = 0;
    std::size_t batches = 64;
    Method method = Method::PlainMC;
    double rel_tol = 0.0; // 0 disables the QuadratureUnderResolved check
    int threads = 0;      // 0 = default
};

// Per-coordinate Gaussian-mixture proposal for importance sampling. An empty
// component list means the standard normal.
struct CoordinateProposal {
    struct Component {
        double weight;
        double sigma;
    };
    std::array<std::vector<Component>, 6> coords;

    bool trivial() const {
        for (const auto& c : coords)
            if (!c.empty()) return false;
        return true;
    }
};

namespace detail {

inline double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

// Sample xi in R^6 from the proposal and return the density ratio
// prod_i N(xi_i; 0,1) / q_i(xi_i).
inline double sample_proposal(CounterRng& rng, const CoordinateProposal& prop, std::array<double, 6>& xi) {
    double weight = 1.0;
    for (int i = 0; i < 6; ++i) {
        const auto& comps = prop.coords[i];
        if (comps.empty()) {
            xi[i] = rng.next_gaussian();
            continue;
        }
        double u = rng.next_double();
        double sigma = comps.back().sigma;
        for (const auto& comp : comps) {
            if (u < comp.weight) {
                sigma = comp.sigma;
                break;
            }
            u -= comp.weight;
        }
        const double x = sigma * rng.next_gaussian();
        double q = 0.0;
        for (const auto& comp : comps) q += comp.weight * std_normal_pdf(x / comp.sigma) / comp.sigma;
        xi[i] = x;
        weight *= std_normal_pdf(x) / q;
    }
    return weight;
}

} // namespace detail

struct IntegralEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
};

// Integral of f over the unit sphere S^5 (surface area pi^3). f receives a
// unit 6-vector. Batches form a deterministic tree keyed by (seed, batch);
// the reduction order is fixed, so results do not depend on thread count.
template <class F>
IntegralEstimate sphere_integral(const SphereQuadrature& quad, F&& f,
                                 const CoordinateProposal* proposal = nullptr) {
    const std::size_t batches = std::max<std::size_t>(quad.batches, 2);
    const std::size_t per_batch = (quad.n_samples + batches - 1) / batches;
    const double area = kPi * kPi * kPi;
    std::vector<double> means(batches, 0.0);

    parallel_for(batches, [&](std::size_t b) {
        CounterRng rng(CounterRng::derive_key(quad.seed, b));
        std::optional<HaltonSequence> halton;
        if (quad.method == SphereQuadrature::Method::RandomizedQMC)
            halton.emplace(6, CounterRng::derive_key(quad.seed ^ 0x51ed2701ULL, b));
        double acc = 0.0;
        std::array<double, 6> xi;
        for (std::size_t i = 0; i < per_batch; ++i) {
            double w = 1.0;
            if (halton) {
                double u[6];
                halton->point(i, u);
                for (int j = 0; j < 6; ++j) xi[j] = inverse_normal_cdf(u[j]);
            } else if (proposal && !proposal->trivial()) {
                w = detail::sample_proposal(rng, *proposal, xi);
            } else {
                for (int j = 0; j < 6; ++j) xi[j] = rng.next_gaussian();
            }
            double norm2 = 0.0;
            for (double x : xi) norm2 += x * x;
            const double inv = 1.0 / std::sqrt(norm2);
            std::array<double, 6> s;
            for (int j = 0; j < 6; ++j) s[j] = xi[j] * inv;
            acc += w * f(s);
        }
        means[b] = acc / static_cast<double>(per_batch);
    }, quad.threads);

    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(batches);
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(batches - 1);

    IntegralEstimate est;
    est.value = area * mean;
    est.std_error = area * std::sqrt(var / static_cast<double>(batches));
    est.n_samples = per_batch * batches;
    return est;
}

// ---- two-point correlation ---------------------------------------------------

enum class CritType { Min, Max, Saddle, Extremum };

inline const char* to_string(CritType t) {
    switch (t) {
        case CritType::Min: return "min";
        case CritType::Max: return "max";
        case CritType::Saddle: return "saddle";
        case CritType::Extremum: return "extremum";
    }
    return "?";
}

inline CritType parse_crit_type(const std::string& s) {
    if (s == "min") return CritType::Min;
    if (s == "max") return CritType::Max;
    if (s == "saddle") return CritType::Saddle;
    if (s == "extremum") return CritType::Extremum;
    throw Error("unknown critical point type '" + s + "'");
}

// min iff c>0, b<0; max iff c>0, b>0; saddle iff c<0 (b = -trace, c = det)
inline bool matches_type(double b, double c, CritType want) {
    switch (want) {
        case CritType::Min: return c > 0 && b < 0;
        case CritType::Max: return c > 0 && b > 0;
        case CritType::Saddle: return c < 0;
        case CritType::Extremum: return c > 0;
    }
    return false;
}

struct K2Estimate {
    double r = 0.0;
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    std::optional<std::pair<CritType, CritType>> type_pair;
};

namespace detail {

struct K2Context {
    double det_a = 0.0;
    Matrix6d whiten = Matrix6d::Identity();
    std::array<double, 6> lambda{};
};

inline K2Context k2_context(const RadialKernel& kernel, double r) {
    BlockCovariance blocks = sigma_blocks(kernel, r);
    K2Context ctx;
    ctx.det_a = det_A(blocks);
    const EigenSystem es = eigen_system(conditional_delta(blocks));
    ctx.whiten = whitening(es);
    ctx.lambda = es.lambda;
    return ctx;
}

// Proposal that concentrates the coordinates steering the Hessian traces
// (xi_6) and the near-diagonal determinant directions (xi_1, xi_4); needed
// for mixed extremum pairs whose sphere domain shrinks like a power of r.
inline CoordinateProposal mixed_pair_proposal(double r) {
    CoordinateProposal prop;
    const double s_lin = std::min(4.0 * r, 1.0);
    const double s_quad = std::min(4.0 * r * r + 1e-4, 1.0);
    prop.coords[5] = {{0.4, 1.0}, {0.3, s_lin}, {0.3, s_quad}};
    prop.coords[0] = {{0.5, 1.0}, {0.5, s_lin}};
    prop.coords[3] = {{0.5, 1.0}, {0.5, s_lin}};
    return prop;
}

// When the linear trace coefficient vanishes (b11 = 0, e.g. the monochromatic
// kernel), opposite-extremum pairs are confined to a wedge around the
// near-null eigenvector v3: a pure v3 configuration is one Hessian positive
// definite and the other its negative, and every other whitened coordinate
// must stay below |xi_3| sqrt(lambda3 / lambda_j) for the signs to survive.
// Concentrate the proposal on that wedge; the estimator stays unbiased.
inline CoordinateProposal degenerate_mixed_proposal(const std::array<double, 6>& lambda) {
    CoordinateProposal prop;
    for (int j = 0; j < 6; ++j) {
        if (j == 2) continue;
        const double sj = 3.0 * std::sqrt(lambda[2] / lambda[j]);
        if (!(sj < 1.0)) continue;
        prop.coords[j] = {{0.7, sj}, {0.3, std::min(8.0 * sj, 1.0)}};
    }
    return prop;
}

} // namespace detail

// Sphere-reduced two-point function: prefactor / sqrt(det A(r)) times
// Int_{S^5} |c1(s) c2(s)| ds, with zeta = whitening * s, c1 = z1 z3 - z2^2,
// c2 = z4 z6 - z5^2. Normalized so that K2(r) -> a_F as r -> 0 (unordered
// pairs, prefactor 6/pi^5); the ordered-pair intensity measured by the torus
// estimator, which tends to density^2 at large separation, is exactly
// 2 * K2(r). If type_pair is set, the integral is restricted to the sign
// domain of the requested ordered pair.
inline K2Estimate k2(const RadialKernel& kernel, double r, const SphereQuadrature& quad,
                     std::optional<std::pair<CritType, CritType>> type_pair = std::nullopt) {
    const detail::K2Context ctx = detail::k2_context(kernel, r);
    const Matrix6d& M = ctx.whiten;

    auto integrand = [&](const std::array<double, 6>& s) -> double {
        double z[6];
        for (int i = 0; i < 6; ++i) {
            double acc = 0.0;
            for (int j = 0; j < 6; ++j) acc += M(i, j) * s[j];
            z[i] = acc;
        }
        const double c1 = z[0] * z[2] - z[1] * z[1];
        const double c2 = z[3] * z[5] - z[4] * z[4];
        if (type_pair) {
            const double b1 = -(z[0] + z[2]);
            const double b2 = -(z[3] + z[5]);
            if (!matches_type(b1, c1, type_pair->first) || !matches_type(b2, c2, type_pair->second))
                return 0.0;
        }
        return std::abs(c1 * c2);
    };

    std::optional<CoordinateProposal> proposal;
    if (type_pair) {
        const bool mixed = (type_pair->first == CritType::Min && type_pair->second == CritType::Max) ||
                           (type_pair->first == CritType::Max && type_pair->second == CritType::Min);
        if (mixed) {
            if (ctx.lambda[2] > 0 && ctx.lambda[2] < 1e-6 * ctx.lambda[3])
                proposal = detail::degenerate_mixed_proposal(ctx.lambda);
            else
                proposal = detail::mixed_pair_proposal(r);
        }
    }

    IntegralEstimate est = sphere_integral(quad, integrand, proposal ? &*proposal : nullptr);
    const double prefactor = 6.0 / (std::pow(kPi, 5) * std::sqrt(ctx.det_a));

    K2Estimate out;
    out.r = r;
    out.value = prefactor * est.value;
    out.std_error = prefactor * est.std_error;
    out.n_samples = est.n_samples;
    out.seed = quad.seed;
    out.type_pair = type_pair;
    if (quad.rel_tol > 0 && out.value > 0 && out.std_error > quad.rel_tol * out.value)
        throw QuadratureUnderResolved("k2: relative std error above requested tolerance");
    return out;
}

inline K2Estimate typed_k2(const RadialKernel& kernel, double r, std::pair<CritType, CritType> pair,
                           const SphereQuadrature& quad) {
    return k2(kernel, r, quad, pair);
}

// ---- expansion coefficients of b_i, c_i (unit 6-vector argument) -------------

struct BCCoefficients {
    double b10 = 0.0, b11 = 0.0, b12 = 0.0;
    double c11 = 0.0, c12 = 0.0;
    bool b_sign_convention_used = false; // the 0/0 sign factor was forced to +1
};

inline BCCoefficients bc_coefficients(const TaylorCoeffs& c, const std::array<double, 6>& s) {
    if (!c.normalized) throw Error("bc_coefficients: coefficients must be normalized");
    AdmissibilityReport rep = check_admissibility(c);
    if (rep.g8_branch < 0)
        throw G8BranchNegative("bc_coefficients: 280 g4 g8 - 153 g6^2 < 0");
    const AsymptoticConstants ac = asymptotic_constants(c);
    const double g4 = c.g4, g6 = c.g6, g8 = c.g8;
    const double sqrt_phi = std::sqrt(ac.phi);
    const double phi14 = std::pow(ac.phi, 0.25);
    const double xi1 = s[0], xi3 = s[2], xi4 = s[3], xi5 = s[4], xi6 = s[5];

    BCCoefficients out;
    double sign = 1.0;
    if (std::abs(rep.b_sign_gap) <= 1e-10) {
        out.b_sign_convention_used = true;
    } else {
        sign = rep.b_sign_gap > 0 ? 1.0 : -1.0;
    }
    // square roots that vanish identically on some catalog kernels; clamp
    // the roundoff-negative arguments
    auto safe_sqrt = [](double x) {
        if (x < -1e-10) throw ComplexBranch("bc_coefficients: negative square-root branch");
        return std::sqrt(std::max(x, 0.0));
    };
    const double m = -10 * g4 * g4 + 27 * g6;
    const double k = 8 * g4 * g4 - 18 * g6;

    out.b10 = -8.0 / kSqrt3 * std::sqrt(g4) * xi6;
    out.b11 = 3 * std::sqrt(2.0) / phi14 * (xi3 * ac.A + xi4 * ac.B) +
              std::sqrt(2.0) / sqrt_phi * sign *
                  (-xi4 * safe_sqrt(m + sqrt_phi) * safe_sqrt(ac.phi + k * sqrt_phi) +
                   xi3 * safe_sqrt(m - sqrt_phi) * safe_sqrt(ac.phi - k * sqrt_phi));
    out.b12 = 2.0 / kSqrt3 * g6 / std::sqrt(g4) * xi6 +
              xi5 * safe_sqrt(280 * g4 * g8 - 153 * g6 * g6) / std::sqrt(g4);
    out.c11 = -8 * std::sqrt(6.0) * std::sqrt(g4) / phi14 * xi6 * (xi4 * ac.B + xi3 * ac.A);
    out.c12 = 4 * (2 * g4 * g4 - 9 * g6) * xi1 * xi1 +
              6.0 / sqrt_phi * sign * (xi3 * ac.A + xi4 * ac.B) *
                  (-xi4 * safe_sqrt(m + sqrt_phi) * safe_sqrt(sqrt_phi + k) +
                   xi3 * safe_sqrt(m - sqrt_phi) * safe_sqrt(sqrt_phi - k)) +
              8 * xi6 * (g6 * xi6 + xi5 * safe_sqrt(280.0 / 3.0 * g4 * g8 - 51 * g6 * g6));
    return out;
}

// ---- second factorial moment --------------------------------------------------

namespace detail {

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.resize(n);
    w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) * z * p1 - j * p2) / (j + 1);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
}

// Density of the distance between two independent uniform points in a disc
// of radius R ("disc line picking").
inline double disc_pair_distance_density(double t, double R) {
    if (t <= 0 || t >= 2 * R) return 0.0;
    const double u = t / (2 * R);
    return (2 * t / (R * R)) * (2.0 / kPi) * (std::acos(u) - u * std::sqrt(1.0 - u * u));
}

} // namespace detail

// Int over B(R) x B(R) of K2(|x-y|), reduced to a 1-D integral against the
// disc-pair distance density. Radii below the supported minimum are clamped
// (K2 is continuous at 0 with value a_F).
inline MomentEstimate second_factorial_moment(const RadialKernel& kernel, double R,
                                              const SphereQuadrature& quad) {
    const int n_nodes = 20;
    std::vector<double> x, w;
    detail::gauss_legendre(n_nodes, x, w);
    const double area = kPi * R * R;
    double value = 0.0, var = 0.0;
    std::size_t n_total = 0;
    for (int i = 0; i < n_nodes; ++i) {
        const double t = R + R * x[i]; // map [-1,1] -> [0, 2R]
        const double jac = R;
        const double dens = detail::disc_pair_distance_density(t, R);
        if (dens == 0.0) continue;
        SphereQuadrature node_quad = quad;
        node_quad.seed = CounterRng::derive_key(quad.seed, 7000 + static_cast<std::uint64_t>(i));
        K2Estimate est = k2(kernel, std::max(t, kRadiusMin), node_quad);
        const double factor = area * area * w[i] * jac * dens;
        value += factor * est.value;
        var += factor * factor * est.std_error * est.std_error;
        n_total += est.n_samples;
    }
    return {value, std::sqrt(var), n_total};
}

// ---- decay exponent fit ---------------------------------------------------------

struct SlopeFit {
    double slope = 0.0;
    double std_error = 0.0;
};

// Weighted least-squares slope of log(value) against log(r).
inline SlopeFit decay_exponent_fit(const std::vector<std::array<double, 3>>& points) {
    if (points.size() < 4) throw Error("decay_exponent_fit: need at least 4 points");
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (const auto& p : points) {
        const double r = p[0], v = p[1], se = p[2];
        if (!(v > 0)) throw NonPositiveValue("decay_exponent_fit: nonpositive value");
        const double sigma_log = (se > 0 && se < v) ? se / v : 1e-6;
        const double w = 1.0 / (sigma_log * sigma_log);
        const double lx = std::log(r), ly = std::log(v);
        sw += w;
        swx += w * lx;
        swy += w * ly;
        swxx += w * lx * lx;
        swxy += w * lx * ly;
    }
    const double denom = sw * swxx - swx * swx;
    SlopeFit fit;
    fit.slope = (sw * swxy - swx * swy) / denom;
    fit.std_error = std::sqrt(sw / denom);
    return fit;
}

} // namespace critstats

#endif
