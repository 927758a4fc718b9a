#ifndef CRITSTATS_KERNELS_HPP
#define CRITSTATS_KERNELS_HPP

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "critstats/errors.hpp"

namespace critstats {

// Normalized even Taylor coefficients of a covariance kernel at the origin:
// C(r) = g0 - g2 r^2 + g4 r^4 - g6 r^6 + g8 r^8 + ...
struct TaylorCoeffs {
    double g2 = 0.0;
    double g4 = 0.0;
    double g6 = 0.0;
    double g8 = 0.0;
    bool normalized = false; // g2 == 1 within 1e-12
    bool degenerate = false; // g2 vanishes (a.s. constant field)
};

struct AdmissibilityReport {
    double slack = 0.0;       // (5/2) g6 - g4^2
    double b_sign_gap = 0.0;  // 2 g4^2 - 3 g6
    double g8_branch = 0.0;   // 280 g4 g8 - 153 g6^2
    bool degenerate = false;  // slack <= 0 (Cauchy-Schwarz boundary)
    bool warn_b_sign = false; // |2 g4^2 - 3 g6| below tolerance (0/0 sign factor)
    bool warn_g8 = false;     // g8 branch negative (square root would be complex)
};

namespace detail {

class KernelModel {
public:
    virtual ~KernelModel() = default;
    virtual double eval(double r) const = 0;
    virtual double deriv(int k, double r) const = 0; // k in 1..4
    virtual std::optional<TaylorCoeffs> exact_coeffs() const { return std::nullopt; }
};

// Central differences with Richardson extrapolation, for eval-only kernels.
// Four half-steps of a second-order stencil give enough accuracy for the
// 1e-6 probe tolerance away from r = 0.
inline double fd_deriv(const std::function<double(double)>& f, int k, double x, double h0) {
    auto base = [&](double h) -> double {
        switch (k) {
            case 1: return (f(x + h) - f(x - h)) / (2 * h);
            case 2: return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h);
            case 3: return (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h * h * h);
            case 4: return (f(x + 2 * h) - 4 * f(x + h) + 6 * f(x) - 4 * f(x - h) + f(x - 2 * h)) / (h * h * h * h);
            default: throw Error("fd_deriv: order out of range");
        }
    };
    constexpr int levels = 5;
    double tab[levels][levels];
    double h = h0;
    for (int i = 0; i < levels; ++i, h /= 2) {
        tab[i][0] = base(h);
        double p4 = 4.0;
        for (int j = 1; j <= i; ++j, p4 *= 4.0)
            tab[i][j] = (p4 * tab[i][j - 1] - tab[i - 1][j - 1]) / (p4 - 1.0);
    }
    return tab[levels - 1][levels - 1];
}

class BesselJ0Model final : public KernelModel {
public:
    // even extension: finite-difference stencils may probe r < 0
    double eval(double r) const override { return std::cyl_bessel_j(0, std::abs(r)); }
    double deriv(int k, double r) const override {
        const double j0 = std::cyl_bessel_j(0, r);
        const double j1 = std::cyl_bessel_j(1, r);
        const double j2 = std::cyl_bessel_j(2, r);
        switch (k) {
            case 1: return -j1;
            case 2: return (j2 - j0) / 2;
            case 3: return (3 * j1 - std::cyl_bessel_j(3, r)) / 4;
            case 4: return (3 * j0 - 4 * j2 + std::cyl_bessel_j(4, r)) / 8;
            default: throw Error("deriv order out of range");
        }
    }
    std::optional<TaylorCoeffs> exact_coeffs() const override {
        // J0(r) = sum (-1)^k (r/2)^{2k} / (k!)^2
        TaylorCoeffs c;
        c.g2 = 1.0 / 4.0;
        c.g4 = 1.0 / 64.0;
        c.g6 = 1.0 / 2304.0;
        c.g8 = 1.0 / 147456.0;
        return c;
    }
};

// C(r) = exp(-a r^2)
class GaussianModel final : public KernelModel {
public:
    explicit GaussianModel(double a) : a_(a) {}
    double eval(double r) const override { return std::exp(-a_ * r * r); }
    double deriv(int k, double r) const override {
        const double e = std::exp(-a_ * r * r);
        const double a = a_;
        switch (k) {
            case 1: return -2 * a * r * e;
            case 2: return (4 * a * a * r * r - 2 * a) * e;
            case 3: return (-8 * a * a * a * r * r * r + 12 * a * a * r) * e;
            case 4: return (16 * a * a * a * a * r * r * r * r - 48 * a * a * a * r * r + 12 * a * a) * e;
            default: throw Error("deriv order out of range");
        }
    }
    std::optional<TaylorCoeffs> exact_coeffs() const override {
        TaylorCoeffs c;
        c.g2 = a_;
        c.g4 = a_ * a_ / 2;
        c.g6 = a_ * a_ * a_ / 6;
        c.g8 = a_ * a_ * a_ * a_ / 24;
        return c;
    }

private:
    double a_;
};

// C(r) = sum_k p[k] r^{2k}, k = 0..4
class EvenPolyModel final : public KernelModel {
public:
    explicit EvenPolyModel(std::array<double, 5> p) : p_(p) {}
    double eval(double r) const override {
        const double r2 = r * r;
        return p_[0] + r2 * (p_[1] + r2 * (p_[2] + r2 * (p_[3] + r2 * p_[4])));
    }
    double deriv(int k, double r) const override {
        // d^k/dr^k of p[m] r^{2m}
        double out = 0.0;
        for (int m = 0; m <= 4; ++m) {
            const int n = 2 * m;
            if (n < k) continue;
            double fac = 1.0;
            for (int j = 0; j < k; ++j) fac *= (n - j);
            out += p_[m] * fac * std::pow(r, n - k);
        }
        return out;
    }
    std::optional<TaylorCoeffs> exact_coeffs() const override {
        TaylorCoeffs c;
        c.g2 = -p_[1];
        c.g4 = p_[2];
        c.g6 = -p_[3];
        c.g8 = p_[4];
        return c;
    }

private:
    std::array<double, 5> p_;
};

class EvalOnlyModel final : public KernelModel {
public:
    explicit EvalOnlyModel(std::function<double(double)> f) : f_(std::move(f)) {}
    double eval(double r) const override { return f_(r); }
    double deriv(int k, double r) const override {
        // base step grows with the order (roundoff ~ eps / h^k); stencils may
        // probe slightly negative arguments, where eval is treated as even
        static constexpr double base[5] = {0.0, 0.04, 0.04, 0.12, 0.16};
        const double h0 = base[k] * std::max(std::abs(r), 0.25) / 0.25;
        auto even = [this](double x) { return f_(std::abs(x)); };
        return fd_deriv(even, k, r, h0);
    }

private:
    std::function<double(double)> f_;
};

} // namespace detail

// A radial covariance kernel C(r) together with its first four radial
// derivatives. Immutable; the argument scale applied by normalize() is
// recorded for unit back-conversion.
class RadialKernel {
public:
    RadialKernel(std::string name, std::shared_ptr<const detail::KernelModel> model,
                 double arg_scale = 1.0, double s_record = 1.0)
        : name_(std::move(name)), model_(std::move(model)), arg_scale_(arg_scale), s_record_(s_record) {}

    double eval(double r) const { return model_->eval(arg_scale_ * r); }
    double deriv(int k, double r) const {
        double out = model_->deriv(k, arg_scale_ * r);
        for (int j = 0; j < k; ++j) out *= arg_scale_;
        return out;
    }

    const std::string& name() const { return name_; }
    double length_scale() const { return s_record_; }

    std::optional<TaylorCoeffs> exact_coeffs() const {
        auto base = model_->exact_coeffs();
        if (!base) return std::nullopt;
        TaylorCoeffs c = *base;
        const double s2 = arg_scale_ * arg_scale_;
        c.g2 *= s2;
        c.g4 *= s2 * s2;
        c.g6 *= s2 * s2 * s2;
        c.g8 *= s2 * s2 * s2 * s2;
        return c;
    }

    RadialKernel rescaled(double extra_scale, const std::string& new_name) const {
        return RadialKernel(new_name, model_, arg_scale_ * extra_scale, s_record_ * extra_scale);
    }

private:
    std::string name_;
    std::shared_ptr<const detail::KernelModel> model_;
    double arg_scale_;
    double s_record_;
};

namespace detail {

class MixtureModel final : public KernelModel {
public:
    MixtureModel(double w, RadialKernel a, RadialKernel b) : w_(w), a_(std::move(a)), b_(std::move(b)) {}
    double eval(double r) const override { return w_ * a_.eval(r) + (1 - w_) * b_.eval(r); }
    double deriv(int k, double r) const override { return w_ * a_.deriv(k, r) + (1 - w_) * b_.deriv(k, r); }
    std::optional<TaylorCoeffs> exact_coeffs() const override {
        auto ca = a_.exact_coeffs();
        auto cb = b_.exact_coeffs();
        if (!ca || !cb) return std::nullopt;
        TaylorCoeffs c;
        c.g2 = w_ * ca->g2 + (1 - w_) * cb->g2;
        c.g4 = w_ * ca->g4 + (1 - w_) * cb->g4;
        c.g6 = w_ * ca->g6 + (1 - w_) * cb->g6;
        c.g8 = w_ * ca->g8 + (1 - w_) * cb->g8;
        return c;
    }

private:
    double w_;
    RadialKernel a_, b_;
};

} // namespace detail

// ---- catalog -------------------------------------------------------------

// J0(r): the unscaled random wave model, g2 = 1/4.
inline RadialKernel make_bessel_j0() {
    return RadialKernel("j0", std::make_shared<detail::BesselJ0Model>());
}

// Random wave model, pre-normalized: C(r) = J0(2r), g2 = 1, s-record 2.
inline RadialKernel make_rwm() {
    return RadialKernel("rwm", std::make_shared<detail::BesselJ0Model>(), 2.0, 2.0);
}

// Bargmann-Fock: C(r) = exp(-r^2), already normalized.
inline RadialKernel make_bargmann_fock() {
    return RadialKernel("bf", std::make_shared<detail::GaussianModel>(1.0));
}

// exp(-a r^2) with arbitrary a (mostly a normalization test probe)
inline RadialKernel make_gaussian(double a) {
    std::ostringstream n;
    n << "gauss:" << a;
    return RadialKernel(n.str(), std::make_shared<detail::GaussianModel>(a));
}

inline RadialKernel make_mixture(double w) {
    if (w < 0.0 || w > 1.0) throw Error("mixture weight must lie in [0,1]");
    std::ostringstream n;
    n << "mix:" << w;
    return RadialKernel(n.str(), std::make_shared<detail::MixtureModel>(w, make_rwm(), make_bargmann_fock()));
}

// 1 - r^2 + g4 r^4 - g6 r^6 + g8 r^8; small-r diagnostics only.
inline RadialKernel make_poly(double g4, double g6, double g8) {
    std::ostringstream n;
    n << "poly:" << g4 << "," << g6 << "," << g8;
    return RadialKernel(n.str(), std::make_shared<detail::EvenPolyModel>(std::array<double, 5>{1.0, -1.0, g4, -g6, g8}));
}

inline RadialKernel make_constant() {
    return RadialKernel("constant", std::make_shared<detail::EvenPolyModel>(std::array<double, 5>{1.0, 0.0, 0.0, 0.0, 0.0}));
}

inline RadialKernel make_user(std::function<double(double)> eval, const std::string& name = "user") {
    return RadialKernel(name, std::make_shared<detail::EvalOnlyModel>(std::move(eval)));
}

// Model specification grammar: rwm | bf | mix:<w> | poly:g4,g6,g8
inline RadialKernel parse_model(const std::string& spec) {
    if (spec == "rwm") return make_rwm();
    if (spec == "bf") return make_bargmann_fock();
    if (spec.rfind("mix:", 0) == 0) {
        double w = std::stod(spec.substr(4));
        return make_mixture(w);
    }
    if (spec.rfind("poly:", 0) == 0) {
        std::string rest = spec.substr(5);
        std::array<double, 3> g{};
        std::size_t pos = 0;
        for (int i = 0; i < 3; ++i) {
            std::size_t next = (i < 2) ? rest.find(',', pos) : rest.size();
            if (next == std::string::npos) throw Error("poly model needs three coefficients g4,g6,g8");
            g[i] = std::stod(rest.substr(pos, next - pos));
            pos = next + 1;
        }
        return make_poly(g[0], g[1], g[2]);
    }
    throw Error("unknown model spec '" + spec + "' (expected rwm | bf | mix:<w> | poly:g4,g6,g8)");
}

// ---- operations ----------------------------------------------------------

// Verify that analytic derivatives track finite differences of eval.
inline void check_kernel_smoothness(const RadialKernel& k, double rel_tol = 1e-6) {
    auto f = [&](double r) { return k.eval(r); };
    // wider base steps for the higher orders: their roundoff grows like
    // eps / h^order, so h must grow with the order to stay below tolerance
    const double h0[5] = {0.0, 0.04, 0.04, 0.12, 0.16};
    for (double r : {0.1, 0.5, 1.0}) {
        for (int order = 1; order <= 4; ++order) {
            double analytic = k.deriv(order, r);
            double fd = detail::fd_deriv(f, order, r, h0[order]);
            double scale = std::max({std::abs(analytic), std::abs(fd), 1e-3});
            if (std::abs(analytic - fd) > rel_tol * scale)
                throw NonSmoothKernel("kernel '" + k.name() + "': derivative " + std::to_string(order) +
                                      " disagrees with finite differences at r=" + std::to_string(r));
        }
    }
}

namespace detail {

// Least-squares fit of 1 - g2 h^2 + g4 h^4 - g6 h^6 + g8 h^8 to eval on a
// small grid; used when the model cannot report exact coefficients.
inline TaylorCoeffs fit_even_series(const RadialKernel& k) {
    const int n = 40;
    const double lo = 0.02, hi = 0.45;
    long double ata[4][4] = {};
    long double atb[4] = {};
    for (int i = 0; i < n; ++i) {
        long double h = lo + (hi - lo) * i / (n - 1);
        long double h2 = h * h;
        long double row[4] = {-h2, h2 * h2, -h2 * h2 * h2, h2 * h2 * h2 * h2};
        long double y = static_cast<long double>(k.eval(static_cast<double>(h))) - k.eval(0.0);
        for (int a = 0; a < 4; ++a) {
            atb[a] += row[a] * y;
            for (int b = 0; b < 4; ++b) ata[a][b] += row[a] * row[b];
        }
    }
    // Gaussian elimination, 4x4
    for (int c = 0; c < 4; ++c) {
        int piv = c;
        for (int rr = c + 1; rr < 4; ++rr)
            if (std::abs(static_cast<double>(ata[rr][c])) > std::abs(static_cast<double>(ata[piv][c]))) piv = rr;
        std::swap(ata[piv], ata[c]);
        std::swap(atb[piv], atb[c]);
        for (int rr = c + 1; rr < 4; ++rr) {
            long double m = ata[rr][c] / ata[c][c];
            for (int cc = c; cc < 4; ++cc) ata[rr][cc] -= m * ata[c][cc];
            atb[rr] -= m * atb[c];
        }
    }
    long double sol[4];
    for (int rr = 3; rr >= 0; --rr) {
        long double s = atb[rr];
        for (int cc = rr + 1; cc < 4; ++cc) s -= ata[rr][cc] * sol[cc];
        sol[rr] = s / ata[rr][rr];
    }
    TaylorCoeffs c;
    c.g2 = static_cast<double>(sol[0]);
    c.g4 = static_cast<double>(sol[1]);
    c.g6 = static_cast<double>(sol[2]);
    c.g8 = static_cast<double>(sol[3]);
    return c;
}

} // namespace detail

inline TaylorCoeffs taylor_coeffs(const RadialKernel& kernel) {
    TaylorCoeffs c;
    if (auto exact = kernel.exact_coeffs()) {
        c = *exact;
    } else {
        check_kernel_smoothness(kernel);
        c = detail::fit_even_series(kernel);
    }
    for (double g : {c.g2, c.g4, c.g6, c.g8}) {
        if (g < -1e-12) throw NegativeCoefficient("kernel '" + kernel.name() + "': negative Taylor coefficient");
    }
    c.normalized = std::abs(c.g2 - 1.0) <= 1e-12;
    c.degenerate = c.g2 <= 1e-12;
    return c;
}

// Rescale the argument so that g2 = 1; records the scale on the kernel.
inline RadialKernel normalize(const RadialKernel& kernel) {
    TaylorCoeffs c = taylor_coeffs(kernel);
    if (c.degenerate) throw DegenerateField("kernel '" + kernel.name() + "': g2 = 0, field is a.s. constant");
    if (c.normalized) return kernel;
    const double s = 1.0 / std::sqrt(c.g2);
    return kernel.rescaled(s, kernel.name());
}

inline AdmissibilityReport check_admissibility(const TaylorCoeffs& c) {
    AdmissibilityReport rep;
    rep.slack = 2.5 * c.g2 * c.g6 - c.g4 * c.g4;
    rep.b_sign_gap = 2 * c.g4 * c.g4 - 3 * c.g6;
    rep.g8_branch = 280 * c.g4 * c.g8 - 153 * c.g6 * c.g6;
    if (rep.slack < -1e-12)
        throw InadmissibleCoefficients("g4^2 > (5/2) g6 violates Cauchy-Schwarz; no such field exists");
    rep.degenerate = rep.slack <= 0.0;
    rep.warn_b_sign = std::abs(rep.b_sign_gap) <= 1e-10;
    rep.warn_g8 = rep.g8_branch < 0.0;
    return rep;
}

} // namespace critstats

#endif
