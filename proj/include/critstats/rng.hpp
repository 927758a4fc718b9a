#ifndef CRITSTATS_RNG_HPP
#define CRITSTATS_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>

namespace critstats {

// Counter-based generator: output i is a pure function of (key, i), so any
// batch of draws can be regenerated independently of every other batch.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(finalize(key ^ 0x6a09e667f3bcc909ULL)) {}

    // Derive a child key for a (seed, stream) pair, e.g. a quadrature batch
    // or a field-sample index.
    static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
        return finalize(finalize(seed + 0x9e3779b97f4a7c15ULL) ^ (stream * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL));
    }

    std::uint64_t next_u64() {
        std::uint64_t z = key_ + (++counter_) * 0x9e3779b97f4a7c15ULL;
        return finalize(finalize(z));
    }

    // uniform in (0,1)
    double next_double() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        double rad = std::sqrt(-2.0 * std::log(u1));
        double ang = 6.283185307179586476925 * u2;
        spare_ = rad * std::sin(ang);
        have_spare_ = true;
        return rad * std::cos(ang);
    }

    template <std::size_t N>
    std::array<double, N> gaussian_vector() {
        std::array<double, N> v;
        for (auto& x : v) x = next_gaussian();
        return v;
    }

private:
    static std::uint64_t finalize(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Inverse of the standard normal CDF (Acklam's rational approximation with
// one Halley refinement; relative error well below 1e-14 in (0,1)).
inline double inverse_normal_cdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double q, x;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

// Halton sequence in the first `dim` prime bases with a Cranley-Patterson
// random shift; used by the randomized-QMC quadrature option.
class HaltonSequence {
public:
    HaltonSequence(int dim, std::uint64_t shift_key) : dim_(dim) {
        CounterRng rng(shift_key);
        for (int j = 0; j < dim_; ++j) shift_[j] = rng.next_double();
    }

    // point `index` (0-based), shifted componentwise mod 1
    void point(std::uint64_t index, double* out) const {
        static const int bases[8] = {2, 3, 5, 7, 11, 13, 17, 19};
        for (int j = 0; j < dim_; ++j) {
            double f = 1.0, x = 0.0;
            std::uint64_t i = index + 1;
            const int b = bases[j];
            while (i > 0) {
                f /= b;
                x += f * static_cast<double>(i % b);
                i /= b;
            }
            x += shift_[j];
            x -= std::floor(x);
            // keep strictly inside (0,1) for the inverse CDF
            if (x <= 0.0) x = 0x1.0p-53;
            if (x >= 1.0) x = 1.0 - 0x1.0p-53;
            out[j] = x;
        }
    }

private:
    int dim_;
    std::array<double, 8> shift_{};
};

} // namespace critstats

#endif
