#ifndef CRITSTATS_FIELDSIM_HPP
#define CRITSTATS_FIELDSIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "critstats/errors.hpp"
#include "critstats/kacrice.hpp"
#include "critstats/parallel.hpp"
#include "critstats/rng.hpp"

namespace critstats {

// ---- spectral mode sets -----------------------------------------------------

struct Mode {
    double kx = 0.0;
    double ky = 0.0;
    double var = 0.0; // variance of each of the cos/sin amplitudes
};

struct ModeSet {
    std::vector<Mode> modes;
    double coverage_deficit = 0.0; // 1 - (total variance before normalization)
    double L = 0.0;
};

namespace detail {

// Torus wavevectors k = 2 pi n / L over the half plane (ky > 0, or ky == 0
// and kx > 0), plus optionally k = 0; each half-plane mode represents +-k.
// k_cut = 7.5 keeps the tail of the 4th spectral moment (which sets the
// critical-point density) below 1e-4 relative; the variance deficit is ~8e-7.
inline ModeSet bargmann_fock_modes(double L, double k_cut = 7.5) {
    const double dk = 2.0 * kPi / L;
    const int n_max = static_cast<int>(std::ceil(k_cut / dk));
    ModeSet set;
    set.L = L;
    double total = 0.0;
    auto density = [](double k2) { return std::exp(-k2 / 4.0) / (4.0 * kPi); };
    for (int ny = 0; ny <= n_max; ++ny) {
        for (int nx = -n_max; nx <= n_max; ++nx) {
            if (ny == 0 && nx <= 0) continue;
            const double kx = nx * dk, ky = ny * dk;
            const double k2 = kx * kx + ky * ky;
            if (k2 > k_cut * k_cut) continue;
            const double w = 2.0 * density(k2) * dk * dk;
            set.modes.push_back({kx, ky, w});
            total += w;
        }
    }
    const double w0 = density(0.0) * dk * dk;
    set.modes.push_back({0.0, 0.0, w0});
    total += w0;
    set.coverage_deficit = 1.0 - total;
    if (std::abs(set.coverage_deficit) > 1e-3)
        throw ModeBudgetTooSmall("bargmann_fock_modes: truncated spectral mass above 1e-3");
    for (auto& m : set.modes) m.var /= total;
    return set;
}

// Monochromatic wave model: spectral measure uniform on |k| = 2. On the torus
// use equal weights on lattice wavevectors within pi/L of that circle.
inline ModeSet rwm_modes(double L) {
    const double dk = 2.0 * kPi / L;
    const double target = 2.0, band = kPi / L;
    const int n_max = static_cast<int>(std::ceil((target + band) / dk)) + 1;
    ModeSet set;
    set.L = L;
    for (int ny = 0; ny <= n_max; ++ny) {
        for (int nx = -n_max; nx <= n_max; ++nx) {
            if (ny == 0 && nx <= 0) continue;
            const double kx = nx * dk, ky = ny * dk;
            const double k = std::sqrt(kx * kx + ky * ky);
            if (std::abs(k - target) > band) continue;
            set.modes.push_back({kx, ky, 0.0});
        }
    }
    if (set.modes.size() < 8)
        throw ModeBudgetTooSmall("rwm_modes: too few lattice modes near |k| = 2");
    const double w = 1.0 / (2.0 * static_cast<double>(set.modes.size()));
    for (auto& m : set.modes) m.var = 2.0 * w; // doubled: each mode stands for +-k
    set.coverage_deficit = 0.0;
    return set;
}

} // namespace detail

inline ModeSet build_modes(const std::string& model, double L) {
    if (model == "bf") return detail::bargmann_fock_modes(L);
    if (model == "rwm") return detail::rwm_modes(L);
    if (model.rfind("mix:", 0) == 0) {
        const double w = std::stod(model.substr(4));
        if (!(w >= 0.0 && w <= 1.0)) throw Error("build_modes: mixture weight outside [0,1]");
        ModeSet a = detail::rwm_modes(L);
        ModeSet b = detail::bargmann_fock_modes(L);
        ModeSet set;
        set.L = L;
        set.coverage_deficit = (1.0 - w) * b.coverage_deficit;
        for (auto m : a.modes) {
            m.var *= w;
            set.modes.push_back(m);
        }
        for (auto m : b.modes) {
            m.var *= 1.0 - w;
            set.modes.push_back(m);
        }
        return set;
    }
    throw Error("build_modes: model '" + model + "' is not simulable (use rwm, bf or mix:<w>)");
}

// ---- one field realization ----------------------------------------------------

// F(x) = sum_j a_j cos(k_j . x) + b_j sin(k_j . x), amplitudes independent
// N(0, var_j). Stored as flat arrays for the hot grid loops.
struct FieldSample {
    double L = 0.0;
    std::vector<double> kx, ky, a, b;

    void eval(double x, double y, double& f, double grad[2], double hess[3]) const {
        f = 0.0;
        grad[0] = grad[1] = 0.0;
        hess[0] = hess[1] = hess[2] = 0.0; // fxx, fxy, fyy
        const std::size_t n = kx.size();
        for (std::size_t j = 0; j < n; ++j) {
            const double ph = kx[j] * x + ky[j] * y;
            const double c = std::cos(ph), s = std::sin(ph);
            const double u = a[j] * c + b[j] * s;  // value part
            const double v = -a[j] * s + b[j] * c; // derivative part
            f += u;
            grad[0] += kx[j] * v;
            grad[1] += ky[j] * v;
            hess[0] -= kx[j] * kx[j] * u;
            hess[1] -= kx[j] * ky[j] * u;
            hess[2] -= ky[j] * ky[j] * u;
        }
    }
};

inline FieldSample sample_field(const ModeSet& set, std::uint64_t key) {
    FieldSample fs;
    fs.L = set.L;
    const std::size_t n = set.modes.size();
    fs.kx.resize(n);
    fs.ky.resize(n);
    fs.a.resize(n);
    fs.b.resize(n);
    CounterRng rng(key);
    for (std::size_t j = 0; j < n; ++j) {
        const Mode& m = set.modes[j];
        fs.kx[j] = m.kx;
        fs.ky[j] = m.ky;
        const double sd = std::sqrt(m.var);
        fs.a[j] = sd * rng.next_gaussian();
        fs.b[j] = sd * rng.next_gaussian();
    }
    return fs;
}

// ---- critical point detection ---------------------------------------------------

struct CriticalPoint {
    double x = 0.0;
    double y = 0.0;
    double value = 0.0;
    double hessian_det = 0.0;
    double hessian_trace = 0.0;
    double gradient_residual = 0.0;
    CritType type = CritType::Saddle;
};

inline CritType classify(double hessian_det, double hessian_trace) {
    if (std::abs(hessian_det) <= 1e-10)
        throw DegenerateHessian("classify: |det H| <= 1e-10");
    if (hessian_det < 0) return CritType::Saddle;
    return hessian_trace > 0 ? CritType::Min : CritType::Max; // b = -trace
}

namespace detail {

// Fill one grid row of (Fx, Fy) using a per-mode phase rotation recurrence
// instead of per-point sin/cos calls.
inline void gradient_row(const FieldSample& fs, double y, int n, double h,
                         std::vector<double>& fx_row, std::vector<double>& fy_row,
                         std::vector<double>& cos_ph, std::vector<double>& sin_ph,
                         const std::vector<double>& cos_step, const std::vector<double>& sin_step) {
    const std::size_t m = fs.kx.size();
    for (std::size_t j = 0; j < m; ++j) {
        const double ph = fs.ky[j] * y;
        cos_ph[j] = std::cos(ph);
        sin_ph[j] = std::sin(ph);
    }
    for (int ix = 0; ix < n; ++ix) {
        double fx = 0.0, fy = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double v = -fs.a[j] * sin_ph[j] + fs.b[j] * cos_ph[j];
            fx += fs.kx[j] * v;
            fy += fs.ky[j] * v;
            const double c = cos_ph[j] * cos_step[j] - sin_ph[j] * sin_step[j];
            sin_ph[j] = sin_ph[j] * cos_step[j] + cos_ph[j] * sin_step[j];
            cos_ph[j] = c;
        }
        fx_row[ix] = fx;
        fy_row[ix] = fy;
    }
    (void)h;
}

// Inclusive at zero so that gradient zeros landing exactly on a grid line
// (only possible for hand-built debug fields) still flag the adjacent cells.
inline bool sign_change(double a, double b, double c, double d) {
    const double lo = std::min(std::min(a, b), std::min(c, d));
    const double hi = std::max(std::max(a, b), std::max(c, d));
    return lo <= 0.0 && hi >= 0.0 && lo < hi;
}

} // namespace detail

// Scan an n x n grid for cells where both gradient components change sign,
// then polish each candidate with Newton iterations on the exact gradient.
inline std::vector<CriticalPoint> find_critical_points(const FieldSample& fs, int n = 0) {
    const double L = fs.L;
    if (n <= 0) n = std::max(32, static_cast<int>(std::lround(L / 0.1)));
    const double h = L / n;
    const std::size_t m = fs.kx.size();

    std::vector<double> cos_step(m), sin_step(m), cos_ph(m), sin_ph(m);
    for (std::size_t j = 0; j < m; ++j) {
        cos_step[j] = std::cos(fs.kx[j] * h);
        sin_step[j] = std::sin(fs.kx[j] * h);
    }

    std::vector<double> fx_prev(n), fy_prev(n), fx_row(n), fy_row(n), fx_first(n), fy_first(n);
    std::vector<CriticalPoint> points;

    auto newton = [&](double x0, double y0) {
        double x = x0, y = y0;
        for (int it = 0; it < 40; ++it) {
            double f, g[2], H[3];
            fs.eval(x, y, f, g, H);
            const double det = H[0] * H[2] - H[1] * H[1];
            if (std::abs(det) < 1e-14) return;
            const double dx = (H[2] * g[0] - H[1] * g[1]) / det;
            const double dy = (H[0] * g[1] - H[1] * g[0]) / det;
            x -= dx;
            y -= dy;
            if (std::abs(x - x0) > 2.5 * h || std::abs(y - y0) > 2.5 * h) return; // escaped the cell
            if (std::abs(dx) + std::abs(dy) < 1e-12 * L) {
                fs.eval(x, y, f, g, H);
                const double residual = std::hypot(g[0], g[1]);
                if (residual > 1e-10) return;
                CriticalPoint p;
                p.x = x - L * std::floor(x / L);
                p.y = y - L * std::floor(y / L);
                p.value = f;
                p.hessian_det = H[0] * H[2] - H[1] * H[1];
                p.hessian_trace = H[0] + H[2];
                p.gradient_residual = residual;
                if (std::abs(p.hessian_det) <= 1e-10) return; // measure-zero degeneracy
                p.type = classify(p.hessian_det, p.hessian_trace);
                points.push_back(p);
                return;
            }
        }
    };

    for (int iy = 0; iy <= n; ++iy) {
        if (iy < n) {
            detail::gradient_row(fs, iy * h, n, h, fx_row, fy_row, cos_ph, sin_ph, cos_step, sin_step);
            if (iy == 0) {
                fx_first = fx_row;
                fy_first = fy_row;
            }
        } else {
            fx_row = fx_first; // wrap around the torus
            fy_row = fy_first;
        }
        if (iy > 0) {
            for (int ix = 0; ix < n; ++ix) {
                const int jx = (ix + 1) % n;
                if (detail::sign_change(fx_prev[ix], fx_prev[jx], fx_row[ix], fx_row[jx]) &&
                    detail::sign_change(fy_prev[ix], fy_prev[jx], fy_row[ix], fy_row[jx]))
                    newton((ix + 0.5) * h, (iy - 0.5) * h);
            }
        }
        std::swap(fx_prev, fx_row);
        std::swap(fy_prev, fy_row);
    }

    // deduplicate (Newton basins from adjacent cells can reach the same point)
    const double tol = 1e-6 * L;
    std::sort(points.begin(), points.end(), [](const CriticalPoint& p, const CriticalPoint& q) {
        return p.x < q.x || (p.x == q.x && p.y < q.y);
    });
    std::vector<CriticalPoint> unique;
    auto torus_d = [L](double a, double b) {
        double d = std::abs(a - b);
        return std::min(d, L - d);
    };
    for (const auto& p : points) {
        bool dup = false;
        for (auto it = unique.rbegin(); it != unique.rend(); ++it) {
            if (p.x - it->x > tol && torus_d(p.x, it->x) > tol) break;
            if (torus_d(p.x, it->x) <= tol && torus_d(p.y, it->y) <= tol) {
                dup = true;
                break;
            }
        }
        if (!dup) unique.push_back(p);
    }
    return unique;
}

// ---- empirical pair statistics ---------------------------------------------------

struct PairHistogram {
    double r_min = 0.1, r_max = 1.0;
    int n_bins = 9;

    double edge(int i) const { return r_min + (r_max - r_min) * i / n_bins; }
    double center(int i) const { return 0.5 * (edge(i) + edge(i + 1)); }
    double annulus_area(int i) const {
        const double a = edge(i), b = edge(i + 1);
        return kPi * (b * b - a * a);
    }
    int bin_of(double r) const {
        if (r < r_min || r >= r_max) return -1;
        return static_cast<int>((r - r_min) / (r_max - r_min) * n_bins);
    }
};

struct PairCorrelation {
    PairHistogram hist;
    std::size_t n_samples = 0;
    std::vector<std::size_t> n_pairs; // ordered pairs per bin, all samples
    std::vector<double> k2_mean;
    std::vector<double> k2_se;
    std::vector<bool> empty_bin;
};

// K2_hat(bin) = (ordered pairs at binned torus distance) / (samples * area *
// annulus area); optionally restricted to an ordered type pair. A Poisson
// process of intensity lambda gives lambda^2 in every bin.
inline PairCorrelation empirical_pair_correlation(
    const std::vector<std::vector<CriticalPoint>>& samples, double L, const PairHistogram& hist,
    std::optional<std::pair<CritType, CritType>> typed = std::nullopt) {
    const int n_bins = hist.n_bins;
    const std::size_t n_samp = samples.size();
    PairCorrelation out;
    out.hist = hist;
    out.n_samples = n_samp;
    out.n_pairs.assign(n_bins, 0);
    out.k2_mean.assign(n_bins, 0.0);
    out.k2_se.assign(n_bins, 0.0);
    out.empty_bin.assign(n_bins, true);

    auto type_ok = [&](const CriticalPoint& p, CritType want) {
        return want == CritType::Extremum ? p.type != CritType::Saddle : p.type == want;
    };

    std::vector<std::vector<double>> per_sample(n_samp, std::vector<double>(n_bins, 0.0));
    for (std::size_t i = 0; i < n_samp; ++i) {
        const auto& pts = samples[i];
        std::vector<std::size_t> counts(n_bins, 0);
        for (std::size_t a = 0; a < pts.size(); ++a) {
            for (std::size_t b = 0; b < pts.size(); ++b) {
                if (a == b) continue;
                if (typed && !(type_ok(pts[a], typed->first) && type_ok(pts[b], typed->second)))
                    continue;
                double dx = std::abs(pts[a].x - pts[b].x);
                double dy = std::abs(pts[a].y - pts[b].y);
                dx = std::min(dx, L - dx);
                dy = std::min(dy, L - dy);
                const int bin = hist.bin_of(std::sqrt(dx * dx + dy * dy));
                if (bin >= 0) ++counts[bin];
            }
        }
        for (int bin = 0; bin < n_bins; ++bin) {
            out.n_pairs[bin] += counts[bin];
            per_sample[i][bin] =
                static_cast<double>(counts[bin]) / (L * L * hist.annulus_area(bin));
        }
    }
    const double nd = static_cast<double>(n_samp);
    for (int bin = 0; bin < n_bins; ++bin) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n_samp; ++i) mean += per_sample[i][bin];
        mean /= nd;
        double var = 0.0;
        for (std::size_t i = 0; i < n_samp; ++i)
            var += (per_sample[i][bin] - mean) * (per_sample[i][bin] - mean);
        out.k2_mean[bin] = mean;
        if (n_samp > 1) out.k2_se[bin] = std::sqrt(var / (nd - 1) / nd);
        out.empty_bin[bin] = (out.n_pairs[bin] == 0);
    }
    return out;
}

struct SimulationConfig {
    std::string model = "bf";
    double L = 30.0;
    int grid_n = 0; // 0 -> derived from L (spacing ~0.1)
    std::size_t n_samples = 200;
    std::uint64_t seed = 0;
    int threads = 0;
    PairHistogram hist;
};

struct SimulationResult {
    SimulationConfig config;
    double coverage_deficit = 0.0;
    double density_mean = 0.0; // critical points per unit area
    double density_se = 0.0;
    std::size_t n_min = 0, n_max = 0, n_saddle = 0;
    double morse_ok_fraction = 0.0; // samples with #min + #max == #saddle
    std::vector<double> k2_r;       // bin centers
    std::vector<double> k2_mean;    // ordered-pair intensity estimate
    std::vector<double> k2_se;
};

// Draw cfg.n_samples independent torus fields (jobs keyed by sample index),
// locate/classify critical points, and summarize density + pair correlation.
inline SimulationResult simulate(const SimulationConfig& cfg,
                                 std::vector<std::vector<CriticalPoint>>* keep_points = nullptr) {
    const ModeSet set = build_modes(cfg.model, cfg.L);
    const std::size_t n_samp = cfg.n_samples;

    std::vector<std::vector<CriticalPoint>> points(n_samp);
    parallel_for(n_samp, [&](std::size_t i) {
        FieldSample fs = sample_field(set, CounterRng::derive_key(cfg.seed, i));
        points[i] = find_critical_points(fs, cfg.grid_n);
    }, cfg.threads);

    SimulationResult res;
    res.config = cfg;
    res.coverage_deficit = set.coverage_deficit;

    std::vector<double> densities(n_samp);
    std::size_t morse_ok = 0;
    for (std::size_t i = 0; i < n_samp; ++i) {
        std::size_t n_min = 0, n_max = 0, n_saddle = 0;
        for (const auto& p : points[i]) {
            if (p.type == CritType::Min) ++n_min;
            else if (p.type == CritType::Max) ++n_max;
            else ++n_saddle;
        }
        res.n_min += n_min;
        res.n_max += n_max;
        res.n_saddle += n_saddle;
        if (n_min + n_max == n_saddle) ++morse_ok;
        densities[i] = static_cast<double>(points[i].size()) / (cfg.L * cfg.L);
    }
    const double nd = static_cast<double>(n_samp);
    double dmean = 0.0;
    for (double d : densities) dmean += d;
    dmean /= nd;
    double dvar = 0.0;
    for (double d : densities) dvar += (d - dmean) * (d - dmean);
    res.density_mean = dmean;
    if (n_samp > 1) res.density_se = std::sqrt(dvar / (nd - 1) / nd);
    res.morse_ok_fraction = static_cast<double>(morse_ok) / nd;

    PairCorrelation pc = empirical_pair_correlation(points, cfg.L, cfg.hist);
    res.k2_r.resize(cfg.hist.n_bins);
    for (int bin = 0; bin < cfg.hist.n_bins; ++bin) res.k2_r[bin] = cfg.hist.center(bin);
    res.k2_mean = pc.k2_mean;
    res.k2_se = pc.k2_se;

    if (keep_points) *keep_points = std::move(points);
    return res;
}

} // namespace critstats

#endif
