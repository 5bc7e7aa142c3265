#include "biphoton/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace biphoton {

namespace {

constexpr double two_pi = 2.0 * M_PI;

// Kernel decay rate a = 2*ln2 / resolving_time.  The tooth kernel
// (1+a|x|)exp(-a|x|) reaches half maximum where a|x| solves
// (1+y)exp(-y) = 1/2, not at ln2; the 2*ln2 convention matches the
// convolution-of-exponentials origin of the kernel.
double kernel_rate(const DetectionParams& det) {
    return 2.0 * std::log(2.0) / det.resolving_time;
}

// Beyond a*|x| > 80 a tooth contributes < 1.5e-33 of its peak.
constexpr double tooth_cutoff = 80.0;

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw InvalidInput(std::string(what) + " must be finite");
}

}  // namespace

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::Unbalanced: return "unbalanced";
        case Regime::PerfectBalanced: return "balanced-perfect";
        case Regime::RoughBalanced: return "balanced-rough";
    }
    throw InvalidInput("unknown regime value");
}

std::vector<std::string> SourceParams::validate() const {
    check_finite(bandwidth, "bandwidth");
    check_finite(round_trip, "round_trip");
    check_finite(relative_gain, "relative_gain");
    if (bandwidth <= 0.0) throw InvalidInput("bandwidth must be positive");
    if (round_trip <= 0.0) throw InvalidInput("round_trip must be positive");
    if (relative_gain < 0.0 || relative_gain >= 1.0)
        throw InvalidInput("relative_gain must lie in [0, 1)");
    std::vector<std::string> warnings;
    if (bandwidth * round_trip >= 1.0)
        warnings.push_back("bandwidth * round_trip >= 1: comb teeth overlap, the "
                           "discrete-tooth picture is marginal");
    return warnings;
}

std::vector<std::string> DetectionParams::validate() const {
    check_finite(resolving_time, "resolving_time");
    check_finite(electric_delay, "electric_delay");
    check_finite(bin_width, "bin_width");
    check_finite(window_lo, "window_lo");
    check_finite(window_hi, "window_hi");
    if (resolving_time < 1e-12)
        throw InvalidInput("resolving_time must be at least 1 ps");
    if (bin_width <= 0.0) throw InvalidInput("bin_width must be positive");
    if (window_hi <= window_lo)
        throw InvalidInput("window_hi must exceed window_lo");
    const double ratio = window_span() / bin_width;
    if (std::abs(ratio - std::llround(ratio)) > 1e-6 * ratio || std::llround(ratio) < 1)
        throw InvalidInput("window span must be an integer number of bins");
    if (electric_delay < window_lo || electric_delay > window_hi)
        throw InvalidInput("window must contain the electric delay");
    std::vector<std::string> warnings;
    if (resolving_time > 1e-9)
        warnings.push_back("resolving time above 1 ns smears neighboring comb "
                           "teeth into each other");
    return warnings;
}

int DetectionParams::bin_count() const {
    return static_cast<int>(std::llround(window_span() / bin_width));
}

std::vector<std::string> InterferometerConfig::validate() const {
    check_finite(path_difference, "path_difference");
    check_finite(theta, "theta");
    check_finite(scale, "scale");
    check_finite(background, "background");
    if (path_difference < 0.0) throw InvalidInput("path_difference must be >= 0");
    if (scale <= 0.0) throw InvalidInput("scale must be positive");
    if (background < 0.0) throw InvalidInput("background must be >= 0");
    std::vector<std::string> warnings;
    if (theta < 0.0 || theta >= two_pi)
        warnings.push_back("theta outside [0, 2*pi), interpreted modulo 2*pi");
    return warnings;
}

double normalize_phase(double theta) {
    check_finite(theta, "theta");
    double r = std::fmod(theta, two_pi);
    if (r < 0.0) r += two_pi;
    if (r >= two_pi) r = 0.0;
    return r;
}

double delay_from_path(double path_difference) {
    check_finite(path_difference, "path_difference");
    if (path_difference < 0.0) throw InvalidInput("path_difference must be >= 0");
    return path_difference / speed_of_light;
}

Regime classify_regime(double path_difference, double coherence_length,
                       const SourceParams& src) {
    check_finite(coherence_length, "coherence_length");
    if (coherence_length <= 0.0)
        throw InvalidInput("coherence_length must be positive");
    const double arm_delay = delay_from_path(path_difference);
    if (path_difference < coherence_length) return Regime::PerfectBalanced;
    if (arm_delay < src.round_trip / 10.0) return Regime::RoughBalanced;
    return Regime::Unbalanced;
}

int default_comb_terms(const SourceParams& src, const DetectionParams& det) {
    // Cover the window plus the envelope reach 30/bandwidth on each side
    // (exp(-30) < 1e-13, so omitted teeth change nothing above 1e-12).
    const double reach = det.window_span() + 30.0 / src.bandwidth;
    return static_cast<int>(std::ceil(reach / src.round_trip));
}

double comb_correlation(double tau, const SourceParams& src,
                        const DetectionParams& det, int n_terms) {
    check_finite(tau, "tau");
    if (n_terms < 0) throw InvalidInput("n_terms must be >= 0");
    const double a = kernel_rate(det);
    const double tr = src.round_trip;
    const double u = tau - det.electric_delay;
    const double au = std::abs(u);

    auto tooth = [a](double x) {
        const double ax = a * std::abs(x);
        return (1.0 + ax) * std::exp(-ax);
    };

    // Center-outward in symmetric tooth pairs.  Each pair's two terms swap
    // places under u -> -u, and float addition commutes, so the sum is
    // bitwise even in u.
    double sum = tooth(u);
    for (int n = 1; n <= n_terms; ++n) {
        const double off = n * tr;
        if (a * (off - au) > tooth_cutoff) break;
        sum += tooth(u - off) + tooth(u + off);
    }
    return std::exp(-src.bandwidth * au) * sum;
}

namespace {

// Antiderivative of (1 + a*s1*x) exp(-a*s1*x) * exp(-bw*s2*(x+d)) on a piece
// where sign(x) = s1 and sign(x+d) = s2 are constant.  The exponent is
// always <= 0 on the piece, so E never overflows.
double piece_antideriv(double x, double s1, double s2, double rho, double a,
                       double bw, double d) {
    const double E = std::exp(-(a * s1 * x + bw * s2 * (x + d)));
    return -E * ((1.0 + a * s1 * x) / rho + a * s1 / (rho * rho));
}

// Exact integral of tooth(x) * envelope(x + d) over [x1, x2], where
// tooth(x) = (1+a|x|)exp(-a|x|) and envelope(y) = exp(-bw|y|).
double tooth_envelope_integral(double x1, double x2, double d, double a, double bw) {
    double pts[4];
    int np = 0;
    pts[np++] = x1;
    if (0.0 > x1 && 0.0 < x2) pts[np++] = 0.0;
    if (-d > x1 && -d < x2) pts[np++] = -d;
    pts[np++] = x2;
    std::sort(pts, pts + np);
    double total = 0.0;
    for (int i = 0; i + 1 < np; ++i) {
        const double u = pts[i], v = pts[i + 1];
        if (!(v > u)) continue;
        const double xm = 0.5 * (u + v);
        const double s1 = xm >= 0.0 ? 1.0 : -1.0;
        const double s2 = (xm + d) >= 0.0 ? 1.0 : -1.0;
        const double rho = a * s1 + bw * s2;
        total += piece_antideriv(v, s1, s2, rho, a, bw, d) -
                 piece_antideriv(u, s1, s2, rho, a, bw, d);
    }
    return total;
}

}  // namespace

double comb_mass(double lo, double hi, double shift, const SourceParams& src,
                 const DetectionParams& det, int n_terms) {
    check_finite(lo, "lo");
    check_finite(hi, "hi");
    check_finite(shift, "shift");
    if (hi < lo) throw InvalidInput("comb_mass: hi must be >= lo");
    if (n_terms < 0) throw InvalidInput("n_terms must be >= 0");
    const double a = kernel_rate(det);
    const double bw = src.bandwidth;
    if (!(a > bw))
        throw InvalidInput("kernel decay must exceed the envelope decay "
                           "(resolving_time too long for this bandwidth)");
    const double tr = src.round_trip;
    const double L = lo - det.electric_delay - shift;
    const double H = hi - det.electric_delay - shift;
    const double reach = tooth_cutoff / a;
    long nmin = static_cast<long>(std::ceil((L - reach) / tr));
    long nmax = static_cast<long>(std::floor((H + reach) / tr));
    nmin = std::max(nmin, -static_cast<long>(n_terms));
    nmax = std::min(nmax, static_cast<long>(n_terms));
    double total = 0.0;
    for (long n = nmin; n <= nmax; ++n) {
        const double d = static_cast<double>(n) * tr;
        total += tooth_envelope_integral(L - d, H - d, d, a, bw);
    }
    return total;
}

std::vector<CombBranch> comb_branches(Regime regime, double theta, double arm_delay,
                                      double relative_gain) {
    const double c = std::cos(theta);
    switch (regime) {
        case Regime::Unbalanced:
            return {{0.0, 4.0 * c * c}, {arm_delay, 1.0}, {-arm_delay, 1.0}};
        case Regime::PerfectBalanced:
            return {{0.0, 0.25 * (1.0 + relative_gain) * (1.0 + c) * (1.0 + c)}};
        case Regime::RoughBalanced:
            return {{0.0, 0.25 * (c * c + 0.5 * (1.0 + 3.0 * relative_gain))}};
    }
    throw InvalidInput("unknown regime value");
}

namespace {

void require_regime(const InterferometerConfig& cfg, Regime want, const char* fn) {
    if (cfg.regime != want)
        throw RegimeError(std::string(fn) + " called with a " +
                          regime_name(cfg.regime) + " config");
}

double branch_sum(double tau, const std::vector<CombBranch>& branches,
                  const SourceParams& src, const DetectionParams& det, int n_terms) {
    double s = 0.0;
    for (const auto& b : branches)
        s += b.weight * comb_correlation(tau - b.shift, src, det, n_terms);
    return s;
}

}  // namespace

double correlation_unbalanced(double tau, const InterferometerConfig& cfg,
                              const SourceParams& src, const DetectionParams& det) {
    require_regime(cfg, Regime::Unbalanced, "correlation_unbalanced");
    const double T = delay_from_path(cfg.path_difference);
    const auto branches = comb_branches(Regime::Unbalanced, cfg.theta, T,
                                        src.relative_gain);
    const int n = default_comb_terms(src, det);
    return cfg.scale * branch_sum(tau, branches, src, det, n) + cfg.background;
}

double correlation_balanced_perfect(double tau, double theta,
                                    const InterferometerConfig& cfg,
                                    const SourceParams& src,
                                    const DetectionParams& det) {
    require_regime(cfg, Regime::PerfectBalanced, "correlation_balanced_perfect");
    const auto branches = comb_branches(Regime::PerfectBalanced, theta, 0.0,
                                        src.relative_gain);
    const int n = default_comb_terms(src, det);
    return cfg.scale * branch_sum(tau, branches, src, det, n) + cfg.background;
}

double correlation_balanced_rough(double tau, double theta,
                                  const InterferometerConfig& cfg,
                                  const SourceParams& src,
                                  const DetectionParams& det) {
    require_regime(cfg, Regime::RoughBalanced, "correlation_balanced_rough");
    const auto branches = comb_branches(Regime::RoughBalanced, theta, 0.0,
                                        src.relative_gain);
    const int n = default_comb_terms(src, det);
    return cfg.scale * branch_sum(tau, branches, src, det, n) + cfg.background;
}

double correlation(double tau, const InterferometerConfig& cfg,
                   const SourceParams& src, const DetectionParams& det) {
    switch (cfg.regime) {
        case Regime::Unbalanced:
            return correlation_unbalanced(tau, cfg, src, det);
        case Regime::PerfectBalanced:
            return correlation_balanced_perfect(tau, cfg.theta, cfg, src, det);
        case Regime::RoughBalanced:
            return correlation_balanced_rough(tau, cfg.theta, cfg, src, det);
    }
    throw InvalidInput("unknown regime value");
}

std::vector<double> bin_means(std::span<const double> edges,
                              const InterferometerConfig& cfg,
                              const SourceParams& src, const DetectionParams& det) {
    if (edges.size() < 2) throw InvalidInput("bin_means needs at least one bin");
    src.validate();
    det.validate();
    cfg.validate();
    const double T = cfg.regime == Regime::Unbalanced
                         ? delay_from_path(cfg.path_difference)
                         : 0.0;
    const auto branches = comb_branches(cfg.regime, cfg.theta, T, src.relative_gain);
    const int n = default_comb_terms(src, det);
    std::vector<double> out(edges.size() - 1);
    for (size_t i = 0; i + 1 < edges.size(); ++i) {
        const double lo = edges[i], hi = edges[i + 1];
        if (!(hi > lo)) throw InvalidInput("bin edges must be strictly increasing");
        double m = 0.0;
        for (const auto& b : branches)
            m += b.weight * comb_mass(lo, hi, b.shift, src, det, n);
        out[i] = cfg.scale * m / (hi - lo) + cfg.background;
    }
    return out;
}

CorrelationCurve sample_curve(const InterferometerConfig& cfg, const SourceParams& src,
                              const DetectionParams& det, double lo, double hi,
                              double resolution) {
    check_finite(lo, "lo");
    check_finite(hi, "hi");
    check_finite(resolution, "resolution");
    if (resolution <= 0.0) throw InvalidInput("resolution must be positive");
    if (hi < lo) throw InvalidInput("hi must be >= lo");
    src.validate();
    det.validate();
    cfg.validate();
    const long k_max = static_cast<long>(std::floor((hi - lo) / resolution + 1e-9));
    CorrelationCurve curve;
    curve.tau.reserve(k_max + 1);
    curve.value.reserve(k_max + 1);
    for (long k = 0; k <= k_max; ++k) {
        const double t = lo + static_cast<double>(k) * resolution;
        curve.tau.push_back(t);
        curve.value.push_back(correlation(t, cfg, src, det));
    }
    return curve;
}

PhaseSweep phase_sweep(const InterferometerConfig& cfg, const SourceParams& src,
                       const DetectionParams& det, std::span<const double> thetas) {
    if (thetas.empty()) throw InvalidInput("phase_sweep needs at least one phase");
    src.validate();
    det.validate();
    cfg.validate();
    const double T = cfg.regime == Regime::Unbalanced
                         ? delay_from_path(cfg.path_difference)
                         : 0.0;
    const int n = default_comb_terms(src, det);
    // Branch shifts do not depend on theta, so the window masses are computed
    // once and only the weights are re-evaluated per point.
    const auto shape = comb_branches(cfg.regime, 0.0, T, src.relative_gain);
    std::vector<double> mass(shape.size());
    for (size_t i = 0; i < shape.size(); ++i)
        mass[i] = comb_mass(det.window_lo, det.window_hi, shape[i].shift, src, det, n);
    PhaseSweep sweep;
    sweep.theta.assign(thetas.begin(), thetas.end());
    sweep.counts.reserve(thetas.size());
    for (double th : thetas) {
        check_finite(th, "theta");
        const auto branches = comb_branches(cfg.regime, th, T, src.relative_gain);
        double c = 0.0;
        for (size_t i = 0; i < branches.size(); ++i)
            c += branches[i].weight * mass[i];
        sweep.counts.push_back(cfg.scale * c + cfg.background * det.window_span());
    }
    return sweep;
}

std::vector<double> phase_grid(int n) {
    if (n < 1) throw InvalidInput("phase_grid needs at least one point");
    std::vector<double> g(n);
    for (int j = 0; j < n; ++j)
        g[j] = two_pi * static_cast<double>(j) / static_cast<double>(n);
    return g;
}

double visibility(std::span<const double> counts) {
    if (counts.size() < 2)
        throw InvalidInput("visibility needs at least two sweep points");
    double mx = -std::numeric_limits<double>::infinity();
    double mn = std::numeric_limits<double>::infinity();
    for (double v : counts) {
        check_finite(v, "sweep count");
        if (v < 0.0) throw InvalidInput("sweep counts must be >= 0");
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    if (mx == 0.0)
        throw UndefinedVisibilityError("visibility of an identically zero sweep");
    return (mx - mn) / (mx + mn);
}

int fringe_count(std::span<const double> counts) {
    if (counts.size() < 3)
        throw InvalidInput("fringe_count needs at least three sweep points");
    // Collapse runs of equal values (including across the wrap) so a plateau
    // counts as one extremum.
    std::vector<double> v;
    for (double c : counts) {
        check_finite(c, "sweep count");
        if (v.empty() || c != v.back()) v.push_back(c);
    }
    while (v.size() > 1 && v.front() == v.back()) v.pop_back();
    if (v.size() < 2) return 0;
    const size_t m = v.size();
    int peaks = 0;
    for (size_t i = 0; i < m; ++i) {
        const double prev = v[(i + m - 1) % m];
        const double next = v[(i + 1) % m];
        if (v[i] > prev && v[i] > next) ++peaks;
    }
    return peaks;
}

}  // namespace biphoton
