#include "biphoton/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace biphoton {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

int idx(FitParam p) { return static_cast<int>(p); }

// Characteristic magnitudes used to size finite-difference steps when a
// parameter sits at zero.
constexpr std::array<double, n_fit_params> fd_scale = {
    1.0,    // scale
    1.0,    // background
    1.0,    // theta
    1e-9,   // electric delay
    1e-9,   // arm delay
    1e7,    // bandwidth
    1e-10,  // resolving time
    1e-9,   // round trip
    0.1,    // relative gain
};

}  // namespace

const char* fit_param_name(FitParam p) {
    switch (p) {
        case FitParam::Scale: return "scale";
        case FitParam::Background: return "background";
        case FitParam::Theta: return "theta";
        case FitParam::ElectricDelay: return "electric_delay";
        case FitParam::ArmDelay: return "arm_delay";
        case FitParam::Bandwidth: return "bandwidth";
        case FitParam::ResolvingTime: return "resolving_time";
        case FitParam::RoundTrip: return "round_trip";
        case FitParam::RelativeGain: return "relative_gain";
        case FitParam::Count_: break;
    }
    throw InvalidInput("unknown fit parameter");
}

FitOptions FitOptions::defaults() {
    FitOptions opt;
    opt.free_mask.fill(false);
    opt.free_mask[idx(FitParam::Scale)] = true;
    opt.free_mask[idx(FitParam::Background)] = true;
    opt.free_mask[idx(FitParam::Theta)] = true;
    opt.lower = {0.0, 0.0, -20.0, 0.0, 0.0, 1e3, 1e-12, 1e-12, 0.0};
    // The bandwidth ceiling stays below 2*ln2 / resolving-time ceiling so the
    // kernel always decays faster than the envelope inside the box.
    opt.upper = {1e30, 1e30, 20.0, 1e-3, 1e-6, 1e8, 1e-8, 1e-6, 0.999};
    return opt;
}

double FitResult::chi2_per_dof() const { return dof > 0 ? chi2 / dof : 0.0; }

std::vector<double> expected_counts(std::span<const double> edges,
                                    const InterferometerConfig& cfg,
                                    const SourceParams& src, const DetectionParams& det,
                                    const std::array<double, n_fit_params>& p,
                                    int n_terms) {
    if (edges.size() < 2) throw InvalidInput("expected_counts needs at least one bin");
    SourceParams s = src;
    s.bandwidth = p[idx(FitParam::Bandwidth)];
    s.round_trip = p[idx(FitParam::RoundTrip)];
    s.relative_gain = p[idx(FitParam::RelativeGain)];
    DetectionParams d = det;
    d.resolving_time = p[idx(FitParam::ResolvingTime)];
    d.electric_delay = p[idx(FitParam::ElectricDelay)];
    const int nt = n_terms > 0 ? n_terms : default_comb_terms(s, d);
    const auto branches = comb_branches(cfg.regime, p[idx(FitParam::Theta)],
                                        p[idx(FitParam::ArmDelay)], s.relative_gain);
    const double scale = p[idx(FitParam::Scale)];
    const double bg = p[idx(FitParam::Background)];
    std::vector<double> out(edges.size() - 1);
    for (size_t i = 0; i + 1 < edges.size(); ++i) {
        double m = 0.0;
        for (const auto& b : branches)
            m += b.weight * comb_mass(edges[i], edges[i + 1], b.shift, s, d, nt);
        out[i] = scale * m + bg;
    }
    return out;
}

std::array<double, n_fit_params> initial_guess(const Histogram& hist,
                                               const InterferometerConfig& cfg,
                                               const SourceParams& src,
                                               const DetectionParams& det) {
    std::array<double, n_fit_params> p{};
    p[idx(FitParam::Background)] = 0.0;
    p[idx(FitParam::Theta)] = cfg.theta;
    p[idx(FitParam::ElectricDelay)] = det.electric_delay;
    p[idx(FitParam::ArmDelay)] = delay_from_path(cfg.path_difference);
    p[idx(FitParam::Bandwidth)] = src.bandwidth;
    p[idx(FitParam::ResolvingTime)] = det.resolving_time;
    p[idx(FitParam::RoundTrip)] = src.round_trip;
    p[idx(FitParam::RelativeGain)] = src.relative_gain;

    const int nt = default_comb_terms(src, det);
    const auto branches = comb_branches(cfg.regime, cfg.theta,
                                        p[idx(FitParam::ArmDelay)], src.relative_gain);
    double denom = 0.0, shape_only = 0.0;
    for (const auto& b : branches) {
        const double m = comb_mass(det.window_lo, det.window_hi, b.shift, src, det, nt);
        denom += b.weight * m;
        shape_only += m;
    }
    // A phase sitting exactly on a dark fringe gives zero weighted mass; fall
    // back to a small fraction of the unweighted mass so the scale stays
    // finite and the fit can recover.
    denom = std::max(denom, 1e-3 * shape_only);
    const double total = static_cast<double>(std::max<uint64_t>(hist.total(), 1));
    p[idx(FitParam::Scale)] = total / denom;
    return p;
}

namespace {

// Gauss-Jordan with full pivoting (normalized symmetric input).  `a` becomes
// its inverse; `rhs`, when given, becomes the solution.  Returns false when a
// pivot collapses (singular matrix).
bool gauss_jordan(std::vector<double>& a, int n, std::vector<double>* rhs) {
    std::vector<int> indxc(n), indxr(n), ipiv(n, 0);
    for (int i = 0; i < n; ++i) {
        double big = 0.0;
        int irow = -1, icol = -1;
        for (int j = 0; j < n; ++j)
            if (ipiv[j] != 1)
                for (int k = 0; k < n; ++k)
                    if (ipiv[k] == 0 && std::abs(a[j * n + k]) >= big) {
                        big = std::abs(a[j * n + k]);
                        irow = j;
                        icol = k;
                    }
        if (irow < 0 || big < 1e-13) return false;
        ++ipiv[icol];
        if (irow != icol) {
            for (int l = 0; l < n; ++l) std::swap(a[irow * n + l], a[icol * n + l]);
            if (rhs) std::swap((*rhs)[irow], (*rhs)[icol]);
        }
        indxr[i] = irow;
        indxc[i] = icol;
        const double pinv = 1.0 / a[icol * n + icol];
        a[icol * n + icol] = 1.0;
        for (int l = 0; l < n; ++l) a[icol * n + l] *= pinv;
        if (rhs) (*rhs)[icol] *= pinv;
        for (int ll = 0; ll < n; ++ll)
            if (ll != icol) {
                const double dum = a[ll * n + icol];
                a[ll * n + icol] = 0.0;
                for (int l = 0; l < n; ++l) a[ll * n + l] -= a[icol * n + l] * dum;
                if (rhs) (*rhs)[ll] -= (*rhs)[icol] * dum;
            }
    }
    for (int l = n - 1; l >= 0; --l)
        if (indxr[l] != indxc[l])
            for (int k = 0; k < n; ++k)
                std::swap(a[k * n + indxr[l]], a[k * n + indxc[l]]);
    return true;
}

void check_alignment(const Histogram& hist, const DetectionParams& det) {
    const auto want = window_edges(det);
    if (hist.edges.size() != want.size() ||
        hist.counts.size() + 1 != hist.edges.size())
        throw AlignmentError("histogram grid does not match the detection window");
    const double tol = 1e-6 * det.bin_width;
    for (size_t i = 0; i < want.size(); ++i)
        if (std::abs(hist.edges[i] - want[i]) > tol)
            throw AlignmentError("histogram bin edges do not match the detection window");
}

struct Workspace {
    const Histogram* hist;
    const InterferometerConfig* cfg;
    const SourceParams* src;
    const DetectionParams* det;
    int n_terms = 0;
    std::vector<size_t> used;  // bin indexes entering the fit
    std::vector<double> sigma; // per used bin, sqrt(max(counts,1))

    std::vector<double> model(const std::array<double, n_fit_params>& p) const {
        return expected_counts(
            std::span<const double>(hist->edges.data(), hist->edges.size()), *cfg,
            *src, *det, p, n_terms);
    }

    double chi2(const std::array<double, n_fit_params>& p) const {
        const auto m = model(p);
        double c = 0.0;
        for (size_t k = 0; k < used.size(); ++k) {
            const double r =
                (static_cast<double>(hist->counts[used[k]]) - m[used[k]]) / sigma[k];
            c += r * r;
        }
        return c;
    }
};

std::array<double, n_fit_params> clamp_params(std::array<double, n_fit_params> p,
                                              const FitOptions& opt) {
    for (int j = 0; j < n_fit_params; ++j)
        p[j] = std::clamp(p[j], opt.lower[j], opt.upper[j]);
    return p;
}

// Weighted Jacobian over the free parameters (central differences), plus the
// gradient g = J^T r and normal matrix A = J^T J.
struct Linearization {
    std::vector<double> A;  // m x m
    std::vector<double> g;  // m
};

Linearization linearize(const Workspace& ws, const std::array<double, n_fit_params>& p,
                        const std::vector<int>& free_idx) {
    const int m = static_cast<int>(free_idx.size());
    const size_t nb = ws.used.size();
    std::vector<double> J(nb * m);
    for (int j = 0; j < m; ++j) {
        const int pj = free_idx[j];
        const double h = 1e-6 * std::max(std::abs(p[pj]), fd_scale[pj]);
        auto pp = p, pm = p;
        pp[pj] += h;
        pm[pj] -= h;
        const auto mp = ws.model(pp);
        const auto mm = ws.model(pm);
        for (size_t k = 0; k < nb; ++k)
            J[k * m + j] = (mp[ws.used[k]] - mm[ws.used[k]]) / (2.0 * h * ws.sigma[k]);
    }
    const auto m0 = ws.model(p);
    Linearization lin;
    lin.A.assign(static_cast<size_t>(m) * m, 0.0);
    lin.g.assign(m, 0.0);
    for (size_t k = 0; k < nb; ++k) {
        const double r =
            (static_cast<double>(ws.hist->counts[ws.used[k]]) - m0[ws.used[k]]) /
            ws.sigma[k];
        for (int j = 0; j < m; ++j) {
            lin.g[j] += J[k * m + j] * r;
            for (int l = j; l < m; ++l)
                lin.A[j * m + l] += J[k * m + j] * J[k * m + l];
        }
    }
    for (int j = 0; j < m; ++j)
        for (int l = 0; l < j; ++l) lin.A[j * m + l] = lin.A[l * m + j];
    return lin;
}

// Two free parameters whose Jacobian columns are (numerically) proportional
// make the fit direction-degenerate; report the worst pair by normalized
// off-diagonal correlation.
void throw_if_collinear(const Linearization& lin, const std::vector<int>& free_idx,
                        double threshold) {
    const int m = static_cast<int>(free_idx.size());
    for (int j = 0; j < m; ++j) {
        const double dj = lin.A[j * m + j];
        if (dj <= 0.0) continue;  // inert parameter: sigma=inf, not degenerate
        for (int l = j + 1; l < m; ++l) {
            const double dl = lin.A[l * m + l];
            if (dl <= 0.0) continue;
            const double corr = std::abs(lin.A[j * m + l]) / std::sqrt(dj * dl);
            if (corr > threshold)
                throw DegenerateFitError(
                    std::string("fit parameters are collinear: ") +
                    fit_param_name(static_cast<FitParam>(free_idx[j])) + " and " +
                    fit_param_name(static_cast<FitParam>(free_idx[l])));
        }
    }
}

void fold_theta(FitResult& res, Regime regime) {
    const double t = normalize_phase(res.value[idx(FitParam::Theta)]);
    constexpr double pi = M_PI;
    if (regime == Regime::PerfectBalanced) {
        res.theta_canonical = std::min(t, 2.0 * pi - t);
        res.theta_ambiguity =
            "phase enters through (1+cos theta)^2: theta and -theta are "
            "indistinguishable; canonical range [0, pi]";
    } else {
        const double t1 = std::fmod(t, pi);
        res.theta_canonical = std::min(t1, pi - t1);
        res.theta_ambiguity =
            "phase enters through cos^2 theta: theta, -theta and theta+pi are "
            "indistinguishable; canonical range [0, pi/2]";
    }
}

}  // namespace

FitResult fit_histogram(const Histogram& hist, const InterferometerConfig& cfg,
                        const SourceParams& src, const DetectionParams& det,
                        std::array<double, n_fit_params> init, const FitOptions& opt) {
    check_alignment(hist, det);
    if (opt.max_iterations < 1) throw InvalidInput("max_iterations must be >= 1");

    std::vector<int> free_idx;
    for (int j = 0; j < n_fit_params; ++j)
        if (opt.free_mask[j]) free_idx.push_back(j);
    const int m = static_cast<int>(free_idx.size());

    Workspace ws;
    ws.hist = &hist;
    ws.cfg = &cfg;
    ws.src = &src;
    ws.det = &det;
    {
        SourceParams s0 = src;
        s0.bandwidth = init[idx(FitParam::Bandwidth)];
        s0.round_trip = init[idx(FitParam::RoundTrip)];
        DetectionParams d0 = det;
        d0.resolving_time = init[idx(FitParam::ResolvingTime)];
        d0.electric_delay = init[idx(FitParam::ElectricDelay)];
        ws.n_terms = opt.n_terms > 0 ? opt.n_terms : default_comb_terms(s0, d0);
    }

    auto p = clamp_params(init, opt);

    // Bin selection, decided once at the starting point: with a fixed zero
    // background, bins where the model is negligible carry no information and
    // only dilute chi^2.
    const bool masked = !opt.free_mask[idx(FitParam::Background)] &&
                        p[idx(FitParam::Background)] == 0.0;
    {
        const auto m0 = ws.model(p);
        double peak = 0.0;
        for (double v : m0) peak = std::max(peak, v);
        for (size_t i = 0; i < hist.counts.size(); ++i) {
            if (masked && m0[i] < 1e-3 * peak) continue;
            ws.used.push_back(i);
            ws.sigma.push_back(std::sqrt(
                std::max(static_cast<double>(hist.counts[i]), 1.0)));
        }
    }
    if (ws.used.empty()) throw InvalidInput("no usable bins in the fit window");

    FitResult res;
    res.value = p;
    res.dof = static_cast<int>(ws.used.size()) - m;
    res.chi2 = ws.chi2(p);
    res.chi2_trace.push_back(res.chi2);

    double lambda = opt.lambda0;
    bool first = true;
    if (m > 0) {
        for (int iter = 0; iter < opt.max_iterations; ++iter) {
            auto lin = linearize(ws, p, free_idx);
            if (first) {
                throw_if_collinear(lin, free_idx, 1.0 - 1e-10);
                first = false;
            }
            // Columns with zero diagonal cannot move; solve on the rest.
            std::vector<int> active;
            for (int j = 0; j < m; ++j)
                if (lin.A[j * m + j] > 0.0) active.push_back(j);
            if (active.empty()) {
                res.converged = true;  // nothing the data can push on
                break;
            }
            const int ma = static_cast<int>(active.size());
            const auto dnorm = [&](int j) {
                return 1.0 / std::sqrt(lin.A[j * m + j]);
            };

            bool accepted = false;
            while (true) {
                // Normalized system: unit diagonal, multiplicative damping
                // becomes + lambda on the diagonal.  When the solved step
                // pushes a parameter through its box the clamped direction is
                // a poor descent direction (it zigzags along the bound), so
                // pin that parameter at the bound and re-solve the rest.
                std::vector<int> sub = active;
                auto trial = p;
                bool ok = true;
                for (int round = 0; ok && !sub.empty(); ++round) {
                    const int ms = static_cast<int>(sub.size());
                    std::vector<double> a(static_cast<size_t>(ms) * ms);
                    std::vector<double> rhs(ms);
                    for (int j = 0; j < ms; ++j) {
                        for (int l = 0; l < ms; ++l)
                            a[j * ms + l] = lin.A[sub[j] * m + sub[l]] *
                                            dnorm(sub[j]) * dnorm(sub[l]);
                        a[j * ms + j] = 1.0 + lambda;
                        rhs[j] = lin.g[sub[j]] * dnorm(sub[j]);
                    }
                    ok = gauss_jordan(a, ms, &rhs);
                    if (!ok) break;
                    auto t = trial;  // pinned components stay at their bound
                    for (int j = 0; j < ms; ++j)
                        t[free_idx[sub[j]]] =
                            p[free_idx[sub[j]]] + rhs[j] * dnorm(sub[j]);
                    const auto clamped = clamp_params(t, opt);
                    std::vector<int> inside;
                    for (int j : sub)
                        if (clamped[free_idx[j]] == t[free_idx[j]])
                            inside.push_back(j);
                    trial = clamped;
                    if (static_cast<int>(inside.size()) == ms ||
                        inside.empty() || round >= ma)
                        break;
                    sub = std::move(inside);
                }
                if (ok) {
                    const double c = ws.chi2(trial);
                    if (c < res.chi2) {
                        const double rel =
                            (res.chi2 - c) / std::max(res.chi2, 1e-300);
                        p = trial;
                        res.chi2 = c;
                        res.chi2_trace.push_back(c);
                        ++res.n_iterations;
                        lambda = std::max(lambda / 3.0, 1e-12);
                        accepted = true;
                        if (rel < opt.tol) res.converged = true;
                        break;
                    }
                }
                lambda *= 10.0;
                if (lambda > 1e14) break;
            }
            if (!accepted || res.converged) break;
        }
    } else {
        res.converged = true;
    }

    res.value = p;

    // Final linearization: gradient norm and parameter errors from the
    // undamped normal matrix.
    res.sigma.fill(0.0);
    if (m > 0) {
        auto lin = linearize(ws, p, free_idx);
        double gn = 0.0;
        for (double v : lin.g) gn += v * v;
        res.gradient_norm = std::sqrt(gn);

        std::vector<int> active;
        for (int j = 0; j < m; ++j) {
            if (lin.A[j * m + j] > 0.0)
                active.push_back(j);
            else
                res.sigma[free_idx[j]] = inf;
        }
        if (!active.empty()) {
            const int ma = static_cast<int>(active.size());
            std::vector<double> dnorm(ma);
            for (int j = 0; j < ma; ++j)
                dnorm[j] = 1.0 / std::sqrt(lin.A[active[j] * m + active[j]]);
            std::vector<double> a(static_cast<size_t>(ma) * ma);
            for (int j = 0; j < ma; ++j)
                for (int l = 0; l < ma; ++l)
                    a[j * ma + l] =
                        lin.A[active[j] * m + active[l]] * dnorm[j] * dnorm[l];
            if (!gauss_jordan(a, ma, nullptr))
                throw_if_collinear(lin, free_idx, 1.0 - 1e-13);
            const double inflate =
                res.dof > 0 ? std::max(1.0, std::sqrt(res.chi2 / res.dof)) : 1.0;
            for (int j = 0; j < ma; ++j) {
                const double cjj = a[j * ma + j] * dnorm[j] * dnorm[j];
                res.sigma[free_idx[active[j]]] =
                    cjj > 0.0 ? inflate * std::sqrt(cjj) : inf;
            }
        }
    }

    fold_theta(res, cfg.regime);
    return res;
}

FitResult fit_phase(const Histogram& hist, const InterferometerConfig& cfg,
                    const SourceParams& src, const DetectionParams& det) {
    return fit_histogram(hist, cfg, src, det, initial_guess(hist, cfg, src, det),
                         FitOptions::defaults());
}

GoodnessResult goodness(const Histogram& hist, const InterferometerConfig& cfg,
                        const SourceParams& src, const DetectionParams& det,
                        std::array<double, n_fit_params> params, int n_terms) {
    check_alignment(hist, det);
    const auto expected = expected_counts(
        std::span<const double>(hist.edges.data(), hist.edges.size()), cfg, src, det,
        params, n_terms);
    GoodnessResult g;
    for (size_t i = 0; i < hist.counts.size(); ++i) {
        if (expected[i] < 10.0) continue;  // Poisson-to-Gauss approximation floor
        const double obs = static_cast<double>(hist.counts[i]);
        const double r = obs - expected[i];
        g.chi2 += r * r / std::max(obs, 1.0);
        ++g.bins_used;
    }
    g.dof = g.bins_used;
    return g;
}

}  // namespace biphoton
