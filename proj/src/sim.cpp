#include "biphoton/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biphoton/rng.hpp"

namespace biphoton {

// ---------------------------------------------------------------------------
// Inverse normal CDF, Acklam's rational approximation (|rel err| < 1.15e-9).
// ---------------------------------------------------------------------------
double Rng::normal() {
    static constexpr double A[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double B[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double C[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double D[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    static constexpr double p_low = 0.02425;

    double p = uniform();
    if (p < 0x1.0p-54) p = 0x1.0p-54;  // uniform() can return exactly 0

    auto tail = [&](double q) {
        return (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) /
               ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
    };
    if (p < p_low) return tail(std::sqrt(-2.0 * std::log(p)));
    if (p > 1.0 - p_low) return -tail(std::sqrt(-2.0 * std::log(1.0 - p)));
    const double q = p - 0.5, r = q * q;
    return (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q /
           (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0);
}

std::vector<std::string> SimConfig::validate() const {
    if (!std::isfinite(jitter_sigma) || jitter_sigma < 0.0)
        throw InvalidInput("jitter_sigma must be finite and >= 0");
    if (!std::isfinite(accidental_fraction) || accidental_fraction < 0.0 ||
        accidental_fraction > 1.0)
        throw InvalidInput("accidental_fraction must lie in [0, 1]");
    std::vector<std::string> warnings;
    if (accidental_fraction == 1.0)
        warnings.push_back("accidental_fraction = 1: output carries no signal");
    return warnings;
}

double Histogram::bin_width() const {
    if (counts.empty() || edges.size() != counts.size() + 1)
        throw InvalidInput("histogram has no consistent grid");
    return (edges.back() - edges.front()) / static_cast<double>(counts.size());
}

uint64_t Histogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), uint64_t{0});
}

std::vector<double> window_edges(const DetectionParams& det) {
    det.validate();
    const int n = det.bin_count();
    std::vector<double> edges(n + 1);
    for (int i = 0; i <= n; ++i)
        edges[i] = det.window_lo + static_cast<double>(i) * det.bin_width;
    edges.back() = det.window_hi;
    return edges;
}

namespace {

// Window-integrated signal intensity after Gaussian phase jitter.  Uses
// E[cos(theta + s*G)] = cos(theta) exp(-s^2/2) and the analogous second
// harmonic; reduces to the plain branch weights at sigma = 0.
double smeared_intensity(Regime regime, double theta, double sigma, double gain,
                         const std::vector<double>& mass) {
    const double e1 = std::cos(theta) * std::exp(-0.5 * sigma * sigma);
    const double e2 = std::cos(2.0 * theta) * std::exp(-2.0 * sigma * sigma);
    switch (regime) {
        case Regime::Unbalanced:
            // E[4 cos^2] = 2 (1 + E[cos 2theta])
            return 2.0 * (1.0 + e2) * mass[0] + mass[1] + mass[2];
        case Regime::PerfectBalanced:
            // E[(1 + cos)^2] = 1 + 2 E[cos] + (1 + E[cos 2theta])/2
            return 0.25 * (1.0 + gain) * mass[0] *
                   (1.0 + 2.0 * e1 + 0.5 * (1.0 + e2));
        case Regime::RoughBalanced:
            return 0.25 * mass[0] * (0.5 * (1.0 + e2) + 0.5 * (1.0 + 3.0 * gain));
    }
    throw InvalidInput("unknown regime value");
}

}  // namespace

DelaySampler::DelaySampler(const InterferometerConfig& cfg, const SourceParams& src,
                           const DetectionParams& det, const SimConfig& sim) {
    src.validate();
    det.validate();
    cfg.validate();
    sim.validate();
    regime_ = cfg.regime;
    theta_ = cfg.theta;
    sigma_ = sim.jitter_sigma;
    accidental_ = sim.accidental_fraction;
    lo_ = det.window_lo;
    hi_ = det.window_hi;

    const double T = regime_ == Regime::Unbalanced
                         ? delay_from_path(cfg.path_difference)
                         : 0.0;
    const auto shape = comb_branches(regime_, 0.0, T, src.relative_gain);
    const int n_terms = default_comb_terms(src, det);

    // Node grid: integer subdivision of the bin grid at <= 1 ps spacing, so
    // table nodes and bin edges coincide exactly.
    const double r = det.bin_width / 1e-12;
    long sub = std::abs(r - std::llround(r)) < 1e-6 * r
                   ? std::llround(r)
                   : static_cast<long>(std::ceil(r));
    sub = std::max(sub, 1L);
    const double h = det.bin_width / static_cast<double>(sub);
    const long n_nodes = static_cast<long>(det.bin_count()) * sub + 1;
    nodes_.resize(n_nodes);
    for (long i = 0; i < n_nodes; ++i)
        nodes_[i] = lo_ + static_cast<double>(i) * h;
    nodes_.back() = hi_;

    branches_.resize(shape.size());
    for (size_t b = 0; b < shape.size(); ++b) {
        std::vector<double> density(n_nodes);
        for (long i = 0; i < n_nodes; ++i)
            density[i] = comb_correlation(nodes_[i] - shape[b].shift, src, det, n_terms);
        auto& br = branches_[b];
        br.cdf.resize(n_nodes);
        br.cdf[0] = 0.0;
        for (long i = 1; i < n_nodes; ++i)
            br.cdf[i] = br.cdf[i - 1] + 0.5 * (density[i - 1] + density[i]) * h;
        br.mass = br.cdf.back();
        if (br.mass > 0.0) {
            for (double& c : br.cdf) c /= br.mass;
            br.cdf.back() = 1.0;
        }
    }

    std::vector<double> mass(branches_.size());
    for (size_t b = 0; b < branches_.size(); ++b) mass[b] = branches_[b].mass;
    intensity_ = cfg.scale *
                 smeared_intensity(regime_, theta_, sigma_, src.relative_gain, mass);
    if (intensity_ <= 0.0) {
        if (accidental_ <= 0.0)
            throw EmptyDensityError(
                "signal density integrates to zero over the window and no "
                "accidental floor is configured");
        accidental_ = 1.0;  // floor only: every event is an accidental
    }
}

double DelaySampler::draw(uint64_t seed, uint64_t index) const {
    Rng rng = event_rng(seed, StreamPurpose::PairDelay, index);

    // Fixed per-event draw layout (jitter iff sigma > 0, accidental check iff
    // a floor exists, branch pick, table inversion): together with per-event
    // streams this makes chunked and one-shot generation identical.
    double theta_e = theta_;
    if (sigma_ > 0.0) theta_e = theta_ + sigma_ * rng.normal();
    if (accidental_ > 0.0) {
        if (rng.uniform() < accidental_) return lo_ + rng.uniform() * (hi_ - lo_);
    }

    size_t pick = 0;
    if (branches_.size() > 1) {
        // Unbalanced: center weight tracks the event's jittered phase, side
        // weights stay at 1.
        const double c = std::cos(theta_e);
        const double p0 = 4.0 * c * c * branches_[0].mass;
        const double p1 = branches_[1].mass;
        const double p2 = branches_[2].mass;
        const double u = rng.uniform() * (p0 + p1 + p2);
        pick = u < p0 ? 0 : (u < p0 + p1 ? 1 : 2);
    } else {
        (void)rng.uniform();  // keep the layout identical across regimes
    }

    const double u = rng.uniform();
    const auto& cdf = branches_[pick].cdf;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const size_t i2 = std::min<size_t>(it - cdf.begin(), cdf.size() - 1);
    const size_t i1 = i2 - 1;
    const double t = (u - cdf[i1]) / (cdf[i2] - cdf[i1]);
    return nodes_[i1] + t * (nodes_[i2] - nodes_[i1]);
}

Histogram simulate_histogram(const InterferometerConfig& cfg, const SourceParams& src,
                             const DetectionParams& det, const SimConfig& sim,
                             uint64_t first_index) {
    DelaySampler sampler(cfg, src, det, sim);
    Histogram hist;
    hist.edges = window_edges(det);
    hist.counts.assign(det.bin_count(), 0);
    const double lo = det.window_lo;
    const double w = det.bin_width;
    const long n_bins = det.bin_count();
    for (uint64_t k = 0; k < sim.n_pairs; ++k) {
        const double tau = sampler.draw(sim.seed, first_index + k);
        long bin = static_cast<long>((tau - lo) / w);
        bin = std::clamp(bin, 0L, n_bins - 1);
        ++hist.counts[bin];
    }
    return hist;
}

SimulatedSweep simulate_sweep(const InterferometerConfig& cfg, const SourceParams& src,
                              const DetectionParams& det, const SimConfig& sim,
                              std::span<const double> thetas) {
    if (thetas.empty()) throw InvalidInput("simulate_sweep needs at least one phase");
    src.validate();
    det.validate();
    cfg.validate();
    sim.validate();
    const double T = cfg.regime == Regime::Unbalanced
                         ? delay_from_path(cfg.path_difference)
                         : 0.0;
    const auto shape = comb_branches(cfg.regime, 0.0, T, src.relative_gain);
    const int n_terms = default_comb_terms(src, det);
    std::vector<double> mass(shape.size());
    for (size_t b = 0; b < shape.size(); ++b)
        mass[b] = comb_mass(det.window_lo, det.window_hi, shape[b].shift, src, det,
                            n_terms);

    std::vector<double> intensity(thetas.size());
    double i_max = 0.0;
    for (size_t j = 0; j < thetas.size(); ++j) {
        intensity[j] = smeared_intensity(cfg.regime, thetas[j], sim.jitter_sigma,
                                         src.relative_gain, mass);
        i_max = std::max(i_max, intensity[j]);
    }
    const double f = sim.accidental_fraction;
    if (i_max <= 0.0 && f <= 0.0)
        throw EmptyDensityError("sweep signal is zero at every phase and no "
                                "accidental floor is configured");

    // Event counts follow the physical rate: the brightest phase gets the
    // full n_pairs, other points scale with the smeared window intensity.
    // Accidentals contribute the same expected n_pairs * f at every phase.
    SimulatedSweep sweep;
    sweep.theta.assign(thetas.begin(), thetas.end());
    sweep.counts.resize(thetas.size());
    for (size_t j = 0; j < thetas.size(); ++j) {
        const double rel = i_max > 0.0 ? intensity[j] / i_max : 0.0;
        const double rate = f + (1.0 - f) * rel;
        sweep.counts[j] = static_cast<uint64_t>(
            std::llround(static_cast<double>(sim.n_pairs) * rate));
    }
    return sweep;
}

TimeTagStream simulate_timetags(const InterferometerConfig& cfg, const SourceParams& src,
                                const DetectionParams& det, const SimConfig& sim,
                                double pair_rate) {
    if (!std::isfinite(pair_rate) || pair_rate <= 0.0)
        throw InvalidInput("pair_rate must be positive");
    DelaySampler sampler(cfg, src, det, sim);
    TimeTagStream stream;
    stream.start.resize(sim.n_pairs);
    stream.stop.resize(sim.n_pairs);
    double t = 0.0;
    for (uint64_t k = 0; k < sim.n_pairs; ++k) {
        Rng rng = event_rng(sim.seed, StreamPurpose::StartTimes, k);
        t += -std::log1p(-rng.uniform()) / pair_rate;
        stream.start[k] = t;
        stream.stop[k] = t + sampler.draw(sim.seed, k);
    }
    stream.pileup_warning = 1.0 / pair_rate < det.window_span();
    return stream;
}

Histogram histogram_timetags(const TimeTagStream& stream, const DetectionParams& det) {
    det.validate();
    if (stream.start.size() != stream.stop.size())
        throw InvalidInput("time-tag stream has mismatched channel lengths");
    Histogram hist;
    hist.edges = window_edges(det);
    hist.counts.assign(det.bin_count(), 0);
    std::vector<double> stops = stream.stop;
    std::sort(stops.begin(), stops.end());
    const double lo = det.window_lo, hi = det.window_hi, w = det.bin_width;
    const long n_bins = det.bin_count();
    for (double start : stream.start) {
        auto first = std::lower_bound(stops.begin(), stops.end(), start + lo);
        for (auto it = first; it != stops.end() && *it < start + hi; ++it) {
            long bin = static_cast<long>((*it - start - lo) / w);
            bin = std::clamp(bin, 0L, n_bins - 1);
            ++hist.counts[bin];
        }
    }
    return hist;
}

}  // namespace biphoton
