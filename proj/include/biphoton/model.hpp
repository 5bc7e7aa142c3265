#pragma once

#include <span>
#include <vector>

#include "biphoton/params.hpp"

namespace biphoton {

// ---------------------------------------------------------------------------
// Closed-form second-order correlation model for comb-spectrum photon pairs
// behind a Michelson interferometer.
//
// The building block is the jitter-broadened comb correlation
//
//   G(tau) = exp(-bw*|u|) * sum_n (1 + a*|u - n*tr|) * exp(-a*|u - n*tr|),
//
// with u = tau - electric_delay, tr the cavity round trip, bw the source
// bandwidth, and a = 2*ln2 / resolving_time.  Each summand peaks at exactly 1
// on its tooth center; the envelope multiplies the whole sum.  The regime
// curves combine copies of G:
//
//   unbalanced       scale*[4*G(tau)*cos^2(theta) + G(tau-T) + G(tau+T)] + background
//   balanced perfect scale*(1+g)/4 * G(tau) * (1+cos(theta))^2            + background
//   balanced rough   scale/4 * G(tau) * (cos^2(theta) + (1+3g)/2)         + background
//
// where T = path_difference / c and g is the source's relative_gain.
// ---------------------------------------------------------------------------

// Convert a full interferometer path difference into the arm delay T = dl/c.
// Throws InvalidInput for negative or non-finite input.
double delay_from_path(double path_difference);

// Decide the operating regime from the path difference: PerfectBalanced below
// the coherence length, RoughBalanced while T < round_trip/10, else Unbalanced.
Regime classify_regime(double path_difference, double coherence_length,
                       const SourceParams& src);

// Default comb truncation: enough teeth to cover the window plus 30/bandwidth
// of envelope reach on each side.
int default_comb_terms(const SourceParams& src, const DetectionParams& det);

// The base comb correlation G(tau), truncated to |n| <= n_terms.
// Summation runs center-outward in symmetric tooth pairs, so the result is
// bitwise symmetric about the electric delay.
double comb_correlation(double tau, const SourceParams& src,
                        const DetectionParams& det, int n_terms);

// Exact integral of the comb correlation over [lo, hi], with tooth/envelope
// centers shifted by `shift` relative to the electric delay.  Piecewise
// closed form (no quadrature); used for branch masses, expected bin counts,
// and the fit model.
double comb_mass(double lo, double hi, double shift, const SourceParams& src,
                 const DetectionParams& det, int n_terms);

// Regime curves.  The balanced forms take theta explicitly (the config's
// theta is ignored there); every form checks cfg.regime and throws
// RegimeError on mismatch.
double correlation_unbalanced(double tau, const InterferometerConfig& cfg,
                              const SourceParams& src, const DetectionParams& det);
double correlation_balanced_perfect(double tau, double theta,
                                    const InterferometerConfig& cfg,
                                    const SourceParams& src,
                                    const DetectionParams& det);
double correlation_balanced_rough(double tau, double theta,
                                  const InterferometerConfig& cfg,
                                  const SourceParams& src,
                                  const DetectionParams& det);

// Dispatch on cfg.regime, using cfg.theta.
double correlation(double tau, const InterferometerConfig& cfg,
                   const SourceParams& src, const DetectionParams& det);

// Phase-dependent prefactors of the comb branches, shared by the analytic
// curves, the sampler, and the fit model.
//   unbalanced: {4*cos^2(theta), 1, 1} on combs shifted by {0, +T, -T}
//   balanced:   single comb with the global factor above
struct CombBranch {
    double shift;   // comb center offset relative to the electric delay, s
    double weight;  // phase-dependent coefficient (scale not included)
};
std::vector<CombBranch> comb_branches(Regime regime, double theta, double arm_delay,
                                      double relative_gain);

// Average of the regime curve over each bin of `edges` (exact integrals
// divided by the bin widths).
std::vector<double> bin_means(std::span<const double> edges,
                              const InterferometerConfig& cfg,
                              const SourceParams& src, const DetectionParams& det);

// A sampled analytic curve.
struct CorrelationCurve {
    std::vector<double> tau;    // grid, s
    std::vector<double> value;  // curve values, >= 0
};

// Evaluate the regime curve on a uniform grid over [lo, hi] with the given
// resolution (grid points at lo + k*resolution, inclusive of lo, while <= hi).
CorrelationCurve sample_curve(const InterferometerConfig& cfg, const SourceParams& src,
                              const DetectionParams& det, double lo, double hi,
                              double resolution);

// Integrated coincidence versus phase.
struct PhaseSweep {
    std::vector<double> theta;   // rad
    std::vector<double> counts;  // window-integrated correlation (arbitrary units)
};

// Integrate the regime curve over the detection window for each phase in
// `thetas` (exact comb integrals; no quadrature error).
PhaseSweep phase_sweep(const InterferometerConfig& cfg, const SourceParams& src,
                       const DetectionParams& det, std::span<const double> thetas);

// Uniform phase grid [0, 2*pi), n points.
std::vector<double> phase_grid(int n);

// Fringe visibility (max-min)/(max+min) of a sweep.  Requires >= 2 points;
// throws UndefinedVisibilityError when the sweep is identically zero.
double visibility(std::span<const double> counts);

// Count strict local maxima of a periodic sweep (wrap-around; plateaus count
// once).  Used to compare fringe densities of the balanced regimes.
int fringe_count(std::span<const double> counts);

}  // namespace biphoton
