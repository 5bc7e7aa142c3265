#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biphoton/model.hpp"
#include "biphoton/params.hpp"
#include "biphoton/sim.hpp"

namespace biphoton {

// Weighted damped-least-squares fit of the analytic model to a histogram.
//
// Expected bin values are exact bin averages of the regime curve times the
// bin width times an overall count scale, plus a flat background per bin.
// Weights are Poisson: var = max(counts, 1).

// Fit parameter order.  Everything is SI at this layer.
enum class FitParam : int {
    Scale = 0,        // counts per unit of the analytic curve integral
    Background,       // counts per bin, flat
    Theta,            // rad
    ElectricDelay,    // s
    ArmDelay,         // s (unbalanced only; inert in balanced regimes)
    Bandwidth,        // rad/s
    ResolvingTime,    // s
    RoundTrip,        // s
    RelativeGain,     // dimensionless
    Count_
};
inline constexpr int n_fit_params = static_cast<int>(FitParam::Count_);
const char* fit_param_name(FitParam p);

struct FitOptions {
    std::array<bool, n_fit_params> free_mask{};   // which parameters vary
    std::array<double, n_fit_params> lower{};     // box bounds (filled by defaults())
    std::array<double, n_fit_params> upper{};
    int max_iterations = 200;
    double lambda0 = 1e-3;
    double tol = 1e-8;        // relative chi^2 decrease
    int n_terms = 0;          // comb truncation; 0 = default_comb_terms

    // Free {Scale, Background, Theta}, sane physical bounds everywhere.
    static FitOptions defaults();
};

struct FitResult {
    std::array<double, n_fit_params> value{};
    std::array<double, n_fit_params> sigma{};   // infinity for unconstrained params
    double chi2 = 0.0;
    int dof = 0;
    int n_iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    std::vector<double> chi2_trace;             // accepted chi^2 per iteration

    // Phase folded into the regime's identifiable range ([0,pi/2] for
    // unbalanced/rough, [0,pi] for perfect), plus a human-readable note on
    // the symmetry that was folded out.
    double theta_canonical = 0.0;
    std::string theta_ambiguity;

    double chi2_per_dof() const;
};

// Starting point for the fit: the triple's current values plus a count scale
// estimated from the histogram total.
std::array<double, n_fit_params> initial_guess(const Histogram& hist,
                                               const InterferometerConfig& cfg,
                                               const SourceParams& src,
                                               const DetectionParams& det);

// Run the fit.  Throws DegenerateFitError when two free parameters are
// exactly collinear, naming the pair.  In the balanced regimes the delay
// shape does not depend on theta (only the rate does), so freeing Scale and
// Theta together is degenerate there: fix Scale to a known brightness to
// estimate the phase from the signal-to-background split.  Scale and
// RelativeGain are collinear the same way.  A parameter the data simply does
// not constrain (zero derivative, e.g. Theta at an extremum) gets
// sigma = inf instead of throwing.  Bins where the initial model is below
// 1e-3 of its peak are masked out when Background is fixed at zero.
FitResult fit_histogram(const Histogram& hist, const InterferometerConfig& cfg,
                        const SourceParams& src, const DetectionParams& det,
                        std::array<double, n_fit_params> init,
                        const FitOptions& opt);

// Convenience: defaults() options and initial_guess().
FitResult fit_phase(const Histogram& hist, const InterferometerConfig& cfg,
                    const SourceParams& src, const DetectionParams& det);

// Pearson chi^2 of a histogram against the analytic expectation with the
// given parameter values.  Bins with expected < 10 are skipped.  Throws
// AlignmentError when the histogram grid does not match `det`.
struct GoodnessResult {
    double chi2 = 0.0;
    int dof = 0;
    int bins_used = 0;
    double chi2_per_dof() const { return dof > 0 ? chi2 / dof : 0.0; }
};
GoodnessResult goodness(const Histogram& hist, const InterferometerConfig& cfg,
                        const SourceParams& src, const DetectionParams& det,
                        std::array<double, n_fit_params> params, int n_terms = 0);

// Expected counts per bin for the parameter vector (exact bin integrals).
std::vector<double> expected_counts(std::span<const double> edges,
                                    const InterferometerConfig& cfg,
                                    const SourceParams& src, const DetectionParams& det,
                                    const std::array<double, n_fit_params>& params,
                                    int n_terms);

}  // namespace biphoton
