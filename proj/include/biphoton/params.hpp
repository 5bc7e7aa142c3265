#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace biphoton {

// Speed of light in vacuum, m/s (exact by definition).
inline constexpr double speed_of_light = 299792458.0;

// Default single-photon coherence length used to separate the perfectly
// balanced regime from the roughly balanced one, meters.
inline constexpr double default_coherence_length = 90e-6;

// ---------------------------------------------------------------------------
// Error taxonomy. Everything user-recoverable derives from std::runtime_error
// so the CLI can map exception class -> exit code.
// ---------------------------------------------------------------------------

// Parameter or argument violates a precondition (non-finite, out of range,
// inconsistent grids being built, ...).
struct InvalidInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A regime-specific operation was called with a config declaring a
// different regime.
struct RegimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The requested sampling density integrates to zero over the window and no
// accidental floor is present.
struct EmptyDensityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The normal matrix of a fit is singular in a way that cannot be attributed
// to a single zero-effect parameter; message names the collinear parameters.
struct DegenerateFitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Two binned objects that must share a grid do not.
struct AlignmentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Visibility of an identically-zero sweep.
struct UndefinedVisibilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Parameter records. All quantities are SI: seconds, meters, radians, rad/s.
// Boundary-unit conversion (ns, mm, MHz, degrees) happens in the io layer.
// ---------------------------------------------------------------------------

// Interferometer operating regime, decided by the arm-length imbalance.
enum class Regime {
    Unbalanced,       // imbalance delay comparable to the comb tooth spacing
    PerfectBalanced,  // imbalance below the single-photon coherence length
    RoughBalanced,    // imbalance above coherence length, delay << tooth spacing
};

const char* regime_name(Regime r);

// Pair source: a sub-threshold optical parametric oscillator emitting a
// frequency comb of signal/idler mode pairs.
struct SourceParams {
    double bandwidth = 2 * M_PI * 7.8e6;  // mode linewidth, angular, rad/s
    double round_trip = 1.63e-9;          // cavity round-trip time (tooth spacing), s
    double relative_gain = 0.0;           // pump-strength correction, dimensionless, in [0,1)

    // Throws InvalidInput on hard violations; returns human-readable warnings
    // for soft ones (e.g. bandwidth * round_trip >= 1, where the comb teeth
    // wash out and the comb picture stops being meaningful).
    std::vector<std::string> validate() const;
};

// Detection chain: start-stop electronics and the histogram grid.
struct DetectionParams {
    double resolving_time = 220e-12;  // detector pair resolving time, s (>= 1 ps)
    double electric_delay = 55e-9;    // electric start-stop offset, s
    double bin_width = 100e-12;       // histogram bin width, s
    double window_lo = 45e-9;         // histogram window, s
    double window_hi = 65e-9;

    std::vector<std::string> validate() const;

    double window_span() const { return window_hi - window_lo; }
    // Number of histogram bins; validate() enforces that the window span is an
    // integer multiple of bin_width (within 1e-6 relative).
    int bin_count() const;
};

// Michelson interferometer settings plus the free constants of the
// correlation model.
struct InterferometerConfig {
    Regime regime = Regime::Unbalanced;
    double path_difference = 0.170;  // full optical path difference between arms, m
    double theta = 0.0;              // relative phase between arms, rad, in [0, 2*pi)
    double scale = 1.0;              // multiplicative constant of the correlation model
    double background = 0.0;         // additive background level

    std::vector<std::string> validate() const;
};

// Wrap an angle into [0, 2*pi).
double normalize_phase(double theta);

}  // namespace biphoton
