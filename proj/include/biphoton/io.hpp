#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biphoton/fit.hpp"
#include "biphoton/model.hpp"
#include "biphoton/params.hpp"
#include "biphoton/sim.hpp"

namespace biphoton {

// A file could not be opened, read, or written.  Malformed *content* is
// InvalidInput instead; this class is for the filesystem saying no.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// CSV and config I/O.  All numbers are written with shortest-round-trip
// formatting so a load after a save reproduces every field bit for bit.
//
// CSV layout: '#'-prefixed metadata lines (key=value), then a '#' header
// naming the columns, then the rows.  Histograms store bin centers in ns
// plus integer counts; curves store tau in ns plus the curve value; sweeps
// store theta in rad plus counts.

using Metadata = std::vector<std::pair<std::string, std::string>>;

std::string format_double(double v);  // shortest round-trip decimal
double parse_double(const std::string& s);

void write_histogram_csv(const std::string& path, const Histogram& hist,
                         const Metadata& meta);
Histogram read_histogram_csv(const std::string& path, Metadata* meta = nullptr);

void write_curve_csv(const std::string& path, const CorrelationCurve& curve,
                     const Metadata& meta);
CorrelationCurve read_curve_csv(const std::string& path, Metadata* meta = nullptr);

void write_sweep_csv(const std::string& path, std::span<const double> theta,
                     std::span<const uint64_t> counts, const Metadata& meta);
void write_sweep_csv(const std::string& path, std::span<const double> theta,
                     std::span<const double> counts, const Metadata& meta);
SimulatedSweep read_sweep_csv(const std::string& path, Metadata* meta = nullptr);

// Sweep reader that keeps the counts column as doubles, for files produced
// from the analytic model (fractional values).
PhaseSweep read_phase_sweep_csv(const std::string& path, Metadata* meta = nullptr);

// Full run setup as one bundle, the unit the CLI and config files deal in.
// Boundary units: ns for times, mm for path difference, MHz for bandwidth
// (cycles, not angular), rad for theta.  The params structs stay SI.
struct RunConfig {
    SourceParams source;
    DetectionParams detection;
    InterferometerConfig interferometer;
    SimConfig sim;
    double coherence_length = default_coherence_length;  // m

    std::vector<std::string> validate() const;
};

// Named baseline setups selectable from the CLI.
//   paper-unbalanced        170 mm path difference, three-peak regime
//   paper-balanced-perfect   sub-coherence path difference
//   paper-balanced-rough     0.74 mm path difference
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// JSON config file covering any subset of RunConfig; unset keys keep the
// base values.  Keys use the boundary units above (suffix _ns, _mm, _mhz).
RunConfig load_config(const std::string& path, RunConfig base);

// "0.785", "45deg", "0.25pi", "1.2rad" -> radians.
double parse_theta(const std::string& text);

// Human-readable fit report (also parseable key=value lines).
std::string format_fit_report(const FitResult& fit, const InterferometerConfig& cfg);

}  // namespace biphoton
