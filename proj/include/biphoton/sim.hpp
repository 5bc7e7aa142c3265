#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "biphoton/model.hpp"
#include "biphoton/params.hpp"

namespace biphoton {

// Monte Carlo coincidence generation.
//
// Delays are drawn from the exact analytic density restricted to the
// detection window, via per-branch inverse-CDF tables whose nodes subdivide
// the bin grid (no rejection step, no envelope approximation).  All draws are
// keyed by (seed, purpose, event index), see rng.hpp, so results do not
// depend on how generation is chunked.

struct SimConfig {
    uint64_t seed = 1;
    uint64_t n_pairs = 100000;        // signal pairs per run (or per sweep point cap)
    double jitter_sigma = 0.0;        // phase jitter on theta, rad, >= 0
    double accidental_fraction = 0.0; // fraction of events drawn flat in the window
    std::vector<std::string> validate() const;
};

struct Histogram {
    std::vector<double> edges;    // bin edges, s, size counts.size()+1
    std::vector<uint64_t> counts;

    double bin_width() const;
    uint64_t total() const;
};

// Uniform bin edges for the detection window.
std::vector<double> window_edges(const DetectionParams& det);

// Precomputed sampler for one (config, source, detection) triple.
class DelaySampler {
  public:
    // Throws EmptyDensityError when the windowed signal density integrates to
    // zero and there is no accidental floor to fall back on.
    DelaySampler(const InterferometerConfig& cfg, const SourceParams& src,
                 const DetectionParams& det, const SimConfig& sim);

    // Delay for event `index` under master seed `seed`.  Pure function of
    // (seed, index) for a fixed sampler.
    double draw(uint64_t seed, uint64_t index) const;

    // Window-integrated signal intensity at the sampler's phase (after
    // jitter smearing), in the analytic curve's units.  Drives the relative
    // event counts across a sweep.
    double intensity() const { return intensity_; }

  private:
    struct Branch {
        double mass;              // window mass of the branch comb (theta-free)
        std::vector<double> cdf;  // normalized cdf on the node grid, 0..1
    };
    std::vector<double> nodes_;   // shared node grid, s
    std::vector<Branch> branches_;
    Regime regime_;
    double theta_ = 0.0;          // nominal phase
    double sigma_ = 0.0;          // phase jitter
    double accidental_ = 0.0;     // per-event accidental probability
    double lo_ = 0.0, hi_ = 0.0;  // window
    double intensity_ = 0.0;
};

// Generate a coincidence histogram: n_pairs delay draws filled into the
// window's bin grid.  Draw indexes run [first_index, first_index + n_pairs),
// so two half-size runs with first_index 0 and n/2 sum to the full run.
Histogram simulate_histogram(const InterferometerConfig& cfg, const SourceParams& src,
                             const DetectionParams& det, const SimConfig& sim,
                             uint64_t first_index = 0);

// One sweep point: phase, events generated, histogram total.
struct SweepPoint {
    double theta;
    uint64_t n_events;
};

struct SimulatedSweep {
    std::vector<double> theta;
    std::vector<uint64_t> counts;  // window totals per phase
};

// Monte Carlo phase sweep.  Event counts scale with the smeared window
// intensity, N(theta) = round(n_pairs * I(theta)/I_max), so fringes survive
// in the totals; accidentals contribute a phase-independent floor.  Each
// point uses an independent seed derived from (sim.seed, point index).
SimulatedSweep simulate_sweep(const InterferometerConfig& cfg, const SourceParams& src,
                              const DetectionParams& det, const SimConfig& sim,
                              std::span<const double> thetas);

// Time-tag stream: absolute start/stop pairs, one per coincidence.
struct TimeTagStream {
    std::vector<double> start;  // s, strictly increasing
    std::vector<double> stop;   // start + drawn delay
    bool pileup_warning = false;  // mean start spacing shorter than the window
};

// Starts form a Poisson process at pair_rate (Hz); stops trail by the drawn
// delay.  Same delay stream as simulate_histogram.
TimeTagStream simulate_timetags(const InterferometerConfig& cfg, const SourceParams& src,
                                const DetectionParams& det, const SimConfig& sim,
                                double pair_rate);

// Start/stop correlation: histogram of (stop - start) for every pair with a
// difference inside the window.  Recovers simulate_histogram's output when
// pileup is absent.
Histogram histogram_timetags(const TimeTagStream& stream, const DetectionParams& det);

}  // namespace biphoton
