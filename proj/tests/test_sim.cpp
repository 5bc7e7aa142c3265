#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "biphoton/model.hpp"
#include "biphoton/params.hpp"
#include "biphoton/rng.hpp"
#include "biphoton/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

using namespace biphoton;

namespace {

InterferometerConfig unbalanced_cfg() {
    InterferometerConfig cfg;
    cfg.regime = Regime::Unbalanced;
    cfg.path_difference = 0.170;
    cfg.theta = 0.0;
    return cfg;
}

InterferometerConfig perfect_cfg(double theta) {
    InterferometerConfig cfg;
    cfg.regime = Regime::PerfectBalanced;
    cfg.path_difference = 0.0;
    cfg.theta = theta;
    return cfg;
}

InterferometerConfig rough_cfg(double theta) {
    InterferometerConfig cfg;
    cfg.regime = Regime::RoughBalanced;
    cfg.path_difference = 0.74e-3;
    cfg.theta = theta;
    return cfg;
}

std::vector<double> as_double(const std::vector<uint64_t>& v) {
    return std::vector<double>(v.begin(), v.end());
}

} // namespace

TEST_CASE("splitmix stream matches the reference sequence") {
    Rng r(0);
    CHECK(r.next_u64() == 0xE220A8397B1DCDAFull);
    CHECK(r.next_u64() == 0x6E789E6AA1B965F4ull);
    CHECK(r.next_u64() == 0x06C45D188009454Full);
}

TEST_CASE("uniform draws stay in the half open unit interval") {
    Rng r(123);
    double mn = 1.0, mx = 0.0, sum = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mn = std::min(mn, u);
        mx = std::max(mx, u);
        sum += u;
    }
    CHECK(std::fabs(sum / n - 0.5) < 0.0015);
    CHECK(mn < 0.01);
    CHECK(mx > 0.99);
}

TEST_CASE("normal draws have the right moments and tail split") {
    Rng r(321);
    const int n = 100000;
    double s1 = 0.0, s2 = 0.0;
    int below196 = 0;
    for (int i = 0; i < n; ++i) {
        double z = r.normal();
        s1 += z;
        s2 += z * z;
        if (z < 1.96) ++below196;
    }
    double mean = s1 / n;
    double var = s2 / n - mean * mean;
    CHECK(std::fabs(mean) < 0.015);
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
    CHECK(std::fabs((double)below196 / n - 0.975) < 0.0025);
}

TEST_CASE("event streams differ by purpose and index but not by history") {
    auto a = event_rng(1, StreamPurpose::PairDelay, 0);
    auto b = event_rng(1, StreamPurpose::StartTimes, 0);
    auto c = event_rng(1, StreamPurpose::PairDelay, 1);
    auto a2 = event_rng(1, StreamPurpose::PairDelay, 0);
    uint64_t va = a.next_u64();
    CHECK(va != b.next_u64());
    CHECK(va != c.next_u64());
    CHECK(va == a2.next_u64());
    CHECK(stream_seed(1, StreamPurpose::PairDelay, 7) !=
          stream_seed(2, StreamPurpose::PairDelay, 7));
}

TEST_CASE("simulation config validation") {
    SimConfig sim;
    CHECK(sim.validate().empty());
    sim.jitter_sigma = -0.1;
    CHECK_THROWS_AS(sim.validate(), InvalidInput);
    sim = SimConfig{};
    sim.accidental_fraction = 1.5;
    CHECK_THROWS_AS(sim.validate(), InvalidInput);
    sim = SimConfig{};
    sim.accidental_fraction = 1.0;
    CHECK_FALSE(sim.validate().empty());
}

TEST_CASE("window edges tile the coincidence window") {
    DetectionParams det;
    auto edges = window_edges(det);
    REQUIRE(edges.size() == 201);
    CHECK(edges.front() == det.window_lo);
    CHECK(edges.back() == det.window_hi);
    for (size_t i = 1; i < edges.size(); ++i)
        CHECK(edges[i] > edges[i - 1]);
    Histogram empty;
    CHECK_THROWS_AS(empty.bin_width(), InvalidInput);
}

TEST_CASE("histogram generation is deterministic in the seed") {
    SourceParams src;
    DetectionParams det;
    auto cfg = unbalanced_cfg();
    SimConfig sim;
    sim.seed = 5;
    sim.n_pairs = 20000;
    auto h1 = simulate_histogram(cfg, src, det, sim);
    auto h2 = simulate_histogram(cfg, src, det, sim);
    CHECK(h1.counts == h2.counts);
    CHECK(h1.total() == sim.n_pairs);
    sim.seed = 6;
    auto h3 = simulate_histogram(cfg, src, det, sim);
    CHECK(h1.counts != h3.counts);
}

TEST_CASE("chunked generation equals one shot generation for any split") {
    SourceParams src;
    DetectionParams det;
    auto cfg = unbalanced_cfg();
    SimConfig sim;
    sim.seed = 9;
    sim.n_pairs = 9000;
    sim.jitter_sigma = 0.2;
    sim.accidental_fraction = 0.1;
    auto whole = simulate_histogram(cfg, src, det, sim);

    for (auto chunks : {std::vector<uint64_t>{9000},
                        std::vector<uint64_t>{1, 8999},
                        std::vector<uint64_t>{3000, 3000, 3000},
                        std::vector<uint64_t>{7, 900, 8093}}) {
        std::vector<uint64_t> acc(det.bin_count(), 0);
        uint64_t first = 0;
        for (uint64_t n : chunks) {
            SimConfig part = sim;
            part.n_pairs = n;
            auto h = simulate_histogram(cfg, src, det, part, first);
            for (size_t i = 0; i < acc.size(); ++i) acc[i] += h.counts[i];
            first += n;
        }
        CHECK(acc == whole.counts);
    }
}

TEST_CASE("halving the bin width refines the same draws") {
    SourceParams src;
    DetectionParams det100;
    DetectionParams det50 = det100;
    det50.bin_width = 50e-12;
    auto cfg = unbalanced_cfg();
    cfg.theta = 0.6;
    SimConfig sim;
    sim.seed = 31;
    sim.n_pairs = 30000;
    auto coarse = simulate_histogram(cfg, src, det100, sim);
    auto fine = simulate_histogram(cfg, src, det50, sim);
    REQUIRE(fine.counts.size() == 2 * coarse.counts.size());
    for (size_t i = 0; i < coarse.counts.size(); ++i)
        CHECK(fine.counts[2 * i] + fine.counts[2 * i + 1] == coarse.counts[i]);
}

TEST_CASE("zero signal without a floor is an error, with a floor it is uniform") {
    SourceParams src;
    DetectionParams det;
    auto cfg = perfect_cfg(std::numbers::pi); // dark fringe: no signal at all
    SimConfig sim;
    sim.seed = 4;
    sim.n_pairs = 20000;
    CHECK_THROWS_AS(simulate_histogram(cfg, src, det, sim), EmptyDensityError);

    sim.accidental_fraction = 0.5; // floor present: all events become accidentals
    DelaySampler sampler(cfg, src, det, sim);
    CHECK(sampler.intensity() == 0.0);
    std::vector<double> draws(sim.n_pairs);
    for (uint64_t k = 0; k < sim.n_pairs; ++k) {
        draws[k] = sampler.draw(sim.seed, k);
        CHECK(draws[k] >= det.window_lo);
        CHECK(draws[k] < det.window_hi);
    }
    // Kolmogorov-Smirnov distance against the uniform law on the window
    std::sort(draws.begin(), draws.end());
    const double span = det.window_span();
    double d = 0.0;
    const double n = static_cast<double>(draws.size());
    for (size_t i = 0; i < draws.size(); ++i) {
        double fx = (draws[i] - det.window_lo) / span;
        d = std::max(d, std::max(fx - (double)i / n, (double)(i + 1) / n - fx));
    }
    CHECK(d * std::sqrt(n) < 1.63); // 1% critical value
}

TEST_CASE("accidental floor mixes into the histogram as a flat addition") {
    SourceParams src;
    DetectionParams det;
    auto cfg = unbalanced_cfg();
    SimConfig sim;
    sim.seed = 77;
    sim.n_pairs = 500000;
    sim.accidental_fraction = 0.2;
    auto hist = simulate_histogram(cfg, src, det, sim);
    CHECK(hist.total() == sim.n_pairs);

    const double T = delay_from_path(cfg.path_difference);
    const int nt = default_comb_terms(src, det);
    const int nb = det.bin_count();
    std::vector<double> sig(nb);
    double sig_total = 0.0;
    for (int i = 0; i < nb; ++i) {
        double lo = hist.edges[i], hi = hist.edges[i + 1];
        sig[i] = 4.0 * comb_mass(lo, hi, 0.0, src, det, nt) +
                 comb_mass(lo, hi, T, src, det, nt) +
                 comb_mass(lo, hi, -T, src, det, nt);
        sig_total += sig[i];
    }
    const double f = sim.accidental_fraction;
    double chi2 = 0.0;
    for (int i = 0; i < nb; ++i) {
        double e = (double)sim.n_pairs *
                   ((1.0 - f) * sig[i] / sig_total + f / (double)nb);
        REQUIRE(e >= 10.0);
        chi2 += (hist.counts[i] - e) * (hist.counts[i] - e) / e;
    }
    double per_dof = chi2 / nb;
    INFO("chi2/dof = ", per_dof);
    CHECK(per_dof > 0.8);
    CHECK(per_dof < 1.2);
}

TEST_CASE("sampler intensity agrees with the analytic window rate") {
    SourceParams src;
    DetectionParams det;
    SimConfig sim;
    auto cfg = perfect_cfg(0.7);
    cfg.scale = 2.0;
    DelaySampler sampler(cfg, src, det, sim);
    const int nt = default_comb_terms(src, det);
    double want = 2.0 * 0.25 * std::pow(1.0 + std::cos(0.7), 2) *
                  comb_mass(det.window_lo, det.window_hi, 0.0, src, det, nt);
    CHECK(sampler.intensity() == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("deterministic sweeps follow the smeared rate curve") {
    SourceParams src;
    DetectionParams det;
    SimConfig sim;
    sim.n_pairs = 10000;
    auto grid = phase_grid(64);

    auto swa = simulate_sweep(perfect_cfg(0.0), src, det, sim, grid);
    REQUIRE(swa.counts.size() == 64);
    CHECK(*std::max_element(swa.counts.begin(), swa.counts.end()) == sim.n_pairs);
    CHECK(swa.counts[32] == 0); // dark fringe, no floor
    auto swa2 = simulate_sweep(perfect_cfg(0.0), src, det, sim, grid);
    CHECK(swa.counts == swa2.counts);

    // floor keeps the dark fringe at n * f
    SimConfig simf = sim;
    simf.accidental_fraction = 0.25;
    auto swf = simulate_sweep(perfect_cfg(0.0), src, det, simf, grid);
    CHECK(swf.counts[32] == 2500);
    CHECK(*std::max_element(swf.counts.begin(), swf.counts.end()) == sim.n_pairs);

    // phase jitter washes the fringe out, lowering the visibility
    SimConfig simj = sim;
    simj.jitter_sigma = 0.35;
    auto swj_a = simulate_sweep(perfect_cfg(0.0), src, det, simj, grid);
    CHECK(visibility(as_double(swj_a.counts)) <
          visibility(as_double(swa.counts)));
    auto swb = simulate_sweep(rough_cfg(0.0), src, det, sim, grid);
    auto swj_b = simulate_sweep(rough_cfg(0.0), src, det, simj, grid);
    CHECK(visibility(as_double(swj_b.counts)) <
          visibility(as_double(swb.counts)));

    // all-dark sweep: error without a floor, constant floor with one
    std::vector<double> dark{std::numbers::pi};
    CHECK_THROWS_AS(simulate_sweep(perfect_cfg(0.0), src, det, sim, dark),
                    EmptyDensityError);
    auto swd = simulate_sweep(perfect_cfg(0.0), src, det, simf, dark);
    CHECK(swd.counts[0] == 2500);
}

TEST_CASE("time tag streams reproduce the histogram at low rate") {
    SourceParams src;
    DetectionParams det;
    auto cfg = unbalanced_cfg();
    SimConfig sim;
    sim.seed = 11;
    sim.n_pairs = 500;
    auto stream = simulate_timetags(cfg, src, det, sim, 1e4);
    REQUIRE(stream.start.size() == 500);
    REQUIRE(stream.stop.size() == 500);
    CHECK_FALSE(stream.pileup_warning);
    for (size_t k = 1; k < stream.start.size(); ++k)
        CHECK(stream.start[k] > stream.start[k - 1]);
    auto from_tags = histogram_timetags(stream, det);
    auto direct = simulate_histogram(cfg, src, det, sim);
    CHECK(from_tags.counts == direct.counts);
}

TEST_CASE("high pair rates raise the pileup flag and extra coincidences") {
    SourceParams src;
    DetectionParams det;
    auto cfg = unbalanced_cfg();
    SimConfig sim;
    sim.seed = 12;
    sim.n_pairs = 2000;
    auto stream = simulate_timetags(cfg, src, det, sim, 1e9);
    CHECK(stream.pileup_warning);
    auto hist = histogram_timetags(stream, det);
    CHECK(hist.total() > sim.n_pairs); // cross pairs pile on top
    CHECK_THROWS_AS(simulate_timetags(cfg, src, det, sim, 0.0), InvalidInput);
}

TEST_CASE("single pair and empty runs behave") {
    SourceParams src;
    DetectionParams det;
    auto cfg = unbalanced_cfg();
    SimConfig sim;
    sim.n_pairs = 1;
    auto h1 = simulate_histogram(cfg, src, det, sim);
    CHECK(h1.total() == 1);
    sim.n_pairs = 0;
    auto h0 = simulate_histogram(cfg, src, det, sim);
    CHECK(h0.total() == 0);
    CHECK(h0.counts.size() == 200);
}
