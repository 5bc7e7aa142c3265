#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "biphoton/fit.hpp"
#include "biphoton/io.hpp"
#include "biphoton/model.hpp"
#include "biphoton/params.hpp"
#include "biphoton/sim.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

using namespace biphoton;
namespace fs = std::filesystem;

namespace {

const std::string& work_dir() {
    static const std::string dir = [] {
        fs::path d = fs::temp_directory_path() / "biphoton_io_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d.string();
    }();
    return dir;
}

std::string tmp(const std::string& name) { return work_dir() + "/" + name; }

int run_cli(const std::string& args, const std::string& stdout_path = "") {
    std::string cmd = std::string("\"") + BIPHOTON_CLI_PATH + "\" " + args;
    cmd += stdout_path.empty() ? " > /dev/null" : " > " + stdout_path;
    cmd += " 2> /dev/null";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    REQUIRE(f.good());
    f << content;
}

// First "key=value" line value in a report/stdout capture.
std::string report_value(const std::string& text, const std::string& key) {
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
    return "";
}

} // namespace

TEST_CASE("doubles format and parse losslessly") {
    const double vals[] = {0.0,    1.0,     0.1,  1.0 / 3.0, -3.25, 45.05,
                           1e-300, 6.5e-8,  2.0 * std::numbers::pi * 7.8e6,
                           -0.567058961837, std::numeric_limits<double>::infinity()};
    for (double v : vals) {
        const std::string s = format_double(v);
        CHECK(parse_double(s) == v);
    }
    CHECK(parse_double(" 1.5 ") == 1.5);
    CHECK_THROWS_AS(parse_double("1.2x"), InvalidInput);
    CHECK_THROWS_AS(parse_double(""), InvalidInput);
    CHECK_THROWS_AS(parse_double("abc"), InvalidInput);
    CHECK_THROWS_AS(parse_double("1,2"), InvalidInput);
}

TEST_CASE("phase strings parse in all supported spellings") {
    CHECK(parse_theta("0.785") == 0.785);
    CHECK(parse_theta("1.2rad") == 1.2);
    CHECK(parse_theta("45deg") ==
          doctest::Approx(std::numbers::pi / 4).epsilon(1e-15));
    CHECK(parse_theta("0.25pi") ==
          doctest::Approx(std::numbers::pi / 4).epsilon(1e-15));
    CHECK(parse_theta("1pi") == doctest::Approx(std::numbers::pi).epsilon(1e-15));
    CHECK(parse_theta(" 90deg ") ==
          doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
    CHECK(parse_theta("-0.5") == -0.5);
    CHECK_THROWS_AS(parse_theta(""), InvalidInput);
    CHECK_THROWS_AS(parse_theta("pi"), InvalidInput);
    CHECK_THROWS_AS(parse_theta("fast"), InvalidInput);
    CHECK_THROWS_AS(parse_theta("1.2degx"), InvalidInput);
}

TEST_CASE("histogram csv round trips field for field") {
    SourceParams src;
    DetectionParams det;
    InterferometerConfig cfg;
    SimConfig sim;
    sim.seed = 14;
    sim.n_pairs = 5000;
    auto hist = simulate_histogram(cfg, src, det, sim);
    Metadata meta{{"alpha", "1"}, {"note", "a=b"}, {"run", "two words"}};
    const auto path = tmp("hist_roundtrip.csv");
    write_histogram_csv(path, hist, meta);

    Metadata got_meta;
    auto got = read_histogram_csv(path, &got_meta);
    CHECK(got.counts == hist.counts);
    REQUIRE(got.edges.size() == hist.edges.size());
    for (size_t i = 0; i < got.edges.size(); ++i)
        CHECK(got.edges[i] ==
              doctest::Approx(hist.edges[i]).epsilon(1e-14));

    auto find = [&](const std::string& k) -> std::string {
        for (const auto& [key, val] : got_meta)
            if (key == k) return val;
        return "<missing>";
    };
    CHECK(find("alpha") == "1");
    CHECK(find("note") == "a=b"); // '=' inside the value survives
    CHECK(find("run") == "two words");
    CHECK(find("window_lo_ns") == "45");
    CHECK(find("window_hi_ns") == "65");
}

TEST_CASE("curve csv round trips values bit for bit") {
    SourceParams src;
    DetectionParams det;
    InterferometerConfig cfg;
    auto curve = sample_curve(cfg, src, det, 54e-9, 56e-9, 0.05e-9);
    const auto path = tmp("curve_roundtrip.csv");
    write_curve_csv(path, curve, {{"kind", "demo"}});
    auto got = read_curve_csv(path);
    REQUIRE(got.tau.size() == curve.tau.size());
    for (size_t i = 0; i < got.tau.size(); ++i) {
        CHECK(got.value[i] == curve.value[i]); // no unit conversion: exact
        CHECK(got.tau[i] == doctest::Approx(curve.tau[i]).epsilon(1e-14));
    }
}

TEST_CASE("sweep csv round trips for integer and fractional counts") {
    std::vector<double> theta{0.0, 0.5, 1.0, 1.5};
    std::vector<uint64_t> counts{10, 0, 123456789, 7};
    const auto path = tmp("sweep_roundtrip.csv");
    write_sweep_csv(path, theta, std::span<const uint64_t>(counts), {});
    auto got = read_sweep_csv(path);
    CHECK(got.counts == counts);
    for (size_t i = 0; i < theta.size(); ++i)
        CHECK(got.theta[i] == theta[i]);

    std::vector<double> frac{0.0, 1.25e-9, 3.5, 2.0 / 3.0};
    const auto path2 = tmp("sweep_frac.csv");
    write_sweep_csv(path2, theta, std::span<const double>(frac), {});
    auto gotf = read_phase_sweep_csv(path2);
    for (size_t i = 0; i < theta.size(); ++i) {
        CHECK(gotf.theta[i] == theta[i]);
        CHECK(gotf.counts[i] == frac[i]); // shortest-round-trip: exact
    }
}

TEST_CASE("histogram reader rebuilds the grid from centers when metadata is absent") {
    const auto path = tmp("bare_hist.csv");
    spit(path, "54.95,3\n55.05,5\n55.15,2\n");
    auto hist = read_histogram_csv(path);
    REQUIRE(hist.counts.size() == 3);
    CHECK(hist.counts[1] == 5);
    CHECK(hist.edges.front() == doctest::Approx(54.90e-9).epsilon(1e-12));
    CHECK(hist.edges.back() == doctest::Approx(55.20e-9).epsilon(1e-12));
}

TEST_CASE("malformed csv content is invalid input, missing files are io errors") {
    const auto p3 = tmp("bad3.csv");
    spit(p3, "1,2,3\n");
    CHECK_THROWS_AS(read_histogram_csv(p3), InvalidInput);
    const auto pneg = tmp("badneg.csv");
    spit(pneg, "55.0,-2\n55.1,1\n");
    CHECK_THROWS_AS(read_histogram_csv(pneg), InvalidInput);
    const auto pfrac = tmp("badfrac.csv");
    spit(pfrac, "55.0,2.5\n55.1,1\n");
    CHECK_THROWS_AS(read_histogram_csv(pfrac), InvalidInput);
    const auto pone = tmp("badone.csv");
    spit(pone, "55.0,2\n");
    CHECK_THROWS_AS(read_histogram_csv(pone), InvalidInput); // no grid from one row
    const auto pempty = tmp("badempty.csv");
    spit(pempty, "# only=meta\n");
    CHECK_THROWS_AS(read_histogram_csv(pempty), InvalidInput);
    CHECK_THROWS_AS(read_histogram_csv(tmp("does_not_exist.csv")), IoError);
    CHECK_THROWS_AS(read_curve_csv(tmp("does_not_exist.csv")), IoError);
    CHECK_THROWS_AS(load_config(tmp("does_not_exist.json"), RunConfig{}), IoError);
}

TEST_CASE("presets carry the documented baseline numbers") {
    auto names = preset_names();
    REQUIRE(names.size() == 3);

    auto u = preset("paper-unbalanced");
    CHECK(u.source.bandwidth == 2.0 * M_PI * 7.8e6);
    CHECK(u.source.round_trip == 1.63e-9);
    CHECK(u.source.relative_gain == 0.0);
    CHECK(u.detection.resolving_time == 220e-12);
    CHECK(u.detection.electric_delay == 55e-9);
    CHECK(u.detection.bin_width == 100e-12);
    CHECK(u.detection.window_lo == 45e-9);
    CHECK(u.detection.window_hi == 65e-9);
    CHECK(u.interferometer.regime == Regime::Unbalanced);
    CHECK(u.interferometer.path_difference == 0.170);
    CHECK(u.interferometer.scale == 1.0);
    CHECK(u.interferometer.background == 0.0);
    CHECK(u.coherence_length == 90e-6);
    CHECK(u.validate().empty());

    auto p = preset("paper-balanced-perfect");
    CHECK(p.interferometer.regime == Regime::PerfectBalanced);
    CHECK(p.interferometer.path_difference == 0.0);
    CHECK(p.validate().empty());

    auto r = preset("paper-balanced-rough");
    CHECK(r.interferometer.regime == Regime::RoughBalanced);
    CHECK(r.interferometer.path_difference == 0.74e-3);
    CHECK(r.validate().empty());

    CHECK_THROWS_AS(preset("nope"), InvalidInput);
}

TEST_CASE("run config validation flags regime and path disagreement") {
    auto rc = preset("paper-unbalanced");
    rc.interferometer.path_difference = 0.0; // declared unbalanced, clearly not
    auto warnings = rc.validate();
    REQUIRE_FALSE(warnings.empty());
    bool found = false;
    for (const auto& w : warnings)
        if (w.find("regime") != std::string::npos) found = true;
    CHECK(found);
    rc.coherence_length = -1.0;
    CHECK_THROWS_AS(rc.validate(), InvalidInput);
}

TEST_CASE("json config overrides any subset on top of a base") {
    const auto path = tmp("config.json");
    spit(path, R"({
        "source": {"relative_gain": 0.2},
        "detection": {"bin_width_ns": 0.05},
        "interferometer": {"theta": "0.25pi", "path_difference_mm": 0.74,
                           "regime": "auto"},
        "sim": {"seed": 9, "n_pairs": 1234, "jitter_sigma": 0.1},
        "coherence_length_mm": 0.09
    })");
    auto rc = load_config(path, preset("paper-unbalanced"));
    CHECK(rc.source.relative_gain == 0.2);
    CHECK(rc.source.bandwidth == 2.0 * M_PI * 7.8e6); // untouched
    CHECK(rc.detection.bin_width == doctest::Approx(0.05e-9).epsilon(1e-15));
    CHECK(rc.interferometer.theta ==
          doctest::Approx(std::numbers::pi / 4).epsilon(1e-15));
    CHECK(rc.interferometer.path_difference ==
          doctest::Approx(0.74e-3).epsilon(1e-15));
    CHECK(rc.interferometer.regime == Regime::RoughBalanced); // auto-classified
    CHECK(rc.sim.seed == 9);
    CHECK(rc.sim.n_pairs == 1234);
    CHECK(rc.sim.jitter_sigma == 0.1);
    CHECK(rc.coherence_length == doctest::Approx(90e-6).epsilon(1e-15));

    const auto pth = tmp("config_theta_num.json");
    spit(pth, R"({"interferometer": {"theta": 0.5, "regime": "balanced-perfect"}})");
    auto rc2 = load_config(pth, preset("paper-balanced-perfect"));
    CHECK(rc2.interferometer.theta == 0.5);
    CHECK(rc2.interferometer.regime == Regime::PerfectBalanced);
}

TEST_CASE("json config rejects unknown keys and malformed content") {
    const auto bad1 = tmp("bad_section.json");
    spit(bad1, R"({"sources": {}})");
    CHECK_THROWS_AS(load_config(bad1, RunConfig{}), InvalidInput);
    const auto bad2 = tmp("bad_key.json");
    spit(bad2, R"({"source": {"bw": 1}})");
    CHECK_THROWS_AS(load_config(bad2, RunConfig{}), InvalidInput);
    const auto bad3 = tmp("bad_seed.json");
    spit(bad3, R"({"sim": {"seed": -3}})");
    CHECK_THROWS_AS(load_config(bad3, RunConfig{}), InvalidInput);
    const auto bad4 = tmp("bad_json.json");
    spit(bad4, "{nope");
    CHECK_THROWS_AS(load_config(bad4, RunConfig{}), InvalidInput);
    const auto bad5 = tmp("bad_regime.json");
    spit(bad5, R"({"interferometer": {"regime": "sideways"}})");
    CHECK_THROWS_AS(load_config(bad5, RunConfig{}), InvalidInput);
}

TEST_CASE("fit report is key=value parseable") {
    FitResult fit;
    fit.converged = true;
    fit.chi2 = 42.5;
    fit.dof = 100;
    fit.n_iterations = 7;
    fit.value[2] = 0.6;
    fit.sigma[2] = 0.01;
    fit.theta_canonical = 0.6;
    fit.theta_ambiguity = "test note";
    InterferometerConfig cfg;
    cfg.regime = Regime::Unbalanced;
    const auto report = format_fit_report(fit, cfg);
    CHECK(report_value(report, "regime") == "unbalanced");
    CHECK(report_value(report, "converged") == "true");
    CHECK(parse_double(report_value(report, "chi2")) == 42.5);
    CHECK(report_value(report, "dof") == "100");
    CHECK(parse_double(report_value(report, "theta")) == 0.6);
    CHECK(parse_double(report_value(report, "theta_sigma")) == 0.01);
    CHECK(parse_double(report_value(report, "cos_theta")) ==
          doctest::Approx(std::cos(0.6)).epsilon(1e-15));
    CHECK(report_value(report, "theta_note") == "test note");
    // fixed parameters carry no uncertainty line
    CHECK(report_value(report, "scale_sigma") == "");
}

TEST_CASE("cli: analytic curve command writes a readable file") {
    const auto out = tmp("cli_curve.csv");
    CHECK(run_cli("model --out " + out +
                  " --lo-ns 54 --hi-ns 56 --resolution-ns 0.1") == 0);
    Metadata meta;
    auto curve = read_curve_csv(out, &meta);
    CHECK(curve.tau.size() == 21);
    bool has_regime = false;
    for (const auto& [k, v] : meta)
        if (k == "regime" && v == "unbalanced") has_regime = true;
    CHECK(has_regime);
}

TEST_CASE("cli: identical simulate invocations produce identical bytes") {
    const auto a = tmp("cli_det_a.csv");
    const auto b = tmp("cli_det_b.csv");
    const std::string args =
        " --seed 4 --pairs 20000 --theta 0.3 --jitter 0.1 --accidentals 0.05";
    CHECK(run_cli("simulate --out " + a + args) == 0);
    CHECK(run_cli("simulate --out " + b + args) == 0);
    CHECK(slurp(a) == slurp(b));
    auto hist = read_histogram_csv(a);
    CHECK(hist.total() == 20000);
}

TEST_CASE("cli: frozen golden histogram reproduces byte for byte") {
    const auto out = tmp("cli_golden_check.csv");
    CHECK(run_cli("simulate --seed 1 --pairs 100000 --theta 0 --out " + out) == 0);
    const std::string golden = std::string(BIPHOTON_TEST_DATA) + "/golden_hist.csv";
    CHECK(slurp(out) == slurp(golden));
}

TEST_CASE("cli: split generation concatenates to the one-shot run") {
    const auto whole = tmp("cli_whole.csv");
    const auto part1 = tmp("cli_part1.csv");
    const auto part2 = tmp("cli_part2.csv");
    CHECK(run_cli("simulate --seed 6 --pairs 1000 --out " + whole) == 0);
    CHECK(run_cli("simulate --seed 6 --pairs 600 --out " + part1) == 0);
    CHECK(run_cli("simulate --seed 6 --pairs 400 --first-index 600 --out " +
                  part2) == 0);
    auto hw = read_histogram_csv(whole);
    auto h1 = read_histogram_csv(part1);
    auto h2 = read_histogram_csv(part2);
    REQUIRE(h1.counts.size() == hw.counts.size());
    for (size_t i = 0; i < hw.counts.size(); ++i)
        CHECK(h1.counts[i] + h2.counts[i] == hw.counts[i]);
}

TEST_CASE("cli: simulate then fit recovers the phase") {
    const auto hist_path = tmp("cli_fit_hist.csv");
    const auto report_path = tmp("cli_fit_report.txt");
    CHECK(run_cli("simulate --seed 3 --pairs 100000 --theta 45deg --out " +
                  hist_path) == 0);
    CHECK(run_cli("fit --in " + hist_path + " --theta 45deg --out " + report_path,
                  tmp("cli_fit_stdout.txt")) == 0);
    const auto report = slurp(report_path);
    CHECK(report_value(report, "converged") == "true");
    const double cos_hat = parse_double(report_value(report, "cos_theta"));
    CHECK(cos_hat == doctest::Approx(std::cos(std::numbers::pi / 4)).epsilon(0.1));
    // stdout carries the same report
    CHECK(slurp(tmp("cli_fit_stdout.txt")) == report);
}

TEST_CASE("cli: analytic sweeps give the closed form visibilities") {
    const auto sw_a = tmp("cli_sweep_a.csv");
    const auto vis_a = tmp("cli_vis_a.txt");
    CHECK(run_cli("sweep --analytic --preset paper-balanced-perfect --points 64 "
                  "--out " + sw_a) == 0);
    CHECK(run_cli("visibility --in " + sw_a, vis_a) == 0);
    const auto ta = slurp(vis_a);
    CHECK(std::fabs(parse_double(report_value(ta, "visibility")) - 1.0) < 1e-9);
    CHECK(report_value(ta, "fringes") == "1");

    const auto sw_b = tmp("cli_sweep_b.csv");
    const auto vis_b = tmp("cli_vis_b.txt");
    CHECK(run_cli("sweep --analytic --preset paper-balanced-rough --points 64 "
                  "--out " + sw_b) == 0);
    CHECK(run_cli("visibility --in " + sw_b, vis_b) == 0);
    const auto tb = slurp(vis_b);
    CHECK(std::fabs(parse_double(report_value(tb, "visibility")) - 0.5) < 1e-9);
    CHECK(report_value(tb, "fringes") == "2");
}

TEST_CASE("cli: jitter and accidentals lower the swept visibility") {
    const auto sw = tmp("cli_sweep_noisy.csv");
    const auto vis = tmp("cli_vis_noisy.txt");
    CHECK(run_cli("sweep --preset paper-balanced-rough --points 64 "
                  "--pairs 200000 --jitter 0.35 --accidentals 0.03 --out " +
                  sw) == 0);
    CHECK(run_cli("visibility --in " + sw, vis) == 0);
    const double v = parse_double(report_value(slurp(vis), "visibility"));
    CHECK(v < 0.5);
    CHECK(v > 0.2);
}

TEST_CASE("cli: exit codes sort failures by kind") {
    // 2: input and usage problems
    CHECK(run_cli("model --preset nope --out " + tmp("x1.csv")) == 2);
    CHECK(run_cli("model --nope") == 2);
    CHECK(run_cli("") == 2);
    const auto okhist = tmp("cli_codes_hist.csv");
    REQUIRE(run_cli("simulate --pairs 2000 --out " + okhist) == 0);
    CHECK(run_cli("fit --in " + okhist + " --free bogus") == 2);
    const auto garbled = tmp("cli_codes_bad.csv");
    spit(garbled, "55.0,alpha\n55.1,2\n");
    CHECK(run_cli("fit --in " + garbled) == 2);

    // 3: well-posed input, numerically empty or undefined result
    CHECK(run_cli("simulate --preset paper-balanced-perfect --theta 1pi "
                  "--pairs 100 --out " + tmp("x2.csv")) == 3);
    const auto zero_sweep = tmp("cli_zero_sweep.csv");
    spit(zero_sweep, "0,0\n1,0\n2,0\n");
    CHECK(run_cli("visibility --in " + zero_sweep) == 3);

    // 4: filesystem refusals
    CHECK(run_cli("fit --in " + tmp("missing_dir/nope.csv")) == 4);
    CHECK(run_cli("model --out " + tmp("missing_dir/nope.csv")) == 4);
}

TEST_CASE("cli: flags override config file values which override the preset") {
    const auto cfg_path = tmp("cli_config.json");
    spit(cfg_path, R"({"sim": {"n_pairs": 1234, "seed": 9}})");
    const auto a = tmp("cli_prec_a.csv");
    CHECK(run_cli("simulate --config " + cfg_path + " --out " + a) == 0);
    CHECK(read_histogram_csv(a).total() == 1234);

    const auto b = tmp("cli_prec_b.csv");
    CHECK(run_cli("simulate --config " + cfg_path + " --pairs 55 --out " + b) == 0);
    CHECK(read_histogram_csv(b).total() == 55);
}
