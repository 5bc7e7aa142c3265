// Command line front end: analytic curves, Monte Carlo coincidences, phase
// fits, phase sweeps, and visibility extraction.  Exit codes: 0 ok,
// 2 invalid input, 3 numeric failure (empty density, degenerate or
// non-converged fit, undefined visibility), 4 file I/O failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biphoton/fit.hpp"
#include "biphoton/io.hpp"
#include "biphoton/model.hpp"
#include "biphoton/params.hpp"
#include "biphoton/sim.hpp"

namespace bp = biphoton;

namespace {

struct CommonOpts {
    std::string preset_name = "paper-unbalanced";
    std::string config_path;
    std::string theta_text;
    std::string regime_text;
    double path_mm = 0.0;
    double scale = 1.0;
    double background = 0.0;
    uint64_t seed = 1;
    uint64_t pairs = 100000;
    double jitter = 0.0;
    double accidentals = 0.0;

    CLI::Option* theta_opt = nullptr;
    CLI::Option* regime_opt = nullptr;
    CLI::Option* path_opt = nullptr;
    CLI::Option* scale_opt = nullptr;
    CLI::Option* background_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* pairs_opt = nullptr;
    CLI::Option* jitter_opt = nullptr;
    CLI::Option* accidentals_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--preset", o.preset_name,
                    "baseline setup: paper-unbalanced, paper-balanced-perfect, "
                    "paper-balanced-rough")
        ->capture_default_str();
    cmd->add_option("--config", o.config_path, "JSON config file applied on top");
    o.theta_opt = cmd->add_option("--theta", o.theta_text,
                                  "interferometer phase; plain number is rad, "
                                  "suffixes deg/rad/pi accepted");
    o.regime_opt = cmd->add_option("--regime", o.regime_text,
                                   "unbalanced | balanced-perfect | "
                                   "balanced-rough | auto");
    o.path_opt = cmd->add_option("--path-mm", o.path_mm,
                                 "interferometer path difference, mm");
    o.scale_opt = cmd->add_option("--scale", o.scale, "model scale constant");
    o.background_opt =
        cmd->add_option("--background", o.background, "model additive background");
    o.seed_opt = cmd->add_option("--seed", o.seed, "random seed");
    o.pairs_opt = cmd->add_option("--pairs", o.pairs, "photon pairs to generate");
    o.jitter_opt = cmd->add_option("--jitter", o.jitter, "phase jitter sigma, rad");
    o.accidentals_opt = cmd->add_option("--accidentals", o.accidentals,
                                        "accidental coincidence fraction [0,1]");
}

// Precedence: flags > config file > preset > built-in defaults.
bp::RunConfig resolve(const CommonOpts& o) {
    bp::RunConfig rc = bp::preset(o.preset_name);
    if (!o.config_path.empty()) rc = bp::load_config(o.config_path, rc);
    if (o.path_opt->count()) rc.interferometer.path_difference = o.path_mm * 1e-3;
    if (o.theta_opt->count())
        rc.interferometer.theta = bp::parse_theta(o.theta_text);
    if (o.scale_opt->count()) rc.interferometer.scale = o.scale;
    if (o.background_opt->count()) rc.interferometer.background = o.background;
    if (o.seed_opt->count()) rc.sim.seed = o.seed;
    if (o.pairs_opt->count()) rc.sim.n_pairs = o.pairs;
    if (o.jitter_opt->count()) rc.sim.jitter_sigma = o.jitter;
    if (o.accidentals_opt->count()) rc.sim.accidental_fraction = o.accidentals;
    if (o.regime_opt->count()) {
        if (o.regime_text == "auto")
            rc.interferometer.regime = bp::classify_regime(
                rc.interferometer.path_difference, rc.coherence_length, rc.source);
        else if (o.regime_text == "unbalanced")
            rc.interferometer.regime = bp::Regime::Unbalanced;
        else if (o.regime_text == "balanced-perfect")
            rc.interferometer.regime = bp::Regime::PerfectBalanced;
        else if (o.regime_text == "balanced-rough")
            rc.interferometer.regime = bp::Regime::RoughBalanced;
        else
            throw bp::InvalidInput("unknown regime '" + o.regime_text + "'");
    }
    for (const auto& w : rc.validate()) std::cerr << "warning: " << w << "\n";
    return rc;
}

bp::Metadata run_metadata(const bp::RunConfig& rc) {
    using bp::format_double;
    bp::Metadata m;
    m.emplace_back("regime", bp::regime_name(rc.interferometer.regime));
    m.emplace_back("theta_rad", format_double(rc.interferometer.theta));
    m.emplace_back("path_difference_mm",
                   format_double(rc.interferometer.path_difference * 1e3));
    m.emplace_back("scale", format_double(rc.interferometer.scale));
    m.emplace_back("background", format_double(rc.interferometer.background));
    m.emplace_back("bandwidth_mhz",
                   format_double(rc.source.bandwidth / (2.0 * M_PI * 1e6)));
    m.emplace_back("round_trip_ns", format_double(rc.source.round_trip * 1e9));
    m.emplace_back("relative_gain", format_double(rc.source.relative_gain));
    m.emplace_back("resolving_time_ns",
                   format_double(rc.detection.resolving_time * 1e9));
    m.emplace_back("electric_delay_ns",
                   format_double(rc.detection.electric_delay * 1e9));
    m.emplace_back("bin_width_ns", format_double(rc.detection.bin_width * 1e9));
    return m;
}

int run(int argc, char** argv) {
    CLI::App app{"two-photon correlation toolkit for comb-spectrum pair sources "
                 "behind a Michelson interferometer"};
    app.require_subcommand(1);

    // model: evaluate the analytic correlation curve on a grid
    auto* cmd_model = app.add_subcommand("model", "write the analytic curve as CSV");
    CommonOpts mo;
    add_common(cmd_model, mo);
    std::string model_out;
    double model_lo = 0.0, model_hi = 0.0, model_res = 0.0;
    cmd_model->add_option("--out", model_out, "output CSV")->required();
    auto* lo_opt = cmd_model->add_option("--lo-ns", model_lo, "grid start, ns");
    auto* hi_opt = cmd_model->add_option("--hi-ns", model_hi, "grid end, ns");
    auto* res_opt =
        cmd_model->add_option("--resolution-ns", model_res, "grid step, ns");

    // simulate: Monte Carlo coincidence histogram
    auto* cmd_sim = app.add_subcommand("simulate",
                                       "generate a coincidence histogram as CSV");
    CommonOpts so;
    add_common(cmd_sim, so);
    std::string sim_out;
    uint64_t first_index = 0;
    cmd_sim->add_option("--out", sim_out, "output CSV")->required();
    cmd_sim->add_option("--first-index", first_index,
                        "starting event index (for split generation)");

    // fit: weighted phase fit of a histogram
    auto* cmd_fit = app.add_subcommand("fit", "fit a histogram, report parameters");
    CommonOpts fo;
    add_common(cmd_fit, fo);
    std::string fit_in, fit_out, fit_free;
    cmd_fit->add_option("--in", fit_in, "histogram CSV to fit")->required();
    cmd_fit->add_option("--out", fit_out, "also write the report here");
    cmd_fit->add_option("--free", fit_free,
                        "comma-separated free parameters (default "
                        "scale,background,theta)");

    // sweep: counts versus phase
    auto* cmd_sweep = app.add_subcommand("sweep", "counts versus phase as CSV");
    CommonOpts wo;
    add_common(cmd_sweep, wo);
    std::string sweep_out;
    int sweep_points = 64;
    bool sweep_analytic = false;
    cmd_sweep->add_option("--out", sweep_out, "output CSV")->required();
    cmd_sweep->add_option("--points", sweep_points, "phase grid size")
        ->capture_default_str();
    cmd_sweep->add_flag("--analytic", sweep_analytic,
                        "integrate the model instead of sampling");

    // visibility: fringe contrast of a sweep file
    auto* cmd_vis = app.add_subcommand("visibility",
                                       "visibility and fringe count of a sweep");
    std::string vis_in;
    cmd_vis->add_option("--in", vis_in, "sweep CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (cmd_model->parsed()) {
        const auto rc = resolve(mo);
        const double lo =
            lo_opt->count() ? model_lo * 1e-9 : rc.detection.window_lo;
        const double hi =
            hi_opt->count() ? model_hi * 1e-9 : rc.detection.window_hi;
        const double res =
            res_opt->count() ? model_res * 1e-9 : rc.detection.bin_width;
        const auto curve = bp::sample_curve(rc.interferometer, rc.source,
                                            rc.detection, lo, hi, res);
        auto meta = run_metadata(rc);
        meta.emplace_back("resolution_ns", bp::format_double(res * 1e9));
        bp::write_curve_csv(model_out, curve, meta);
        std::cout << "wrote " << curve.tau.size() << " points to " << model_out
                  << "\n";
        return 0;
    }

    if (cmd_sim->parsed()) {
        const auto rc = resolve(so);
        const auto hist = bp::simulate_histogram(rc.interferometer, rc.source,
                                                 rc.detection, rc.sim, first_index);
        auto meta = run_metadata(rc);
        meta.emplace_back("seed", std::to_string(rc.sim.seed));
        meta.emplace_back("n_pairs", std::to_string(rc.sim.n_pairs));
        meta.emplace_back("first_index", std::to_string(first_index));
        meta.emplace_back("jitter_sigma", bp::format_double(rc.sim.jitter_sigma));
        meta.emplace_back("accidental_fraction",
                          bp::format_double(rc.sim.accidental_fraction));
        meta.emplace_back("total_events", std::to_string(hist.total()));
        bp::write_histogram_csv(sim_out, hist, meta);
        std::cout << "wrote " << hist.counts.size() << " bins (" << hist.total()
                  << " events) to " << sim_out << "\n";
        return 0;
    }

    if (cmd_fit->parsed()) {
        auto rc = resolve(fo);
        const auto hist = bp::read_histogram_csv(fit_in);
        // The file owns the grid; the config supplies the physics.
        rc.detection.window_lo = hist.edges.front();
        rc.detection.window_hi = hist.edges.back();
        rc.detection.bin_width = (hist.edges.back() - hist.edges.front()) /
                                 static_cast<double>(hist.counts.size());
        auto opt = bp::FitOptions::defaults();
        if (!fit_free.empty()) {
            opt.free_mask.fill(false);
            std::stringstream ss(fit_free);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                bool known = false;
                for (int j = 0; j < bp::n_fit_params; ++j)
                    if (tok == bp::fit_param_name(static_cast<bp::FitParam>(j))) {
                        opt.free_mask[j] = true;
                        known = true;
                    }
                if (!known)
                    throw bp::InvalidInput("unknown fit parameter '" + tok + "'");
            }
        }
        const auto init =
            bp::initial_guess(hist, rc.interferometer, rc.source, rc.detection);
        const auto fit = bp::fit_histogram(hist, rc.interferometer, rc.source,
                                           rc.detection, init, opt);
        const auto report = bp::format_fit_report(fit, rc.interferometer);
        std::cout << report;
        if (!fit_out.empty()) {
            std::ofstream f(fit_out);
            if (!f) throw bp::IoError("cannot open for writing: " + fit_out);
            f << report;
        }
        return fit.converged ? 0 : 3;
    }

    if (cmd_sweep->parsed()) {
        const auto rc = resolve(wo);
        const auto thetas = bp::phase_grid(sweep_points);
        auto meta = run_metadata(rc);
        meta.emplace_back("points", std::to_string(sweep_points));
        if (sweep_analytic) {
            meta.emplace_back("mode", "analytic");
            const auto sweep =
                bp::phase_sweep(rc.interferometer, rc.source, rc.detection, thetas);
            bp::write_sweep_csv(sweep_out, sweep.theta,
                                std::span<const double>(sweep.counts), meta);
        } else {
            meta.emplace_back("mode", "mc");
            meta.emplace_back("seed", std::to_string(rc.sim.seed));
            meta.emplace_back("n_pairs", std::to_string(rc.sim.n_pairs));
            const auto sweep = bp::simulate_sweep(rc.interferometer, rc.source,
                                                  rc.detection, rc.sim, thetas);
            bp::write_sweep_csv(sweep_out, sweep.theta,
                                std::span<const uint64_t>(sweep.counts), meta);
        }
        std::cout << "wrote " << sweep_points << " phases to " << sweep_out << "\n";
        return 0;
    }

    if (cmd_vis->parsed()) {
        const auto sweep = bp::read_phase_sweep_csv(vis_in);
        const double v = bp::visibility(sweep.counts);
        std::cout << "points=" << sweep.counts.size() << "\n";
        std::cout << "visibility=" << bp::format_double(v) << "\n";
        if (sweep.counts.size() >= 3)
            std::cout << "fringes=" << bp::fringe_count(sweep.counts) << "\n";
        return 0;
    }

    return 2;  // unreachable: a subcommand is required
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const bp::EmptyDensityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const bp::DegenerateFitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const bp::UndefinedVisibilityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const bp::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
