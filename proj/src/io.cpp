#include "biphoton/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace biphoton {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw InvalidInput("number formatting failed");
    return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    auto [ptr, ec] = std::from_chars(b, e, v);
    while (ptr < e && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
    if (ec != std::errc{} || ptr != e)
        throw InvalidInput("not a number: '" + s + "'");
    return v;
}

namespace {

constexpr double ns = 1e-9;

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    return f;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open for reading: " + path);
    return f;
}

void write_meta(std::ofstream& f, const Metadata& meta) {
    for (const auto& [k, v] : meta) f << "# " << k << "=" << v << "\n";
}

// Reads one CSV: '#' lines with '=' go to meta, the last '#' line without
// '=' is the column header, everything else is split on commas.
struct CsvContent {
    Metadata meta;
    std::vector<std::vector<std::string>> rows;
};

CsvContent read_csv(const std::string& path) {
    auto f = open_in(path);
    CsvContent out;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string body = line.substr(1);
            if (!body.empty() && body.front() == ' ') body.erase(0, 1);
            const auto eq = body.find('=');
            if (eq != std::string::npos)
                out.meta.emplace_back(body.substr(0, eq), body.substr(eq + 1));
            continue;  // column-header comment lines carry no data
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        out.rows.push_back(std::move(fields));
    }
    return out;
}

const std::string* find_meta(const Metadata& meta, const std::string& key) {
    for (const auto& [k, v] : meta)
        if (k == key) return &v;
    return nullptr;
}

}  // namespace

void write_histogram_csv(const std::string& path, const Histogram& hist,
                         const Metadata& meta) {
    if (hist.edges.size() != hist.counts.size() + 1 || hist.counts.empty())
        throw InvalidInput("histogram has no consistent grid");
    auto f = open_out(path);
    write_meta(f, meta);
    f << "# window_lo_ns=" << format_double(hist.edges.front() / ns) << "\n";
    f << "# window_hi_ns=" << format_double(hist.edges.back() / ns) << "\n";
    f << "# tau_ns,counts\n";
    for (size_t i = 0; i < hist.counts.size(); ++i) {
        const double center = 0.5 * (hist.edges[i] + hist.edges[i + 1]);
        f << format_double(center / ns) << "," << hist.counts[i] << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

Histogram read_histogram_csv(const std::string& path, Metadata* meta) {
    const auto csv = read_csv(path);
    if (csv.rows.empty()) throw InvalidInput("histogram file has no rows: " + path);
    Histogram hist;
    for (const auto& row : csv.rows) {
        if (row.size() != 2)
            throw InvalidInput("histogram rows must be 'tau_ns,counts': " + path);
        const double c = parse_double(row[1]);
        if (c < 0.0 || c != std::floor(c))
            throw InvalidInput("counts must be non-negative integers: " + path);
        hist.counts.push_back(static_cast<uint64_t>(c));
    }
    const size_t n = hist.counts.size();
    const auto* lo_s = find_meta(csv.meta, "window_lo_ns");
    const auto* hi_s = find_meta(csv.meta, "window_hi_ns");
    if (lo_s && hi_s) {
        const double lo = parse_double(*lo_s) * ns;
        const double hi = parse_double(*hi_s) * ns;
        if (!(hi > lo)) throw InvalidInput("bad window metadata: " + path);
        hist.edges.resize(n + 1);
        const double w = (hi - lo) / static_cast<double>(n);
        for (size_t i = 0; i <= n; ++i)
            hist.edges[i] = lo + static_cast<double>(i) * w;
        hist.edges.back() = hi;
    } else {
        // No window metadata: rebuild the uniform grid from the centers.
        if (n < 2) throw InvalidInput("cannot infer a grid from one row: " + path);
        const double c0 = parse_double(csv.rows.front()[0]) * ns;
        const double c1 = parse_double(csv.rows.back()[0]) * ns;
        const double w = (c1 - c0) / static_cast<double>(n - 1);
        if (!(w > 0.0)) throw InvalidInput("bin centers must increase: " + path);
        hist.edges.resize(n + 1);
        for (size_t i = 0; i <= n; ++i)
            hist.edges[i] = c0 - 0.5 * w + static_cast<double>(i) * w;
    }
    if (meta) *meta = csv.meta;
    return hist;
}

void write_curve_csv(const std::string& path, const CorrelationCurve& curve,
                     const Metadata& meta) {
    if (curve.tau.size() != curve.value.size() || curve.tau.empty())
        throw InvalidInput("curve is empty or inconsistent");
    auto f = open_out(path);
    write_meta(f, meta);
    f << "# tau_ns,gamma\n";
    for (size_t i = 0; i < curve.tau.size(); ++i)
        f << format_double(curve.tau[i] / ns) << "," << format_double(curve.value[i])
          << "\n";
    if (!f) throw IoError("write failed: " + path);
}

CorrelationCurve read_curve_csv(const std::string& path, Metadata* meta) {
    const auto csv = read_csv(path);
    if (csv.rows.empty()) throw InvalidInput("curve file has no rows: " + path);
    CorrelationCurve curve;
    for (const auto& row : csv.rows) {
        if (row.size() != 2)
            throw InvalidInput("curve rows must be 'tau_ns,gamma': " + path);
        curve.tau.push_back(parse_double(row[0]) * ns);
        curve.value.push_back(parse_double(row[1]));
    }
    if (meta) *meta = csv.meta;
    return curve;
}

namespace {

template <class Count>
void write_sweep_impl(const std::string& path, std::span<const double> theta,
                      std::span<const Count> counts, const Metadata& meta) {
    if (theta.size() != counts.size() || theta.empty())
        throw InvalidInput("sweep is empty or inconsistent");
    auto f = open_out(path);
    write_meta(f, meta);
    f << "# theta_rad,counts\n";
    for (size_t i = 0; i < theta.size(); ++i) {
        f << format_double(theta[i]) << ",";
        if constexpr (std::is_same_v<Count, uint64_t>)
            f << counts[i];
        else
            f << format_double(counts[i]);
        f << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace

void write_sweep_csv(const std::string& path, std::span<const double> theta,
                     std::span<const uint64_t> counts, const Metadata& meta) {
    write_sweep_impl(path, theta, counts, meta);
}

void write_sweep_csv(const std::string& path, std::span<const double> theta,
                     std::span<const double> counts, const Metadata& meta) {
    write_sweep_impl(path, theta, counts, meta);
}

SimulatedSweep read_sweep_csv(const std::string& path, Metadata* meta) {
    const auto csv = read_csv(path);
    if (csv.rows.empty()) throw InvalidInput("sweep file has no rows: " + path);
    SimulatedSweep sweep;
    for (const auto& row : csv.rows) {
        if (row.size() != 2)
            throw InvalidInput("sweep rows must be 'theta_rad,counts': " + path);
        sweep.theta.push_back(parse_double(row[0]));
        const double c = parse_double(row[1]);
        if (c < 0.0) throw InvalidInput("sweep counts must be >= 0: " + path);
        sweep.counts.push_back(static_cast<uint64_t>(std::llround(c)));
    }
    if (meta) *meta = csv.meta;
    return sweep;
}

PhaseSweep read_phase_sweep_csv(const std::string& path, Metadata* meta) {
    const auto csv = read_csv(path);
    if (csv.rows.empty()) throw InvalidInput("sweep file has no rows: " + path);
    PhaseSweep sweep;
    for (const auto& row : csv.rows) {
        if (row.size() != 2)
            throw InvalidInput("sweep rows must be 'theta_rad,counts': " + path);
        sweep.theta.push_back(parse_double(row[0]));
        sweep.counts.push_back(parse_double(row[1]));
    }
    if (meta) *meta = csv.meta;
    return sweep;
}

std::vector<std::string> RunConfig::validate() const {
    std::vector<std::string> warnings;
    auto merge = [&warnings](std::vector<std::string> w) {
        for (auto& s : w) warnings.push_back(std::move(s));
    };
    merge(source.validate());
    merge(detection.validate());
    merge(interferometer.validate());
    merge(sim.validate());
    if (!std::isfinite(coherence_length) || coherence_length <= 0.0)
        throw InvalidInput("coherence_length must be positive");
    const Regime implied = classify_regime(interferometer.path_difference,
                                           coherence_length, source);
    if (implied != interferometer.regime)
        warnings.push_back(std::string("declared regime '") +
                           regime_name(interferometer.regime) +
                           "' differs from the one implied by the path "
                           "difference ('" + regime_name(implied) + "')");
    return warnings;
}

std::vector<std::string> preset_names() {
    return {"paper-unbalanced", "paper-balanced-perfect", "paper-balanced-rough"};
}

RunConfig preset(const std::string& name) {
    RunConfig rc;  // defaults are already the unbalanced setup
    if (name == "paper-unbalanced") {
        rc.interferometer.regime = Regime::Unbalanced;
        rc.interferometer.path_difference = 0.170;
    } else if (name == "paper-balanced-perfect") {
        rc.interferometer.regime = Regime::PerfectBalanced;
        rc.interferometer.path_difference = 0.0;
    } else if (name == "paper-balanced-rough") {
        rc.interferometer.regime = Regime::RoughBalanced;
        rc.interferometer.path_difference = 0.74e-3;
    } else {
        std::string names;
        for (const auto& n : preset_names()) names += " " + n;
        throw InvalidInput("unknown preset '" + name + "'; available:" + names);
    }
    return rc;
}

double parse_theta(const std::string& text) {
    std::string s = text;
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(0, 1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
    if (s.empty()) throw InvalidInput("empty phase");
    double factor = 1.0;
    if (s.size() > 3 && s.substr(s.size() - 3) == "deg") {
        factor = M_PI / 180.0;
        s.resize(s.size() - 3);
    } else if (s.size() > 3 && s.substr(s.size() - 3) == "rad") {
        s.resize(s.size() - 3);
    } else if (s.size() > 2 && s.substr(s.size() - 2) == "pi") {
        factor = M_PI;
        s.resize(s.size() - 2);
    }
    return parse_double(s) * factor;
}

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& section, const std::string& key) {
    throw InvalidInput("unknown config key '" + section + "." + key + "'");
}

double num(const json& v, const std::string& what) {
    if (!v.is_number()) throw InvalidInput(what + " must be a number");
    return v.get<double>();
}

}  // namespace

RunConfig load_config(const std::string& path, RunConfig base) {
    auto f = open_in(path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw InvalidInput("config parse error in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw InvalidInput("config root must be an object");

    bool regime_auto = false;
    for (const auto& [sec, body] : j.items()) {
        if (sec == "source") {
            for (const auto& [k, v] : body.items()) {
                if (k == "bandwidth_mhz")
                    base.source.bandwidth = 2.0 * M_PI * 1e6 * num(v, k);
                else if (k == "round_trip_ns")
                    base.source.round_trip = num(v, k) * ns;
                else if (k == "relative_gain")
                    base.source.relative_gain = num(v, k);
                else
                    bad_key(sec, k);
            }
        } else if (sec == "detection") {
            for (const auto& [k, v] : body.items()) {
                if (k == "resolving_time_ns")
                    base.detection.resolving_time = num(v, k) * ns;
                else if (k == "electric_delay_ns")
                    base.detection.electric_delay = num(v, k) * ns;
                else if (k == "bin_width_ns")
                    base.detection.bin_width = num(v, k) * ns;
                else if (k == "window_lo_ns")
                    base.detection.window_lo = num(v, k) * ns;
                else if (k == "window_hi_ns")
                    base.detection.window_hi = num(v, k) * ns;
                else
                    bad_key(sec, k);
            }
        } else if (sec == "interferometer") {
            for (const auto& [k, v] : body.items()) {
                if (k == "regime") {
                    const std::string r = v.is_string() ? v.get<std::string>() : "";
                    if (r == "auto")
                        regime_auto = true;
                    else if (r == "unbalanced")
                        base.interferometer.regime = Regime::Unbalanced;
                    else if (r == "balanced-perfect")
                        base.interferometer.regime = Regime::PerfectBalanced;
                    else if (r == "balanced-rough")
                        base.interferometer.regime = Regime::RoughBalanced;
                    else
                        throw InvalidInput("regime must be unbalanced, "
                                           "balanced-perfect, balanced-rough or auto");
                } else if (k == "path_difference_mm") {
                    base.interferometer.path_difference = num(v, k) * 1e-3;
                } else if (k == "theta") {
                    base.interferometer.theta =
                        v.is_string() ? parse_theta(v.get<std::string>())
                                      : num(v, k);
                } else if (k == "scale") {
                    base.interferometer.scale = num(v, k);
                } else if (k == "background") {
                    base.interferometer.background = num(v, k);
                } else {
                    bad_key(sec, k);
                }
            }
        } else if (sec == "sim") {
            for (const auto& [k, v] : body.items()) {
                if (k == "seed") {
                    if (!v.is_number_unsigned())
                        throw InvalidInput("seed must be a non-negative integer");
                    base.sim.seed = v.get<uint64_t>();
                } else if (k == "n_pairs") {
                    if (!v.is_number_unsigned())
                        throw InvalidInput("n_pairs must be a non-negative integer");
                    base.sim.n_pairs = v.get<uint64_t>();
                } else if (k == "jitter_sigma") {
                    base.sim.jitter_sigma = num(v, k);
                } else if (k == "accidental_fraction") {
                    base.sim.accidental_fraction = num(v, k);
                } else {
                    bad_key(sec, k);
                }
            }
        } else if (sec == "coherence_length_mm") {
            base.coherence_length = num(body, sec) * 1e-3;
        } else {
            throw InvalidInput("unknown config section '" + sec + "'");
        }
    }
    if (regime_auto)
        base.interferometer.regime = classify_regime(
            base.interferometer.path_difference, base.coherence_length, base.source);
    return base;
}

std::string format_fit_report(const FitResult& fit, const InterferometerConfig& cfg) {
    std::ostringstream out;
    out << "regime=" << regime_name(cfg.regime) << "\n";
    out << "converged=" << (fit.converged ? "true" : "false") << "\n";
    out << "chi2=" << format_double(fit.chi2) << "\n";
    out << "dof=" << fit.dof << "\n";
    out << "chi2_per_dof=" << format_double(fit.chi2_per_dof()) << "\n";
    out << "iterations=" << fit.n_iterations << "\n";
    out << "gradient_norm=" << format_double(fit.gradient_norm) << "\n";
    for (int j = 0; j < n_fit_params; ++j) {
        const auto p = static_cast<FitParam>(j);
        out << fit_param_name(p) << "=" << format_double(fit.value[j]) << "\n";
        if (fit.sigma[j] != 0.0)
            out << fit_param_name(p) << "_sigma=" << format_double(fit.sigma[j])
                << "\n";
    }
    out << "cos_theta=" << format_double(std::cos(fit.value[2])) << "\n";
    out << "theta_canonical=" << format_double(fit.theta_canonical) << "\n";
    out << "theta_note=" << fit.theta_ambiguity << "\n";
    return out.str();
}

}  // namespace biphoton
