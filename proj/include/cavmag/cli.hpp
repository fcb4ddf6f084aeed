#pragma once

// Command-line front end: simulate, fit, experiment, parse. Everything here orchestrates library
// calls; outputs are written only after all computation has finished.
//
// Exit codes: 0 success, 2 validation error, 3 fit non-convergence or fit failure, 4 I/O error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "calibration.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "fitting.hpp"
#include "group_delay.hpp"
#include "io.hpp"
#include "model.hpp"
#include "sweeps.hpp"

namespace cavmag {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "CAVMAG_OUT_DIR";

enum ExitCode : int
{
    exit_ok = 0,
    exit_validation = 2,
    exit_fit = 3,
    exit_io = 4
};

namespace detail {

struct CliState
{
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<unsigned> jobs;
    std::optional<std::uint64_t> seed;
    std::optional<double> noise_sigma;
    bool dry_run = false;
    std::vector<std::string> sets;
    std::string model;
    std::string fit_kind;
    std::vector<std::string> inputs;
    std::string experiment;
    std::string parse_file;
    std::string parse_format = "auto";
};

// Results of one command, written by a single thread at the end.
struct RunOutput
{
    ResultEnvelope envelope;
    nlohmann::json summary = nlohmann::json::object();
    int exit_code = exit_ok;
};

inline std::string fmt_json_number(double v) { return nlohmann::json(v).dump(); }

inline KeyValues gather_config(const CliState& st)
{
    KeyValues kv;
    if (!st.config_path.empty()) {
        kv = read_config_text(read_file(st.config_path));
    }
    for (const auto& s : st.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ValidationError({"--set '" + s + "': expected section.key=value"});
        }
        kv[std::string(trim(std::string_view(s).substr(0, eq)))] = std::string(trim(std::string_view(s).substr(eq + 1)));
    }
    if (st.jobs) {
        kv["run.jobs"] = std::to_string(*st.jobs);
    }
    if (st.seed) {
        kv["noise.seed"] = std::to_string(*st.seed);
    }
    if (st.noise_sigma) {
        kv["noise.sigma"] = fmt_json_number(*st.noise_sigma);
    }
    if (!st.model.empty()) {
        kv["run.model"] = st.model;
    }
    if (!st.fit_kind.empty()) {
        kv["fit.kind"] = st.fit_kind;
    }
    if (!st.experiment.empty()) {
        kv["run.experiment"] = st.experiment;
    }
    if (!st.inputs.empty()) {
        std::string joined;
        for (const auto& f : st.inputs) {
            joined += (joined.empty() ? "" : ", ") + f;
        }
        kv["input.files"] = joined;
    }
    return kv;
}

inline std::string resolve_out_dir(const CliState& st, const RunConfig& cfg)
{
    if (st.out_dir) {
        return *st.out_dir;
    }
    if (!cfg.out_dir.empty()) {
        return cfg.out_dir;
    }
    if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
        return env;
    }
    return "cavmag-out";
}

inline bool is_touchstone(const std::string& path, const std::string& format)
{
    if (format != "auto") {
        return format == "touchstone";
    }
    const auto ext = std::filesystem::path(path).extension().string();
    return ext == ".s2p" || ext == ".S2P" || ext == ".ts";
}

inline Spectrum load_spectrum(const std::string& path, const std::string& format, const std::string& bytes)
{
    if (is_touchstone(path, format)) {
        return parse_touchstone(bytes).s21_spectrum();
    }
    return parse_spectrum_csv(bytes, detect_column_map(bytes));
}

inline std::vector<double> frequency_grid(double f_c, double span, std::size_t points)
{
    return absolute_grid(f_c, SweepAxis::linspace(AxisKind::frequency, -span, span, points));
}

inline nlohmann::json report_json(const FitReport& r)
{
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, est] : r.parameters) {
        params[name] = {{"value", est.value}, {"std_error", est.std_error}};
    }
    return {{"parameters", params},       {"iterations", r.iterations}, {"converged", r.converged},
            {"residual", r.residual},     {"gradient_norm", r.gradient_norm},
            {"stop_reason", r.stop_reason}, {"warnings", r.warnings}};
}

inline Table map_table(const SweepMap& map, const std::vector<const SweepMap*>& extra = {})
{
    std::vector<double> a1;
    std::vector<double> a2;
    std::vector<double> flag;
    for (std::size_t i = 0; i < map.axis1.size(); ++i) {
        for (std::size_t j = 0; j < map.axis2.size(); ++j) {
            a1.push_back(map.axis1.samples[i]);
            a2.push_back(map.axis2.samples[j]);
            bool flagged = map.flagged(i, j);
            for (const auto* m : extra) {
                flagged = flagged || m->flagged(i, j);
            }
            flag.push_back(flagged ? 1.0 : 0.0);
        }
    }
    Table t;
    t.add(axis_name(map.axis1.kind), axis_unit(map.axis1.kind), std::move(a1));
    t.add(axis_name(map.axis2.kind), axis_unit(map.axis2.kind), std::move(a2));
    t.add(map_kind_name(map.kind), map.kind == MapKind::group_delay ? "ns" : "", map.values);
    for (const auto* m : extra) {
        t.add(map_kind_name(m->kind), m->kind == MapKind::group_delay ? "ns" : "", m->values);
    }
    t.add("flagged", "", std::move(flag));
    return t;
}

inline std::vector<double> optional_column(const std::vector<std::optional<double>>& v)
{
    std::vector<double> out;
    for (const auto& x : v) {
        out.push_back(x.value_or(std::numeric_limits<double>::quiet_NaN()));
    }
    return out;
}

inline double detuning_of(const Spectrum& s, std::size_t i, double f_c) { return (s.freq[i] - f_c) * kMHzPerGHz; }

// --------------------------------------------------------------------------------------------

inline RunOutput cmd_simulate(const RunConfig& cfg)
{
    RunOutput out;
    const auto& sys = cfg.system;
    const auto freq = frequency_grid(sys.cavity.f_c, *cfg.grid.span, cfg.grid.points);
    const Spectrum spec = cfg.model == "bare" ? synthesize_spectrum(sys.cavity, freq, cfg.noise_sigma, cfg.seed)
                                              : synthesize_spectrum(sys, freq, cfg.noise_sigma, cfg.seed);
    const GroupDelay gd = group_delay(spec);

    std::vector<double> detuning;
    std::vector<double> re;
    std::vector<double> im;
    std::vector<double> mag;
    std::vector<double> phase;
    std::vector<double> valid;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        detuning.push_back((spec.freq[i] - sys.cavity.f_c) * kMHzPerGHz);
        // Written in the instrument convention, like the phase column, so the file reads back as a measurement.
        re.push_back(spec.s21[i].real());
        im.push_back(-spec.s21[i].imag());
        mag.push_back(std::abs(spec.s21[i]));
        phase.push_back(instrument_phase(spec.s21[i]));
        valid.push_back(gd.valid[i] != 0 ? 1.0 : 0.0);
    }
    Table t;
    t.add("freq", "GHz", spec.freq)
        .add("detuning", "MHz", std::move(detuning))
        .add("re", "", std::move(re))
        .add("im", "", std::move(im))
        .add("magnitude", "", std::move(mag))
        .add("phase", "rad", std::move(phase))
        .add("group_delay", "ns", gd.tau_ns)
        .add("group_delay_valid", "", std::move(valid));
    out.envelope.tables["spectrum"] = std::move(t);

    const cplx at_fc = cfg.model == "bare" ? bare_cavity_s21(sys.cavity.f_c, sys.cavity) : coupled_s21(sys.cavity.f_c, sys);
    out.summary["model"] = cfg.model;
    out.summary["beta"] = cavity_damping(sys.cavity);
    out.summary["s21_magnitude_at_fc"] = std::abs(at_fc);
    out.summary["group_delay_invalid_samples"] = gd.invalid_count();
    out.summary["group_delay_undersampled"] = gd.undersampled;
    if (cfg.model == "coupled") {
        out.summary["alpha"] = magnon_damping(sys.magnon);
        out.summary["magnon_frequency_ghz"] = magnon_frequency(sys.magnon);
        const auto dips = deepest_two(transmission_dips(spec.s21));
        nlohmann::json d = nlohmann::json::array();
        for (const auto& m : dips) {
            d.push_back(detuning_of(spec, m.index, sys.cavity.f_c));
        }
        out.summary["dip_detunings_mhz"] = d;
    }
    return out;
}

inline RunOutput cmd_fit(const RunConfig& cfg, const std::vector<Spectrum>& spectra)
{
    RunOutput out;
    FitOptions fopt;
    nlohmann::json fits = nlohmann::json::array();
    bool converged = true;

    if (cfg.fit_kind == "lorentzian") {
        std::vector<double> center, hwhm, amp, base, resid;
        for (const auto& s : spectra) {
            const auto f = fit_inverse_lorentzian(s, fopt);
            center.push_back(f.center);
            hwhm.push_back(f.hwhm);
            amp.push_back(f.amplitude);
            base.push_back(f.baseline);
            resid.push_back(f.residual);
            auto j = report_json(f.report);
            j["degenerate"] = f.degenerate;
            fits.push_back(j);
            converged = converged && (f.report.converged || f.degenerate);
        }
        Table t;
        t.add("center", "GHz", center).add("hwhm", "MHz", hwhm).add("amplitude", "", amp).add("baseline", "", base)
            .add("residual", "", resid);
        out.envelope.tables["fits"] = std::move(t);
    } else if (cfg.fit_kind == "bare") {
        std::vector<double> fc, kl, kr, beta, ksum, fc_se, kl_se, kr_se;
        for (const auto& s : spectra) {
            const auto f = fit_bare_cavity(s, *cfg.fit_beta0, fopt);
            const auto se = [&](const char* n) {
                return f.report.parameters.count(n) ? f.report.std_error(n) : std::numeric_limits<double>::quiet_NaN();
            };
            fc.push_back(f.f_c);
            fc_se.push_back(se("f_c"));
            kl.push_back(f.kappa_l.value_or(std::numeric_limits<double>::quiet_NaN()));
            kl_se.push_back(se("kappa_l"));
            kr.push_back(f.kappa_r.value_or(std::numeric_limits<double>::quiet_NaN()));
            kr_se.push_back(se("kappa_r"));
            beta.push_back(f.beta);
            ksum.push_back(f.kappa_sum);
            auto j = report_json(f.report);
            j["phase_used"] = f.phase_used;
            fits.push_back(j);
            converged = converged && f.report.converged;
        }
        Table t;
        t.add("f_c", "GHz", fc).add("f_c_std_error", "GHz", fc_se).add("kappa_l", "MHz", kl)
            .add("kappa_l_std_error", "MHz", kl_se).add("kappa_r", "MHz", kr).add("kappa_r_std_error", "MHz", kr_se)
            .add("beta", "MHz", beta).add("kappa_sum", "MHz", ksum);
        out.envelope.tables["fits"] = std::move(t);
    } else if (cfg.fit_kind == "two") {
        std::vector<double> pr, pi, mr, mi, fb;
        for (const auto& s : spectra) {
            const auto f = fit_two_resonances(s, TwoResonanceOptions{fopt});
            pr.push_back(f.modes.plus.real());
            pi.push_back(f.modes.plus.imag());
            mr.push_back(f.modes.minus.real());
            mi.push_back(f.modes.minus.imag());
            fb.push_back(f.fallback ? 1.0 : 0.0);
            auto j = report_json(f.report);
            j["fallback"] = f.fallback;
            j["degenerate"] = f.modes.degenerate;
            fits.push_back(j);
            converged = converged && f.report.converged;
        }
        Table t;
        t.add("mode_plus_re", "MHz", pr).add("mode_plus_im", "MHz", pi).add("mode_minus_re", "MHz", mr)
            .add("mode_minus_im", "MHz", mi).add("fallback", "", fb);
        out.envelope.tables["modes"] = std::move(t);
    } else if (cfg.fit_kind == "coupling") {
        std::vector<PhaseSpectrum> data;
        for (std::size_t i = 0; i < spectra.size(); ++i) {
            data.push_back({cfg.input_phases[i], spectra[i]});
        }
        const auto points = extract_coupling_vs_phase(data, cavity_complex_frequency(cfg.system.cavity),
                                                      magnon_complex_frequency(cfg.system.magnon), cfg.jobs);
        std::vector<double> phi, j_col, g_col, mag, ok;
        nlohmann::json errors = nlohmann::json::array();
        for (const auto& p : points) {
            phi.push_back(p.phi);
            const double nan = std::numeric_limits<double>::quiet_NaN();
            j_col.push_back(p.coupling ? p.coupling->j() : nan);
            g_col.push_back(p.coupling ? p.coupling->gamma() : nan);
            mag.push_back(p.coupling ? p.coupling->magnitude() : nan);
            ok.push_back(p.coupling ? 1.0 : 0.0);
            if (!p.coupling) {
                errors.push_back({{"delta_phi", p.phi}, {"error", p.error}});
                converged = false;
            }
        }
        Table t;
        t.add("delta_phi", "rad", phi).add("J", "MHz", j_col).add("Gamma", "MHz", g_col).add("abs_G", "MHz", mag)
            .add("fitted", "", ok);
        out.envelope.tables["coupling"] = std::move(t);
        out.summary["gaps"] = errors;
    } else if (cfg.fit_kind == "anomaly") {
        std::vector<AnomalyObservation> data;
        for (std::size_t i = 0; i < spectra.size(); ++i) {
            data.push_back({cfg.input_phases[i], cfg.input_detunings.empty() ? 0.0 : cfg.input_detunings[i], spectra[i]});
        }
        const auto f = fit_anomaly_params(data, cfg.system, fopt);
        fits.push_back(report_json(f.report));
        out.summary["eta"] = f.eta;
        out.summary["delta"] = f.delta;
        converged = f.report.converged;
    }
    out.summary["fit"] = cfg.fit_kind;
    out.summary["converged"] = converged;
    out.envelope.parameters["fits"] = fits;
    out.exit_code = converged ? exit_ok : exit_fit;
    return out;
}

inline RunOutput cmd_experiment(const RunConfig& cfg, const std::optional<CalibrationTable>& table)
{
    RunOutput out;
    SweepOptions sopt;
    sopt.jobs = cfg.jobs;
    const auto& g = cfg.grid;
    double span = g.span.value_or(0.0);
    if (!g.span && table) {
        for (const auto& row : table->rows) {
            const double b = std::abs(row.beta());
            span = std::max(span, 10.0 * (b > 0.0 ? b : cavity_total_damping(row.cavity())));
        }
    }
    const auto freqs = SweepAxis::linspace(AxisKind::frequency, -span, span, g.points);

    if (cfg.experiment == "phase") {
        const auto phis = SweepAxis::linspace(AxisKind::delta_phi, g.phase_start, g.phase_stop, g.phase_points);
        const auto r = phase_sweep(cfg.system, phis, freqs, sopt);
        out.envelope.tables["map"] = map_table(r.amplitude, {&r.group_delay});
        Table tr;
        tr.add("delta_phi", "rad", phis.samples)
            .add("inverse_amplitude_at_fc", "", r.inverse_amplitude_at_fc)
            .add("splitting", "MHz", r.splitting);
        out.envelope.tables["traces"] = std::move(tr);
        const auto best = std::max_element(r.splitting.begin(), r.splitting.end());
        out.summary["max_splitting_mhz"] = *best;
        out.summary["max_splitting_delta_phi"] = phis.samples[static_cast<std::size_t>(best - r.splitting.begin())];
        out.summary["flagged_cells"] = r.flagged_cells;
    } else if (cfg.experiment == "field") {
        const auto dets = SweepAxis::linspace(AxisKind::bias_field, -g.detuning_span, g.detuning_span, g.detuning_points);
        const auto r = field_sweep(cfg.system, dets, freqs, sopt);
        out.envelope.tables["map"] = map_table(r.amplitude);
        Table br;
        br.add("bias_field", "MHz", dets.samples)
            .add("lower_branch", "MHz", optional_column(r.lower_branch))
            .add("upper_branch", "MHz", optional_column(r.upper_branch));
        out.envelope.tables["branches"] = std::move(br);
        const auto opt_json = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
        out.summary["separation_mhz"] = opt_json(r.separation_at_zero);
        out.summary["abs_G_mhz"] = opt_json(r.coupling_magnitude);
        out.summary["cooperativity"] = opt_json(r.cooperativity);
        out.summary["flagged_cells"] = r.flagged_cells;
    } else {
        const CalibrationCurve curve(*table);
        const double lo = g.spacing_min.value_or(curve.d_min());
        const double hi = g.spacing_max.value_or(curve.d_max());
        const auto ds = SweepAxis::linspace(AxisKind::spacing_d, lo, hi, g.spacing_points);
        const auto r = spacing_sweep(*table, ds, freqs, sopt);
        out.envelope.tables["map"] = map_table(r.amplitude);
        std::vector<double> flags(r.tau_flag.begin(), r.tau_flag.end());
        Table tr;
        tr.add("spacing_d", "mm", ds.samples)
            .add("beta", "MHz", r.beta)
            .add("s21_magnitude_at_fc", "", r.s21_at_fc)
            .add("group_delay_at_fc", "ns", r.tau_at_fc)
            .add("group_delay_singular", "", std::move(flags));
        out.envelope.tables["traces"] = std::move(tr);
        nlohmann::json roots = nlohmann::json::array();
        for (const auto& c : r.critical.roots) {
            roots.push_back(c.d);
        }
        out.summary["critical_spacings_mm"] = roots;
        out.summary["min_abs_beta_mhz"] = r.critical.min_abs_beta;
        if (r.critical.roots.empty()) {
            out.summary["message"] = "no critical coupling found";
        }
        out.summary["flagged_cells"] = r.flagged_cells;
    }
    out.summary["experiment"] = cfg.experiment;
    return out;
}

inline nlohmann::json cmd_parse(const std::string& path, const std::string& format)
{
    const std::string bytes = read_file(path);
    nlohmann::json j;
    j["file"] = std::filesystem::path(path).filename().string();
    j["sha256"] = sha256_hex(bytes);
    Spectrum s;
    if (is_touchstone(path, format)) {
        const auto rec = parse_touchstone(bytes);
        j["format"] = "touchstone";
        j["encoding"] = format_name(rec.format);
        j["reference_impedance_ohm"] = rec.reference_impedance;
        j["option_line"] = rec.option_line;
        j["comments"] = rec.comments;
        s = rec.s21_spectrum();
    } else {
        s = parse_spectrum_csv(bytes, detect_column_map(bytes));
        j["format"] = "csv";
        j["has_phase"] = s.has_phase;
    }
    j["points"] = s.size();
    j["freq_min_ghz"] = s.freq.front();
    j["freq_max_ghz"] = s.freq.back();
    const auto dips = transmission_dips(s.s21);
    j["dips"] = dips.size();
    return j;
}

inline void write_outputs(const std::string& dir, RunOutput& out, const std::string& config_digest)
{
    std::filesystem::create_directories(dir);
    write_file((std::filesystem::path(dir) / "results.json").string(), save_results(out.envelope));
    for (const auto& [name, table] : out.envelope.tables) {
        write_file((std::filesystem::path(dir) / (name + ".csv")).string(), table_to_csv(table, config_digest));
    }
}

} // namespace detail

// Runs the tool; `out` receives the JSON summary, `err` diagnostics. Never throws.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    detail::CliState st;
    CLI::App app{"Critically driven cavity magnonics: simulation, fitting and experiment sweeps", "cavmag"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", st.config_path, "INI config file")->check(CLI::ExistingFile);
        sub->add_option("-o,--out-dir", st.out_dir, std::string("Output directory (default: $") + kOutDirEnv +
                                                        " or ./cavmag-out)");
        sub->add_option("-j,--jobs", st.jobs, "Worker threads for sweeps")->check(CLI::Range(1u, 1024u));
        sub->add_option("--seed", st.seed, "Noise seed");
        sub->add_option("--noise-sigma", st.noise_sigma, "Complex Gaussian noise sigma per quadrature")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--set", st.sets, "Override a config key: section.key=value (repeatable)")
            ->allow_extra_args(false);  // one value per flag, so positionals after it stay positionals
        sub->add_flag("--dry-run", st.dry_run, "Validate the configuration and inputs, then stop");
    };

    auto* simulate = app.add_subcommand("simulate", "Forward model: spectrum and group delay");
    add_common(simulate);
    simulate->add_option("--model", st.model, "bare | coupled")->check(CLI::IsMember({"bare", "coupled"}));

    auto* fit = app.add_subcommand("fit", "Fit measured or synthetic spectra");
    add_common(fit);
    fit->add_option("--kind", st.fit_kind, "lorentzian | bare | two | coupling | anomaly")
        ->check(CLI::IsMember({"lorentzian", "bare", "two", "coupling", "anomaly"}));
    fit->add_option("inputs", st.inputs, "Input spectra (.csv or .s2p); overrides input.files");

    auto* experiment = app.add_subcommand("experiment", "Spacing, phase or field sweep");
    add_common(experiment);
    experiment->add_option("experiment", st.experiment, "spacing | phase | field")
        ->check(CLI::IsMember({"spacing", "phase", "field"}));

    auto* parse = app.add_subcommand("parse", "Inspect a Touchstone or CSV spectrum file");
    parse->add_option("file", st.parse_file, "File to inspect")->required();
    parse->add_option("--format", st.parse_format, "auto | csv | touchstone")
        ->check(CLI::IsMember({"auto", "csv", "touchstone"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_validation;
    }

    try {
        if (parse->parsed()) {
            out << detail::cmd_parse(st.parse_file, st.parse_format).dump(2) << '\n';
            return exit_ok;
        }
        const Command cmd = simulate->parsed() ? Command::simulate : fit->parsed() ? Command::fit : Command::experiment;
        RunConfig cfg = build_config(detail::gather_config(st), cmd);
        cfg.effective.erase("run.out_dir");
        const std::string config_digest = cfg.digest();
        const std::string dir = detail::resolve_out_dir(st, cfg);

        // Inputs are read and parsed before any computation.
        std::string input_material = config_digest;
        std::vector<Spectrum> spectra;
        std::optional<CalibrationTable> table;
        if (cmd == Command::fit) {
            for (const auto& path : cfg.input_files) {
                const std::string bytes = read_file(path);
                input_material += sha256_hex(bytes);
                spectra.push_back(detail::load_spectrum(path, cfg.input_format, bytes));
            }
        }
        if (cmd == Command::experiment && cfg.experiment == "spacing") {
            const std::string bytes = read_file(cfg.calibration);
            input_material += sha256_hex(bytes);
            table = load_calibration(bytes);
            CalibrationCurve check(*table);
        }
        if (st.dry_run) {
            out << nlohmann::json{{"valid", true}, {"config_digest", config_digest}, {"out_dir", dir}}.dump(2) << '\n';
            return exit_ok;
        }

        detail::RunOutput result;
        try {
            result = cmd == Command::simulate ? detail::cmd_simulate(cfg)
                   : cmd == Command::fit      ? detail::cmd_fit(cfg, spectra)
                                              : detail::cmd_experiment(cfg, table);
        } catch (const AmbiguousLineshapeError& e) {
            err << "cavmag: fit failed: " << e.what() << '\n';
            return exit_fit;
        } catch (const IdentifiabilityError& e) {
            err << "cavmag: fit failed: " << e.what() << '\n';
            return exit_fit;
        } catch (const SingularityError& e) {
            if (cmd == Command::fit) {
                err << "cavmag: fit failed: " << e.what() << '\n';
                return exit_fit;
            }
            throw;
        }

        auto& env = result.envelope;
        env.input_digest = sha256_hex(input_material);
        env.parameters["config"] = cfg.effective;
        env.metadata = {{"tool", "cavmag"},
                        {"version", kToolVersion},
                        {"command", cmd == Command::simulate ? "simulate" : cmd == Command::fit ? "fit" : "experiment"},
                        {"config_digest", config_digest},
                        {"summary", result.summary}};
        detail::write_outputs(dir, result, config_digest);
        out << result.summary.dump(2) << '\n';
        if (result.exit_code == exit_fit) {
            err << "cavmag: fit did not converge; partial report written to " << dir << '\n';
        }
        return result.exit_code;
    } catch (const ParseError& e) {
        err << "cavmag: input error: " << e.what() << '\n';
        return exit_io;
    } catch (const Error& e) {
        err << "cavmag: invalid configuration: " << e.what() << '\n';
        return exit_validation;
    } catch (const std::ios_base::failure& e) {
        err << "cavmag: I/O error: " << e.what() << '\n';
        return exit_io;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "cavmag: I/O error: " << e.what() << '\n';
        return exit_io;
    } catch (const std::exception& e) {
        err << "cavmag: error: " << e.what() << '\n';
        return exit_io;
    }
}

} // namespace cavmag
