#pragma once

// Run configuration: INI-style `[section] key = value` text, every physical value with an explicit
// unit suffix. Values are converted to internal units (GHz, MHz, mT, m, mm, rad) here and nowhere
// else. Validation collects every problem, each named by its config path.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "io.hpp"
#include "model.hpp"
#include "sweeps.hpp"
#include "types.hpp"

namespace cavmag {

enum class Dim
{
    frequency,   // -> GHz
    rate,        // -> MHz
    field,       // -> mT
    gyro,        // -> GHz/T
    length,      // -> m
    spacing,     // -> mm
    phase,       // -> rad
    number,      // dimensionless
    count,       // non-negative integer
    text
};

inline const char* internal_unit(Dim d)
{
    switch (d) {
    case Dim::frequency: return "GHz";
    case Dim::rate: return "MHz";
    case Dim::field: return "mT";
    case Dim::gyro: return "GHz/T";
    case Dim::length: return "m";
    case Dim::spacing: return "mm";
    case Dim::phase: return "rad";
    default: return "";
    }
}

namespace detail {

inline std::optional<double> unit_factor(Dim dim, std::string_view unit)
{
    struct U
    {
        std::string_view name;
        double factor;
    };
    static constexpr U freq[] = {{"Hz", 1e-9}, {"kHz", 1e-6}, {"MHz", 1e-3}, {"GHz", 1.0}};
    static constexpr U rate[] = {{"Hz", 1e-6}, {"kHz", 1e-3}, {"MHz", 1.0}, {"GHz", 1e3}};
    static constexpr U field[] = {{"T", 1e3}, {"mT", 1.0}, {"uT", 1e-3}};
    static constexpr U gyro[] = {{"GHz/T", 1.0}, {"MHz/mT", 1.0}, {"MHz/T", 1e-3}};
    static constexpr U length[] = {{"m", 1.0}, {"cm", 1e-2}, {"mm", 1e-3}};
    static constexpr U spacing[] = {{"m", 1e3}, {"cm", 10.0}, {"mm", 1.0}, {"um", 1e-3}};
    static constexpr U phase[] = {{"rad", 1.0}, {"deg", kPi / 180.0}, {"pi", kPi}};
    auto look = [&](auto const& table) -> std::optional<double> {
        for (const auto& u : table) {
            if (u.name == unit) {
                return u.factor;
            }
        }
        return std::nullopt;
    };
    switch (dim) {
    case Dim::frequency: return look(freq);
    case Dim::rate: return look(rate);
    case Dim::field: return look(field);
    case Dim::gyro: return look(gyro);
    case Dim::length: return look(length);
    case Dim::spacing: return look(spacing);
    case Dim::phase: return look(phase);
    default: return unit.empty() ? std::optional(1.0) : std::nullopt;
    }
}

} // namespace detail

// "6.181 GHz" -> 6.181 for Dim::frequency. Returns an error message instead of throwing so that
// callers can accumulate problems.
inline std::optional<double> parse_quantity(std::string_view text, Dim dim, std::string& error)
{
    text = detail::trim(text);
    const auto space = text.find_first_of(" \t");
    const std::string_view number = space == std::string_view::npos ? text : text.substr(0, space);
    const std::string_view unit = space == std::string_view::npos ? std::string_view{} : detail::trim(text.substr(space));
    const auto v = detail::to_double(number);
    if (!v) {
        error = "'" + std::string(text) + "' is not a finite number";
        return std::nullopt;
    }
    const bool physical = dim != Dim::number && dim != Dim::count;
    if (physical && unit.empty()) {
        error = "'" + std::string(text) + "' needs a unit (internal unit " + internal_unit(dim) + ")";
        return std::nullopt;
    }
    const auto factor = detail::unit_factor(dim, unit);
    if (!factor) {
        error = "unit '" + std::string(unit) + "' is not valid here" +
                (physical ? std::string(" (expected a ") + internal_unit(dim) + "-compatible unit)" : std::string());
        return std::nullopt;
    }
    if (dim == Dim::count && (*v < 0.0 || std::floor(*v) != *v)) {
        error = "'" + std::string(text) + "' must be a non-negative integer";
        return std::nullopt;
    }
    return *v * *factor;
}

using KeyValues = std::map<std::string, std::string>;  // "section.key" -> raw text

inline KeyValues read_config_text(const std::string& text)
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ValidationError({"config line " + std::to_string(e.line()) + ": " + e.message()});
    }
    KeyValues out;
    for (const auto& [section, keys] : tree) {
        if (keys.empty()) {
            out[section] = keys.data();  // key outside any section
            continue;
        }
        for (const auto& [key, node] : keys) {
            out[section + "." + key] = node.data();
        }
    }
    return out;
}

struct Grid
{
    std::optional<double> span;  // half-span of the frequency axis around f_c, MHz; default 10 linewidths
    std::size_t points = 2001;
    double phase_start = 0.0;
    double phase_stop = 2.0 * kPi;
    std::size_t phase_points = 41;
    double detuning_span = 60.0;
    std::size_t detuning_points = 81;
    std::optional<double> spacing_min;
    std::optional<double> spacing_max;
    std::size_t spacing_points = 201;
};

struct RunConfig
{
    std::string model = "coupled";  // simulate: bare | coupled
    std::string experiment;         // spacing | phase | field
    std::string fit_kind;           // lorentzian | bare | two | coupling | anomaly
    CoupledSystem system;
    bool has_cavity = false;
    bool has_magnon = false;
    std::optional<double> fit_beta0;
    Grid grid;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::string out_dir;
    std::vector<std::string> input_files;
    std::string input_format = "auto";  // auto | csv | touchstone
    std::vector<double> input_phases;   // rad, one per input file
    std::vector<double> input_detunings;  // MHz, one per input file
    std::string calibration;
    nlohmann::json effective = nlohmann::json::object();  // resolved values, echoed into results

    [[nodiscard]] std::string digest() const { return sha256_hex(effective.dump()); }
};

namespace detail {

struct KeySpec
{
    const char* key;
    Dim dim;
};

inline constexpr KeySpec kConfigKeys[] = {
    {"run.model", Dim::text},           {"run.experiment", Dim::text},      {"run.jobs", Dim::count},
    {"run.out_dir", Dim::text},         {"cavity.f_c", Dim::frequency},     {"cavity.beta0", Dim::rate},
    {"cavity.kappa_l", Dim::rate},      {"cavity.kappa_r", Dim::rate},      {"magnon.gamma_e", Dim::gyro},
    {"magnon.mu0_ha", Dim::field},      {"magnon.mu0_h", Dim::field},       {"magnon.field_detuning", Dim::rate},
    {"magnon.alpha0", Dim::rate},       {"magnon.kappa_l", Dim::rate},      {"magnon.kappa_r", Dim::rate},
    {"link.length", Dim::length},       {"link.wavelength", Dim::spacing},  {"link.delta_phi", Dim::phase},
    {"anomaly.eta", Dim::number},       {"anomaly.delta", Dim::number},     {"grid.span", Dim::rate},
    {"grid.points", Dim::count},        {"grid.phase_start", Dim::phase},   {"grid.phase_stop", Dim::phase},
    {"grid.phase_points", Dim::count},  {"grid.detuning_span", Dim::rate},  {"grid.detuning_points", Dim::count},
    {"grid.spacing_min", Dim::spacing}, {"grid.spacing_max", Dim::spacing}, {"grid.spacing_points", Dim::count},
    {"noise.sigma", Dim::number},       {"noise.seed", Dim::count},         {"fit.kind", Dim::text},
    {"fit.beta0", Dim::rate},           {"input.files", Dim::text},         {"input.format", Dim::text},
    {"input.phases", Dim::text},        {"input.field_detunings", Dim::text}, {"input.calibration", Dim::text},
};

inline std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    if (trim(s).empty()) {
        return out;
    }
    for (auto item : split_commas(s)) {
        out.emplace_back(item);
    }
    return out;
}

class ConfigReader
{
public:
    explicit ConfigReader(const KeyValues& kv) : kv_(kv)
    {
        for (const auto& [key, value] : kv) {
            bool known = false;
            for (const auto& spec : kConfigKeys) {
                known = known || key == spec.key;
            }
            if (!known) {
                problems.push_back(key + ": unknown config key");
            }
        }
    }

    std::optional<double> number(const std::string& key, Dim dim)
    {
        const auto it = kv_.find(key);
        if (it == kv_.end()) {
            return std::nullopt;
        }
        std::string err;
        const auto v = parse_quantity(it->second, dim, err);
        if (!v) {
            problems.push_back(key + ": " + err);
            return std::nullopt;
        }
        effective[key] = dim == Dim::count || dim == Dim::number
                             ? nlohmann::json(*v)
                             : nlohmann::json{{"value", *v}, {"unit", internal_unit(dim)}};
        return v;
    }

    void number_into(const std::string& key, Dim dim, double& target)
    {
        if (const auto v = number(key, dim)) {
            target = *v;
        }
    }

    template <class Int>
    void count_into(const std::string& key, Int& target)
    {
        if (const auto v = number(key, Dim::count)) {
            target = static_cast<Int>(*v);
        }
    }

    std::optional<std::string> text(const std::string& key, std::initializer_list<const char*> allowed = {})
    {
        const auto it = kv_.find(key);
        if (it == kv_.end()) {
            return std::nullopt;
        }
        const std::string v(trim(it->second));
        if (allowed.size() != 0) {
            bool ok = false;
            std::string list;
            for (const char* a : allowed) {
                ok = ok || v == a;
                list += std::string(list.empty() ? "" : ", ") + a;
            }
            if (!ok) {
                problems.push_back(key + ": '" + v + "' is not one of {" + list + "}");
                return std::nullopt;
            }
        }
        effective[key] = v;
        return v;
    }

    std::vector<double> quantity_list(const std::string& key, Dim dim)
    {
        std::vector<double> out;
        const auto it = kv_.find(key);
        if (it == kv_.end()) {
            return out;
        }
        nlohmann::json values = nlohmann::json::array();
        const auto items = split_list(it->second);
        for (std::size_t i = 0; i < items.size(); ++i) {
            std::string err;
            if (const auto v = parse_quantity(items[i], dim, err)) {
                out.push_back(*v);
                values.push_back(*v);
            } else {
                problems.push_back(key + "[" + std::to_string(i) + "]: " + err);
            }
        }
        effective[key] = {{"values", values}, {"unit", internal_unit(dim)}};
        return out;
    }

    [[nodiscard]] bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::vector<std::string> problems;
    nlohmann::json effective = nlohmann::json::object();

private:
    const KeyValues& kv_;
};

} // namespace detail

// What the selected command needs from the configuration.
enum class Command
{
    simulate,
    fit,
    experiment,
    parse
};

inline RunConfig build_config(const KeyValues& kv, Command cmd)
{
    detail::ConfigReader r(kv);
    RunConfig c;

    if (auto v = r.text("run.model", {"bare", "coupled"})) {
        c.model = *v;
    }
    if (auto v = r.text("run.experiment", {"spacing", "phase", "field"})) {
        c.experiment = *v;
    }
    if (auto v = r.text("fit.kind", {"lorentzian", "bare", "two", "coupling", "anomaly"})) {
        c.fit_kind = *v;
    }
    if (auto v = r.text("run.out_dir")) {
        c.out_dir = *v;
    }
    r.count_into("run.jobs", c.jobs);
    r.number_into("noise.sigma", Dim::number, c.noise_sigma);
    r.count_into("noise.seed", c.seed);
    if (c.noise_sigma < 0.0) {
        r.problems.emplace_back("noise.sigma: must be non-negative");
    }

    const bool needs_cavity = (cmd == Command::simulate) ||
                              (cmd == Command::experiment && (c.experiment == "phase" || c.experiment == "field")) ||
                              (cmd == Command::fit && (c.fit_kind == "coupling" || c.fit_kind == "anomaly"));
    const bool needs_magnon = (cmd == Command::simulate && c.model == "coupled") ||
                              (cmd == Command::experiment && (c.experiment == "phase" || c.experiment == "field")) ||
                              (cmd == Command::fit && (c.fit_kind == "coupling" || c.fit_kind == "anomaly"));
    if (cmd == Command::experiment && c.experiment.empty() && !r.has("run.experiment")) {
        r.problems.emplace_back("run.experiment: required (spacing | phase | field)");
    }
    if (cmd == Command::fit && c.fit_kind.empty() && !r.has("fit.kind")) {
        r.problems.emplace_back("fit.kind: required (lorentzian | bare | two | coupling | anomaly)");
    }

    auto& cav = c.system.cavity;
    r.number_into("cavity.f_c", Dim::frequency, cav.f_c);
    r.number_into("cavity.beta0", Dim::rate, cav.beta0);
    r.number_into("cavity.kappa_l", Dim::rate, cav.kappa_l);
    r.number_into("cavity.kappa_r", Dim::rate, cav.kappa_r);
    if (needs_cavity) {
        for (const char* k : {"cavity.f_c", "cavity.beta0", "cavity.kappa_l", "cavity.kappa_r"}) {
            if (!r.has(k)) {
                r.problems.push_back(std::string(k) + ": required");
            }
        }
        c.has_cavity = true;
    }
    if (c.has_cavity && cav.f_c <= 0.0 && r.has("cavity.f_c")) {
        r.problems.emplace_back("cavity.f_c: must be positive");
    }
    for (auto [v, key] : {std::pair{cav.beta0, "cavity.beta0"}, std::pair{cav.kappa_l, "cavity.kappa_l"},
                          std::pair{cav.kappa_r, "cavity.kappa_r"}}) {
        if (v < 0.0) {
            r.problems.push_back(std::string(key) + ": rates must be non-negative");
        }
    }

    auto& mag = c.system.magnon;
    r.number_into("magnon.gamma_e", Dim::gyro, mag.gamma_e);
    r.number_into("magnon.mu0_ha", Dim::field, mag.mu0_ha);
    const auto mu0_h = r.number("magnon.mu0_h", Dim::field);
    const auto detuning = r.number("magnon.field_detuning", Dim::rate);
    if (mu0_h && detuning) {
        r.problems.emplace_back("magnon.mu0_h: give either mu0_h or field_detuning, not both");
    }
    r.number_into("magnon.alpha0", Dim::rate, mag.alpha0);
    r.number_into("magnon.kappa_l", Dim::rate, mag.kappa_l);
    r.number_into("magnon.kappa_r", Dim::rate, mag.kappa_r);
    if (needs_magnon) {
        for (const char* k : {"magnon.alpha0", "magnon.kappa_l", "magnon.kappa_r"}) {
            if (!r.has(k)) {
                r.problems.push_back(std::string(k) + ": required");
            }
        }
        c.has_magnon = true;
    }
    for (auto [v, key] : {std::pair{mag.alpha0, "magnon.alpha0"}, std::pair{mag.kappa_l, "magnon.kappa_l"},
                          std::pair{mag.kappa_r, "magnon.kappa_r"}}) {
        if (v < 0.0) {
            r.problems.push_back(std::string(key) + ": rates must be non-negative");
        }
    }
    if (mag.gamma_e <= 0.0) {
        r.problems.emplace_back("magnon.gamma_e: must be positive");
    }

    auto& link = c.system.link;
    r.number_into("link.wavelength", Dim::spacing, link.wavelength_mm);
    if (link.wavelength_mm <= 0.0) {
        r.problems.emplace_back("link.wavelength: must be positive");
    }
    // Default cable: 66 wavelengths, which puts the maximum eta = 2 splitting at delta_phi = pi.
    link.length_m = 66.0 * link.wavelength_mm * 1e-3;
    r.number_into("link.length", Dim::length, link.length_m);
    if (link.length_m < 0.0) {
        r.problems.emplace_back("link.length: must be non-negative");
    }
    r.number_into("link.delta_phi", Dim::phase, link.delta_phi);

    auto& an = c.system.anomaly;
    r.number_into("anomaly.eta", Dim::number, an.eta);
    r.number_into("anomaly.delta", Dim::number, an.delta);
    if (!(an.eta > 0.0)) {
        r.problems.emplace_back("anomaly.eta: must be positive");
    }
    if (!(an.delta >= 0.0 && an.delta <= 1.0)) {
        r.problems.emplace_back("anomaly.delta: must lie in [0, 1]");
    }

    if (c.has_magnon && c.has_cavity && r.problems.empty()) {
        if (mu0_h) {
            mag.mu0_h = *mu0_h;
        } else {
            c.system = with_field_detuning(c.system, detuning.value_or(0.0));
        }
        if (magnon_frequency(mag) <= 0.0) {
            r.problems.emplace_back("magnon.mu0_h: magnon frequency must be positive");
        }
    }

    auto& g = c.grid;
    g.span = r.number("grid.span", Dim::rate);
    if (!g.span && c.has_cavity) {
        double lw = std::abs(cavity_damping(cav));
        if (c.has_magnon) {
            lw = std::max(lw, std::abs(magnon_damping(mag)));
        }
        g.span = 10.0 * (lw > 0.0 ? lw : cavity_total_damping(cav));
    }
    r.count_into("grid.points", g.points);
    r.number_into("grid.phase_start", Dim::phase, g.phase_start);
    r.number_into("grid.phase_stop", Dim::phase, g.phase_stop);
    r.count_into("grid.phase_points", g.phase_points);
    r.number_into("grid.detuning_span", Dim::rate, g.detuning_span);
    r.count_into("grid.detuning_points", g.detuning_points);
    g.spacing_min = r.number("grid.spacing_min", Dim::spacing);
    g.spacing_max = r.number("grid.spacing_max", Dim::spacing);
    r.count_into("grid.spacing_points", g.spacing_points);
    if (g.span && !(*g.span > 0.0)) {
        r.problems.emplace_back("grid.span: must be positive");
    }
    if (!(g.detuning_span > 0.0)) {
        r.problems.emplace_back("grid.detuning_span: must be positive");
    }
    for (auto [n, key] : {std::pair{g.points, "grid.points"}, std::pair{g.phase_points, "grid.phase_points"},
                          std::pair{g.detuning_points, "grid.detuning_points"},
                          std::pair{g.spacing_points, "grid.spacing_points"}}) {
        if (n < 2) {
            r.problems.push_back(std::string(key) + ": needs at least 2 points");
        }
    }
    if (!(g.phase_stop > g.phase_start)) {
        r.problems.emplace_back("grid.phase_stop: must exceed grid.phase_start");
    }
    if (g.spacing_min && g.spacing_max && !(*g.spacing_max > *g.spacing_min)) {
        r.problems.emplace_back("grid.spacing_max: must exceed grid.spacing_min");
    }

    c.fit_beta0 = r.number("fit.beta0", Dim::rate);
    if (c.fit_beta0 && *c.fit_beta0 < 0.0) {
        r.problems.emplace_back("fit.beta0: must be non-negative");
    }
    if (const auto it = kv.find("input.files"); it != kv.end()) {
        c.input_files = detail::split_list(it->second);
        r.effective["input.files"] = c.input_files;
    }
    if (auto v = r.text("input.format", {"auto", "csv", "touchstone"})) {
        c.input_format = *v;
    }
    c.input_phases = r.quantity_list("input.phases", Dim::phase);
    c.input_detunings = r.quantity_list("input.field_detunings", Dim::rate);
    if (auto v = r.text("input.calibration")) {
        c.calibration = *v;
    }
    if (cmd == Command::fit) {
        if (c.input_files.empty()) {
            r.problems.emplace_back("input.files: required for fit");
        }
        if ((c.fit_kind == "coupling" || c.fit_kind == "anomaly") && c.input_phases.size() != c.input_files.size()) {
            r.problems.emplace_back("input.phases: needs one phase per input file (" +
                                    std::to_string(c.input_files.size()) + ")");
        }
        if (!c.input_detunings.empty() && c.input_detunings.size() != c.input_files.size()) {
            r.problems.emplace_back("input.field_detunings: needs one value per input file");
        }
        if (c.fit_kind == "bare" && !c.fit_beta0 && !r.has("cavity.beta0")) {
            r.problems.emplace_back("fit.beta0: required for the bare-cavity fit (or give cavity.beta0)");
        }
        if (c.fit_kind == "bare" && !c.fit_beta0) {
            c.fit_beta0 = cav.beta0;
        }
    }
    if (cmd == Command::experiment && c.experiment == "spacing" && c.calibration.empty()) {
        r.problems.emplace_back("input.calibration: required for the spacing experiment");
    }

    if (!r.problems.empty()) {
        throw ValidationError(std::move(r.problems));
    }
    if (c.has_cavity) {
        validate(c.system.cavity);
    }
    if (c.has_magnon) {
        validate(c.system.magnon);
    }
    c.effective = std::move(r.effective);
    const auto& sys = c.system;
    c.effective["resolved"] = {
        {"cavity", {{"f_c_GHz", cav.f_c}, {"beta0_MHz", cav.beta0}, {"kappa_l_MHz", cav.kappa_l},
                    {"kappa_r_MHz", cav.kappa_r}}},
        {"magnon", {{"gamma_e_GHz_per_T", mag.gamma_e}, {"mu0_ha_mT", mag.mu0_ha}, {"mu0_h_mT", mag.mu0_h},
                    {"alpha0_MHz", mag.alpha0}, {"kappa_l_MHz", mag.kappa_l}, {"kappa_r_MHz", mag.kappa_r}}},
        {"link", {{"length_m", sys.link.length_m}, {"wavelength_mm", sys.link.wavelength_mm},
                  {"delta_phi_rad", sys.link.delta_phi}}},
        {"anomaly", {{"eta", sys.anomaly.eta}, {"delta", sys.anomaly.delta}}},
        {"grid", {{"span_MHz", g.span ? nlohmann::json(*g.span) : nlohmann::json(nullptr)}, {"points", g.points},
                  {"phase_start_rad", g.phase_start}, {"phase_stop_rad", g.phase_stop},
                  {"phase_points", g.phase_points}, {"detuning_span_MHz", g.detuning_span},
                  {"detuning_points", g.detuning_points}, {"spacing_points", g.spacing_points}}},
        {"noise", {{"sigma", c.noise_sigma}, {"seed", c.seed}}},
        {"jobs", c.jobs},
    };
    return c;
}

} // namespace cavmag
