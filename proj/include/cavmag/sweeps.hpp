#pragma once

// Experiment engines: phase sweep at f_m = f_c, field sweep at fixed phase, spacing sweep over
// the cavity calibration, and the synthetic spectrum generator used to exercise the fits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "calibration.hpp"
#include "errors.hpp"
#include "extrema.hpp"
#include "group_delay.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "types.hpp"

namespace cavmag {

enum class AxisKind
{
    spacing_d,   // mm
    delta_phi,   // phase-shifter setting, rad
    bias_field,  // field detuning Delta_m = f_m - f_c, MHz
    frequency    // probe detuning Delta = f - f_c, MHz
};

inline const char* axis_name(AxisKind k)
{
    switch (k) {
    case AxisKind::spacing_d: return "spacing_d";
    case AxisKind::delta_phi: return "delta_phi";
    case AxisKind::bias_field: return "bias_field";
    case AxisKind::frequency: return "frequency";
    }
    return "?";
}

inline const char* axis_unit(AxisKind k)
{
    switch (k) {
    case AxisKind::spacing_d: return "mm";
    case AxisKind::delta_phi: return "rad";
    case AxisKind::bias_field: return "MHz";
    case AxisKind::frequency: return "MHz";
    }
    return "";
}

struct SweepAxis
{
    AxisKind kind = AxisKind::frequency;
    std::vector<double> samples;

    void validate() const
    {
        if (samples.size() < 2) {
            throw ValidationError({std::string(axis_name(kind)) + " axis needs at least 2 samples"});
        }
        bool inc = true;
        bool dec = true;
        for (std::size_t i = 1; i < samples.size(); ++i) {
            inc = inc && samples[i] > samples[i - 1];
            dec = dec && samples[i] < samples[i - 1];
        }
        if (!(inc || dec)) {
            throw ValidationError({std::string(axis_name(kind)) + " axis must be strictly monotone"});
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }

    static SweepAxis linspace(AxisKind kind, double lo, double hi, std::size_t n)
    {
        SweepAxis a{kind, std::vector<double>(n)};
        for (std::size_t i = 0; i < n; ++i) {
            a.samples[i] = n > 1 ? lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1) : lo;
        }
        return a;
    }
};

enum class MapKind
{
    amplitude,
    group_delay,
    inverse_amplitude
};

inline const char* map_kind_name(MapKind k)
{
    switch (k) {
    case MapKind::amplitude: return "amplitude";
    case MapKind::group_delay: return "group_delay";
    case MapKind::inverse_amplitude: return "inverse_amplitude";
    }
    return "?";
}

// Row-major map over (axis1, axis2). Flagged cells hold NaN and are counted; nothing else is
// non-finite.
struct SweepMap
{
    SweepAxis axis1;
    SweepAxis axis2;
    MapKind kind = MapKind::amplitude;
    std::vector<double> values;
    std::vector<std::uint8_t> flags;

    SweepMap() = default;
    SweepMap(SweepAxis a1, SweepAxis a2, MapKind k)
        : axis1(std::move(a1)), axis2(std::move(a2)), kind(k), values(axis1.size() * axis2.size(), 0.0),
          flags(axis1.size() * axis2.size(), 0)
    {
    }

    [[nodiscard]] double at(std::size_t i, std::size_t j) const { return values[i * axis2.size() + j]; }
    [[nodiscard]] bool flagged(std::size_t i, std::size_t j) const { return flags[i * axis2.size() + j] != 0; }
    [[nodiscard]] std::size_t flagged_count() const
    {
        return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
    }
    [[nodiscard]] std::span<const double> row(std::size_t i) const
    {
        return {values.data() + i * axis2.size(), axis2.size()};
    }

    void set(std::size_t i, std::size_t j, double v)
    {
        const std::size_t k = i * axis2.size() + j;
        if (std::isfinite(v)) {
            values[k] = v;
            flags[k] = 0;
        } else {
            values[k] = std::numeric_limits<double>::quiet_NaN();
            flags[k] = 1;
        }
    }
};

struct SweepOptions
{
    unsigned jobs = 1;
    double dip_prominence_db = 3.0;
};

// Frequency span of +-10 linewidths around f_c with 2001 points.
inline SweepAxis default_frequency_axis(double linewidth_mhz)
{
    return SweepAxis::linspace(AxisKind::frequency, -10.0 * linewidth_mhz, 10.0 * linewidth_mhz, 2001);
}

inline SweepAxis default_phase_axis() { return SweepAxis::linspace(AxisKind::delta_phi, 0.0, 2.0 * kPi, 41); }

inline SweepAxis default_detuning_axis() { return SweepAxis::linspace(AxisKind::bias_field, -60.0, 60.0, 81); }

// Absolute frequencies (GHz) of a probe-detuning axis around f_c.
inline std::vector<double> absolute_grid(double f_c, const SweepAxis& detuning)
{
    std::vector<double> f(detuning.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = f_c + detuning.samples[i] / kMHzPerGHz;
    }
    return f;
}

namespace detail {

inline void require_axis(const SweepAxis& axis, AxisKind kind)
{
    axis.validate();
    if (axis.kind != kind) {
        throw ValidationError({std::string("expected a ") + axis_name(kind) + " axis, got " + axis_name(axis.kind)});
    }
}

template <class Eval>
Spectrum sample(std::span<const double> freq, Eval&& eval)
{
    Spectrum s;
    s.freq.assign(freq.begin(), freq.end());
    s.s21.resize(freq.size());
    for (std::size_t i = 0; i < freq.size(); ++i) {
        s.s21[i] = eval(freq[i]);
    }
    return s;
}

inline void add_noise(Spectrum& s, double sigma, std::uint64_t seed)
{
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw DomainError("noise sigma must be finite and non-negative");
    }
    s.noise_sigma = sigma;
    if (sigma == 0.0) {
        return;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    for (auto& v : s.s21) {
        const double re = normal(rng);
        const double im = normal(rng);
        v += cplx{re, im};
    }
}

// Splitting of a |S21| trace: distance between the two deepest dips, 0 when fewer than two.
inline double dip_splitting(std::span<const double> detuning, std::span<const cplx> s21, double prominence_db)
{
    const auto dips = deepest_two(transmission_dips(s21, prominence_db));
    if (dips.size() < 2) {
        return 0.0;
    }
    return detuning[dips[1].index] - detuning[dips[0].index];
}

} // namespace detail

// Forward model on the grid plus independent N(0, sigma^2) noise on the real and imaginary parts,
// deterministic per seed.
inline Spectrum synthesize_spectrum(const CoupledSystem& sys, std::span<const double> freq_ghz, double noise_sigma,
                                    std::uint64_t seed)
{
    const CoupledModel model(sys);
    Spectrum s = detail::sample(freq_ghz, [&](double f) { return model.s21(f); });
    detail::add_noise(s, noise_sigma, seed);
    return s;
}

inline Spectrum synthesize_spectrum(const CavityMode& cavity, std::span<const double> freq_ghz, double noise_sigma,
                                    std::uint64_t seed)
{
    Spectrum s = detail::sample(freq_ghz, [&](double f) { return bare_cavity_s21(f, cavity); });
    detail::add_noise(s, noise_sigma, seed);
    return s;
}

struct PhaseSweepResult
{
    SweepMap amplitude;    // |S21| over (delta_phi, frequency)
    SweepMap group_delay;  // ns
    std::vector<double> inverse_amplitude_at_fc;  // 1/|S21(f_c)| per phase, at the bare f_c
    std::vector<double> splitting;                // MHz, 0 when a single dip is resolved
    std::size_t flagged_cells = 0;
};

// Phase sweep with the magnon tuned to the bare cavity frequency.
inline PhaseSweepResult phase_sweep(CoupledSystem sys, const SweepAxis& phis, const SweepAxis& freqs,
                                    const SweepOptions& opt = {})
{
    detail::require_axis(phis, AxisKind::delta_phi);
    detail::require_axis(freqs, AxisKind::frequency);
    sys = with_field_detuning(sys, 0.0);
    const auto grid = absolute_grid(sys.cavity.f_c, freqs);

    PhaseSweepResult out;
    out.amplitude = SweepMap(phis, freqs, MapKind::amplitude);
    out.group_delay = SweepMap(phis, freqs, MapKind::group_delay);
    out.inverse_amplitude_at_fc.assign(phis.size(), 0.0);
    out.splitting.assign(phis.size(), 0.0);

    parallel_for(phis.size(), opt.jobs, [&](std::size_t i) {
        CoupledSystem s = sys;
        s.link.delta_phi = phis.samples[i];
        const CoupledModel model(s);
        Spectrum spec;
        spec.freq = grid;
        spec.s21.resize(grid.size());
        for (std::size_t j = 0; j < grid.size(); ++j) {
            try {
                spec.s21[j] = model.s21(grid[j]);
            } catch (const SingularityError&) {
                spec.s21[j] = {std::numeric_limits<double>::quiet_NaN(), 0.0};
            }
            out.amplitude.set(i, j, std::abs(spec.s21[j]));
        }
        const bool all_finite = std::all_of(spec.s21.begin(), spec.s21.end(), [](cplx v) {
            return std::isfinite(v.real()) && std::isfinite(v.imag());
        });
        if (all_finite) {
            const GroupDelay gd = group_delay(spec);
            for (std::size_t j = 0; j < grid.size(); ++j) {
                out.group_delay.set(i, j, gd.tau_ns[j]);
            }
            out.splitting[i] = detail::dip_splitting(freqs.samples, spec.s21, opt.dip_prominence_db);
        } else {
            for (std::size_t j = 0; j < grid.size(); ++j) {
                out.group_delay.set(i, j, std::numeric_limits<double>::quiet_NaN());
            }
        }
        out.inverse_amplitude_at_fc[i] = 1.0 / std::abs(model.s21_detuned(0.0));
    });
    out.flagged_cells = out.amplitude.flagged_count() + out.group_delay.flagged_count();
    return out;
}

struct FieldSweepResult
{
    SweepMap amplitude;  // |S21| over (bias_field detuning, frequency)
    std::vector<std::optional<double>> lower_branch;  // dip position per column, MHz
    std::vector<std::optional<double>> upper_branch;
    std::optional<double> separation_at_zero;  // branch separation in the column nearest Delta_m = 0
    std::optional<double> coupling_magnitude;  // |G| = separation / 2
    std::optional<double> cooperativity;
    std::size_t flagged_cells = 0;
};

// Field sweep at the configured phase. Dip branches are tracked across columns by
// nearest-neighbour continuity so that labels do not swap at the avoided crossing.
inline FieldSweepResult field_sweep(const CoupledSystem& sys, const SweepAxis& detunings, const SweepAxis& freqs,
                                    const SweepOptions& opt = {})
{
    detail::require_axis(detunings, AxisKind::bias_field);
    detail::require_axis(freqs, AxisKind::frequency);
    // Reject the whole sweep before evaluating anything.
    std::vector<CoupledSystem> systems;
    systems.reserve(detunings.size());
    for (double dm : detunings.samples) {
        systems.push_back(with_field_detuning(sys, dm));
    }
    const auto grid = absolute_grid(sys.cavity.f_c, freqs);

    FieldSweepResult out;
    out.amplitude = SweepMap(detunings, freqs, MapKind::amplitude);
    std::vector<std::vector<double>> dips(detunings.size());
    parallel_for(detunings.size(), opt.jobs, [&](std::size_t i) {
        const CoupledModel model(systems[i]);
        std::vector<cplx> col(grid.size());
        for (std::size_t j = 0; j < grid.size(); ++j) {
            try {
                col[j] = model.s21(grid[j]);
            } catch (const SingularityError&) {
                col[j] = {std::numeric_limits<double>::quiet_NaN(), 0.0};
            }
            out.amplitude.set(i, j, std::abs(col[j]));
        }
        for (const auto& d : deepest_two(transmission_dips(col, opt.dip_prominence_db))) {
            dips[i].push_back(freqs.samples[d.index]);
        }
    });
    out.flagged_cells = out.amplitude.flagged_count();

    out.lower_branch.assign(detunings.size(), std::nullopt);
    out.upper_branch.assign(detunings.size(), std::nullopt);
    std::optional<double> last_lo;
    std::optional<double> last_hi;
    for (std::size_t i = 0; i < detunings.size(); ++i) {
        const auto& d = dips[i];
        if (d.size() == 2) {
            out.lower_branch[i] = d[0];
            out.upper_branch[i] = d[1];
        } else if (d.size() == 1) {
            const double lo_dist = last_lo ? std::abs(d[0] - *last_lo) : std::numeric_limits<double>::infinity();
            const double hi_dist = last_hi ? std::abs(d[0] - *last_hi) : std::numeric_limits<double>::infinity();
            if (hi_dist < lo_dist) {
                out.upper_branch[i] = d[0];
            } else {
                out.lower_branch[i] = d[0];
            }
        }
        if (out.lower_branch[i]) {
            last_lo = out.lower_branch[i];
        }
        if (out.upper_branch[i]) {
            last_hi = out.upper_branch[i];
        }
    }

    std::size_t zero = 0;
    for (std::size_t i = 1; i < detunings.size(); ++i) {
        if (std::abs(detunings.samples[i]) < std::abs(detunings.samples[zero])) {
            zero = i;
        }
    }
    if (out.lower_branch[zero] && out.upper_branch[zero]) {
        out.separation_at_zero = *out.upper_branch[zero] - *out.lower_branch[zero];
        out.coupling_magnitude = *out.separation_at_zero / 2.0;
        const double alpha = magnon_damping(sys.magnon);
        const double beta = cavity_damping(sys.cavity);
        if (alpha != 0.0 && beta != 0.0) {
            out.cooperativity = cooperativity({cplx{*out.coupling_magnitude, 0.0}}, alpha, beta);
        }
    }
    return out;
}

struct SpacingSweepResult
{
    SweepMap amplitude;  // |S21| over (spacing_d, frequency detuning from f_c(d))
    std::vector<double> beta;           // MHz
    std::vector<double> s21_at_fc;      // |S21(f_c(d))|
    std::vector<double> tau_at_fc;      // ns, NaN where singular
    std::vector<std::uint8_t> tau_flag; // 1 at exact critical coupling
    CriticalSearch critical;
    std::size_t flagged_cells = 0;
};

// Spacing sweep over a calibration table (interpolation only). tau_g(f_c) is evaluated on a local
// 5-point grid sized to the narrower of |beta| and the loaded linewidth.
inline SpacingSweepResult spacing_sweep(const CalibrationTable& table, const SweepAxis& spacings,
                                        const SweepAxis& freqs, const SweepOptions& opt = {})
{
    detail::require_axis(spacings, AxisKind::spacing_d);
    detail::require_axis(freqs, AxisKind::frequency);
    const CalibrationCurve curve(table);
    for (double d : spacings.samples) {
        if (d < curve.d_min() || d > curve.d_max()) {
            throw RangeError("spacing sweep requests d = " + std::to_string(d) + " mm outside the calibrated range [" +
                             std::to_string(curve.d_min()) + ", " + std::to_string(curve.d_max()) + "] mm");
        }
    }

    SpacingSweepResult out;
    out.amplitude = SweepMap(spacings, freqs, MapKind::amplitude);
    const std::size_t n = spacings.size();
    out.beta.assign(n, 0.0);
    out.s21_at_fc.assign(n, 0.0);
    out.tau_at_fc.assign(n, 0.0);
    out.tau_flag.assign(n, 0);

    parallel_for(n, opt.jobs, [&](std::size_t i) {
        const CavityMode cav = curve.cavity_at(spacings.samples[i]);
        for (std::size_t j = 0; j < freqs.size(); ++j) {
            out.amplitude.set(i, j, std::abs(bare_cavity_s21(cav.f_c + freqs.samples[j] / kMHzPerGHz, cav)));
        }
        const double beta = cavity_damping(cav);
        out.beta[i] = beta;
        out.s21_at_fc[i] = std::abs(bare_cavity_s21(cav.f_c, cav));
        const double width = std::min(std::abs(beta) > 0.0 ? std::abs(beta) : cavity_total_damping(cav),
                                      std::max(cavity_total_damping(cav), 1e-12));
        const double h = width / 100.0 / kMHzPerGHz;
        std::vector<double> local{cav.f_c - 2 * h, cav.f_c - h, cav.f_c, cav.f_c + h, cav.f_c + 2 * h};
        const Spectrum spec = detail::sample(local, [&](double f) { return bare_cavity_s21(f, cav); });
        const GroupDelay gd = group_delay(spec);
        if (gd.valid[2] != 0) {
            out.tau_at_fc[i] = gd.tau_ns[2];
        } else {
            out.tau_at_fc[i] = std::numeric_limits<double>::quiet_NaN();
            out.tau_flag[i] = 1;
        }
    });
    out.critical = find_critical_spacing(curve.table());
    out.flagged_cells = out.amplitude.flagged_count() +
                        static_cast<std::size_t>(std::count(out.tau_flag.begin(), out.tau_flag.end(), std::uint8_t{1}));
    return out;
}

} // namespace cavmag
