#pragma once

// Inverse pipeline: lineshape fits, bare-cavity rate extraction, two-resonance normal modes,
// coupling versus phase, and the anomaly-parameter fit.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "calibration.hpp"
#include "errors.hpp"
#include "extrema.hpp"
#include "levenberg_marquardt.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "types.hpp"

namespace cavmag {

struct Estimate
{
    double value = 0.0;
    double std_error = 0.0;
};

struct FitReport
{
    std::map<std::string, Estimate> parameters;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;  // root-mean-square misfit
    double gradient_norm = 0.0;
    std::string stop_reason;
    std::vector<std::string> warnings;

    [[nodiscard]] double value(const std::string& name) const { return parameters.at(name).value; }
    [[nodiscard]] double std_error(const std::string& name) const { return parameters.at(name).std_error; }
};

struct LorentzianFit
{
    double center = 0.0;     // GHz
    double hwhm = 0.0;       // MHz
    double amplitude = 0.0;  // peak height of 1/|S21|^2 above the baseline
    double baseline = 0.0;
    double residual = 0.0;
    bool degenerate = false;  // linewidth below the grid resolution
    FitReport report;
};

struct BareCavityFit
{
    double f_c = 0.0;  // GHz
    std::optional<double> kappa_l;
    std::optional<double> kappa_r;
    double beta = 0.0;       // signed with phase data, |beta| without
    double kappa_sum = 0.0;  // kappa_L + kappa_R
    bool phase_used = true;
    FitReport report;
};

struct TwoResonanceFit
{
    ComplexModePair modes;  // resonances of 1/|S21| (zeros of S21), absolute MHz
    ComplexModePair poles;  // background poles of the rational model, absolute MHz
    cplx scale{1.0, 0.0};
    bool fallback = false;  // single-resonance fallback was used; modes.degenerate is set
    FitReport report;
};

struct FitOptions
{
    LmOptions lm;
    double dip_prominence_db = 3.0;
};

namespace detail {

inline std::vector<double> detunings_mhz(const Spectrum& s, double f_ref)
{
    std::vector<double> x(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        x[i] = (s.freq[i] - f_ref) * kMHzPerGHz;
    }
    return x;
}

inline double min_step_mhz(const Spectrum& s)
{
    double h = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < s.size(); ++i) {
        h = std::min(h, (s.freq[i] - s.freq[i - 1]) * kMHzPerGHz);
    }
    return h;
}

inline std::size_t argmin_magnitude(const Spectrum& s)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (std::abs(s.s21[i]) < std::abs(s.s21[best])) {
            best = i;
        }
    }
    return best;
}

inline std::size_t smoothing_window(const Spectrum& s)
{
    return s.noise_sigma.value_or(0.0) > 0.0 || s.provenance == Provenance::measured ? 5 : 1;
}

inline void fill_report(FitReport& rep, const LmResult& lm)
{
    rep.iterations = lm.iterations;
    rep.converged = lm.converged;
    rep.residual = lm.rms;
    rep.gradient_norm = lm.gradient_norm;
    rep.stop_reason = lm.stop_reason;
}

inline double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Roots of a c2 t^2 + c1 t + c0 with c2 != 0.
inline std::pair<cplx, cplx> quadratic_roots(cplx c2, cplx c1, cplx c0)
{
    const cplx b = c1 / c2;
    const cplx c = c0 / c2;
    const cplx disc = std::sqrt(b * b / 4.0 - c);
    // Avoid cancellation: pick the larger-magnitude root first.
    const cplx r1 = std::abs(-b / 2.0 + disc) >= std::abs(-b / 2.0 - disc) ? -b / 2.0 + disc : -b / 2.0 - disc;
    const cplx r2 = r1 != cplx{0.0, 0.0} ? c / r1 : -b - r1;
    return {r1, r2};
}

} // namespace detail

// Fit baseline + A w^2 / ((f - f_c)^2 + w^2) to 1/|S21|^2. For the bare cavity this profile is
// exact with w = |beta| and baseline 1.
inline LorentzianFit fit_inverse_lorentzian(const Spectrum& spectrum, const FitOptions& opt = {})
{
    spectrum.validate();
    const std::size_t n = spectrum.size();
    if (n < 5) {
        throw DomainError("inverse-Lorentzian fit needs at least 5 samples");
    }
    const auto dips =
        transmission_dips(spectrum.s21, opt.dip_prominence_db, detail::smoothing_window(spectrum));
    if (dips.size() > 1) {
        throw AmbiguousLineshapeError("spectrum shows " + std::to_string(dips.size()) +
                                      " transmission dips; use fit_two_resonances for multi-resonance lineshapes");
    }

    const std::size_t i0 = detail::argmin_magnitude(spectrum);
    const double f_ref = spectrum.freq[i0];
    const double step = detail::min_step_mhz(spectrum);
    LorentzianFit out;
    out.center = f_ref;

    if (std::abs(spectrum.s21[i0]) == 0.0) {
        // Exact zero on the grid: the linewidth is below anything the grid can resolve.
        out.hwhm = step / 2.0;
        out.degenerate = true;
        out.amplitude = std::numeric_limits<double>::infinity();
        out.report.warnings.emplace_back("transmission vanishes on the grid; linewidth below resolution");
        return out;
    }

    const auto x = detail::detunings_mhz(spectrum, f_ref);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = 1.0 / std::norm(spectrum.s21[i]);
    }

    const std::size_t edge = std::max<std::size_t>(1, n / 20);
    std::vector<double> edges(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(edge));
    edges.insert(edges.end(), y.end() - static_cast<std::ptrdiff_t>(edge), y.end());
    const double base0 = detail::median(edges);
    const double peak0 = y[i0] - base0;
    const double half = base0 + peak0 / 2.0;
    std::size_t left = i0;
    while (left > 0 && y[left - 1] >= half) {
        --left;
    }
    std::size_t right = i0;
    while (right + 1 < n && y[right + 1] >= half) {
        ++right;
    }
    const double lo = left > 0 ? 0.5 * (x[left] + x[left - 1]) : x[left];
    const double hi = right + 1 < n ? 0.5 * (x[right] + x[right + 1]) : x[right];
    const double w0 = std::max(0.5 * (hi - lo), step / 2.0);

    // Additive noise on S21 maps to noise on 1/|S21|^2 that scales as |S21|^-3 = model^1.5, so each
    // residual is divided by that to keep the linearised standard errors honest near the dip.
    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        const double w2 = p[1] * p[1];
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x[i] - p[0];
            const double model = p[3] + p[2] * w2 / (d * d + w2);
            const double scale = std::pow(std::max(std::abs(model), 1e-12), 1.5);
            r[static_cast<Eigen::Index>(i)] = (model - y[i]) / scale;
        }
        return r;
    };
    const double yscale = std::max(std::abs(peak0), 1.0);
    const std::vector<LmParameter> params{
        {"center", 0.0, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), step},
        {"hwhm", w0, 1e-9 * step, std::numeric_limits<double>::infinity(), w0},
        {"amplitude", peak0, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), yscale},
        {"baseline", base0, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 1.0},
    };
    const LmResult lm = levenberg_marquardt(residual, params, opt.lm);
    detail::fill_report(out.report, lm);
    out.center = f_ref + lm.x[0] / kMHzPerGHz;
    out.hwhm = std::abs(lm.x[1]);
    out.amplitude = lm.x[2];
    out.baseline = lm.x[3];
    out.residual = lm.rms;
    out.degenerate = out.hwhm < step;
    if (out.degenerate) {
        out.report.warnings.emplace_back("fitted linewidth is below the grid resolution");
    }
    out.report.parameters["center"] = {out.center, lm.std_error[0] / kMHzPerGHz};
    out.report.parameters["hwhm"] = {out.hwhm, lm.std_error[1]};
    out.report.parameters["amplitude"] = {out.amplitude, lm.std_error[2]};
    out.report.parameters["baseline"] = {out.baseline, lm.std_error[3]};
    return out;
}

// Damped least squares of the bare-cavity transmission with beta0 fixed. With phase data the
// complex residual separates kappa_L from kappa_R; amplitude-only data identifies only |beta| and
// kappa_L + kappa_R, which is what the result then reports.
inline BareCavityFit fit_bare_cavity(const Spectrum& spectrum, double beta0, const FitOptions& opt = {})
{
    spectrum.validate();
    if (!std::isfinite(beta0) || beta0 < 0.0) {
        throw DomainError("beta0 must be a finite non-negative rate");
    }
    const std::size_t n = spectrum.size();
    if (n < 5) {
        throw DomainError("bare-cavity fit needs at least 5 samples");
    }
    const std::size_t i0 = detail::argmin_magnitude(spectrum);
    const double f_ref = spectrum.freq[i0];
    const auto x = detail::detunings_mhz(spectrum, f_ref);
    const double step = detail::min_step_mhz(spectrum);
    constexpr double inf = std::numeric_limits<double>::infinity();
    BareCavityFit out;

    if (!spectrum.has_phase) {
        out.phase_used = false;
        const LorentzianFit seed = fit_inverse_lorentzian(spectrum, opt);
        const double b0 = std::max(seed.hwhm, step / 2.0);
        const double g0 = std::max(b0 * std::sqrt(std::max(1.0 + seed.amplitude / std::max(seed.baseline, 1e-12), 1.0)),
                                   b0 * (1.0 + 1e-6));
        auto residual = [&](const Eigen::VectorXd& p) {
            Eigen::VectorXd r(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) {
                const double d = x[i] - p[0];
                const double model = std::sqrt((d * d + p[1] * p[1]) / (d * d + p[2] * p[2]));
                r[static_cast<Eigen::Index>(i)] = model - std::abs(spectrum.s21[i]);
            }
            return r;
        };
        const std::vector<LmParameter> params{
            {"center", (seed.center - f_ref) * kMHzPerGHz, -inf, inf, step},
            {"abs_beta", b0, 0.0, inf, b0},
            {"gamma_total", g0, 0.0, inf, g0},
        };
        const LmResult lm = levenberg_marquardt(residual, params, opt.lm);
        detail::fill_report(out.report, lm);
        out.f_c = f_ref + lm.x[0] / kMHzPerGHz;
        out.beta = std::abs(lm.x[1]);
        out.kappa_sum = 2.0 * (lm.x[2] - beta0);
        out.report.parameters["f_c"] = {out.f_c, lm.std_error[0] / kMHzPerGHz};
        out.report.parameters["abs_beta"] = {out.beta, lm.std_error[1]};
        out.report.parameters["kappa_sum"] = {out.kappa_sum, 2.0 * lm.std_error[2]};
        out.report.warnings.emplace_back(
            "amplitude-only data: kappa_cL and kappa_cR are not separately identifiable; reporting |beta| and "
            "kappa_cL + kappa_cR");
        return out;
    }

    // Linear seed from S (x - u + i Gamma) = x - u + i beta, exact for noiseless data.
    Eigen::MatrixXd a(2 * n, 3);
    Eigen::VectorXd b(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const cplx s = spectrum.s21[i];
        const auto r = static_cast<Eigen::Index>(2 * i);
        a.row(r) << s.real() - 1.0, s.imag(), 0.0;
        b[r] = (s.real() - 1.0) * x[i];
        a.row(r + 1) << s.imag(), -s.real(), 1.0;
        b[r + 1] = s.imag() * x[i];
    }
    const Eigen::Vector3d lin = a.colPivHouseholderQr().solve(b);
    double u0 = std::isfinite(lin[0]) ? lin[0] : 0.0;
    double gamma0 = std::isfinite(lin[1]) ? std::abs(lin[1]) : 1.0;
    double beta_seed = std::isfinite(lin[2]) ? lin[2] : 0.0;
    const double kl0 = std::max((beta_seed - beta0) + (gamma0 - beta0), 1e-3);
    const double kr0 = std::max(gamma0 - beta_seed, 1e-3);
    if (std::abs(u0) > std::abs(x.front()) + std::abs(x.back())) {
        u0 = 0.0;
    }

    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(2 * n));
        const double beta = beta0 + (p[1] - p[2]) / 2.0;
        const double total = beta0 + (p[1] + p[2]) / 2.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x[i] - p[0];
            const cplx model = cplx{d, beta} / cplx{d, total};
            const cplx diff = model - spectrum.s21[i];
            r[static_cast<Eigen::Index>(2 * i)] = diff.real();
            r[static_cast<Eigen::Index>(2 * i + 1)] = diff.imag();
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p, const Eigen::VectorXd&) {
        Eigen::MatrixXd j(static_cast<Eigen::Index>(2 * n), 3);
        const double beta = beta0 + (p[1] - p[2]) / 2.0;
        const double total = beta0 + (p[1] + p[2]) / 2.0;
        const cplx i1{0.0, 1.0};
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x[i] - p[0];
            const cplx den{d, total};
            const cplx num{d, beta};
            const cplx ds_dx = i1 * (total - beta) / (den * den);
            const cplx ds_dbeta = i1 / den;
            const cplx ds_dtotal = -i1 * num / (den * den);
            const cplx du = -ds_dx;
            const cplx dkl = 0.5 * ds_dbeta + 0.5 * ds_dtotal;
            const cplx dkr = -0.5 * ds_dbeta + 0.5 * ds_dtotal;
            const auto r = static_cast<Eigen::Index>(2 * i);
            j.row(r) << du.real(), dkl.real(), dkr.real();
            j.row(r + 1) << du.imag(), dkl.imag(), dkr.imag();
        }
        return j;
    };
    const std::vector<LmParameter> params{
        {"center", u0, -inf, inf, step},
        {"kappa_l", kl0, 0.0, inf, std::max(kl0, 1.0)},
        {"kappa_r", kr0, 0.0, inf, std::max(kr0, 1.0)},
    };
    const LmResult lm = levenberg_marquardt(residual, jacobian, params, opt.lm);
    detail::fill_report(out.report, lm);
    out.f_c = f_ref + lm.x[0] / kMHzPerGHz;
    out.kappa_l = lm.x[1];
    out.kappa_r = lm.x[2];
    out.beta = effective_damping(beta0, lm.x[1], lm.x[2]);
    out.kappa_sum = lm.x[1] + lm.x[2];
    const auto& cov = lm.covariance;
    const double var_beta = 0.25 * (cov(1, 1) + cov(2, 2) - 2.0 * cov(1, 2));
    out.report.parameters["f_c"] = {out.f_c, lm.std_error[0] / kMHzPerGHz};
    out.report.parameters["kappa_l"] = {lm.x[1], lm.std_error[1]};
    out.report.parameters["kappa_r"] = {lm.x[2], lm.std_error[2]};
    out.report.parameters["beta"] = {out.beta, std::sqrt(std::max(var_beta, 0.0))};
    return out;
}

namespace detail {

// Single-resonance stand-in used when two modes cannot be resolved.
inline TwoResonanceFit single_resonance_fallback(const Spectrum& spectrum, const FitOptions& opt, std::string why)
{
    TwoResonanceFit out;
    out.fallback = true;
    cplx mode;
    try {
        const LorentzianFit single = fit_inverse_lorentzian(spectrum, opt);
        mode = {single.center * kMHzPerGHz, -single.hwhm};
        out.report = single.report;
    } catch (const AmbiguousLineshapeError&) {
        const std::size_t i0 = argmin_magnitude(spectrum);
        mode = {spectrum.freq[i0] * kMHzPerGHz, -min_step_mhz(spectrum)};
    }
    out.modes = {mode, mode, true};
    out.poles = out.modes;
    out.report.warnings.push_back(std::move(why));
    return out;
}

// Quadratic-over-quadratic model C (x - z1)(x - z2) / ((x - p1)(x - p2)) in MHz detuning.
struct RationalModel
{
    cplx z1, z2, p1, p2, c;

    [[nodiscard]] cplx operator()(double x) const { return c * (x - z1) * (x - z2) / ((x - p1) * (x - p2)); }

    static RationalModel from(const Eigen::VectorXd& p)
    {
        return {{p[0], p[1]}, {p[2], p[3]}, {p[4], p[5]}, {p[6], p[7]}, {p[8], p[9]}};
    }
};

// Linearised (Sanathanan-Koerner) fit of S (t^2 + b1 t + b0) = c2 t^2 + c1 t + c0, t = x / s.
inline std::optional<RationalModel> rational_seed_complex(const std::vector<double>& x, const std::vector<cplx>& s,
                                                          double scale)
{
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::VectorXd weight = Eigen::VectorXd::Ones(n);
    Eigen::Matrix<cplx, 5, 1> coef;
    for (int pass = 0; pass < 8; ++pass) {
        Eigen::MatrixXcd a(n, 5);
        Eigen::VectorXcd rhs(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = x[static_cast<std::size_t>(i)] / scale;
            const cplx si = s[static_cast<std::size_t>(i)];
            const double w = weight[i];
            a(i, 0) = w * t * t;
            a(i, 1) = w * t;
            a(i, 2) = w;
            a(i, 3) = -w * si * t;
            a(i, 4) = -w * si;
            rhs[i] = w * si * t * t;
        }
        coef = a.colPivHouseholderQr().solve(rhs);
        if (!coef.allFinite()) {
            return std::nullopt;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = x[static_cast<std::size_t>(i)] / scale;
            const double den = std::abs(t * t + coef[3] * t + coef[4]);
            weight[i] = den > 0.0 ? 1.0 / den : 1.0;
        }
    }
    if (std::abs(coef[0]) == 0.0) {
        return std::nullopt;
    }
    const auto [z1, z2] = quadratic_roots(coef[0], coef[1], coef[2]);
    const auto [p1, p2] = quadratic_roots(cplx{1.0, 0.0}, coef[3], coef[4]);
    return RationalModel{z1 * scale, z2 * scale, p1 * scale, p2 * scale, coef[0]};
}

// Amplitude-only seed: |S|^2 Q(t) = P(t) with real quartics, Q monic. The zeros come in conjugate
// pairs; the lower-half-plane member of each is kept.
inline std::optional<RationalModel> rational_seed_amplitude(const std::vector<double>& x, const std::vector<cplx>& s,
                                                            double scale)
{
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::VectorXd weight = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd coef(9);
    for (int pass = 0; pass < 8; ++pass) {
        Eigen::MatrixXd a(n, 9);
        Eigen::VectorXd rhs(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = x[static_cast<std::size_t>(i)] / scale;
            const double y = std::norm(s[static_cast<std::size_t>(i)]);
            const double w = weight[i];
            double tp = 1.0;
            for (int k = 0; k <= 4; ++k) {
                a(i, 4 - k) = w * tp;  // p4..p0
                if (k < 4) {
                    a(i, 8 - k) = -w * y * tp;  // q3..q0
                }
                tp *= t;
            }
            rhs[i] = w * y * tp;
        }
        coef = a.colPivHouseholderQr().solve(rhs);
        if (!coef.allFinite()) {
            return std::nullopt;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = x[static_cast<std::size_t>(i)] / scale;
            const double q = (((t + coef[5]) * t + coef[6]) * t + coef[7]) * t + coef[8];
            weight[i] = q != 0.0 ? 1.0 / std::abs(q) : 1.0;
        }
    }
    auto lower_pair = [](const Eigen::VectorXd& monic_tail) -> std::optional<std::pair<cplx, cplx>> {
        Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
        for (int k = 0; k < 4; ++k) {
            companion(0, k) = -monic_tail[k];
        }
        companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
        const Eigen::Vector4cd roots = companion.eigenvalues();
        std::vector<cplx> r(roots.data(), roots.data() + 4);
        std::sort(r.begin(), r.end(), [](cplx a, cplx b) { return a.imag() < b.imag(); });
        return std::pair{r[0], r[1]};
    };
    if (coef[0] == 0.0) {
        return std::nullopt;
    }
    Eigen::VectorXd p_tail(4);
    p_tail << coef[1] / coef[0], coef[2] / coef[0], coef[3] / coef[0], coef[4] / coef[0];
    Eigen::VectorXd q_tail(4);
    q_tail << coef[5], coef[6], coef[7], coef[8];
    const auto zeros = lower_pair(p_tail);
    const auto poles = lower_pair(q_tail);
    if (!zeros || !poles) {
        return std::nullopt;
    }
    return RationalModel{zeros->first * scale, zeros->second * scale, poles->first * scale, poles->second * scale,
                         cplx{std::sqrt(std::abs(coef[0])), 0.0}};
}

} // namespace detail

struct TwoResonanceOptions
{
    FitOptions fit;
    bool force_two_modes = false;  // fit two modes even when only one dip is visible
};

// Normal modes from a two-resonance lineshape. The quadratic-over-quadratic form mirrors the
// coupled transmission; its numerator zeros are the resonances of 1/|S21|.
inline TwoResonanceFit fit_two_resonances(const Spectrum& spectrum, const TwoResonanceOptions& opt = {})
{
    spectrum.validate();
    const std::size_t n = spectrum.size();
    if (n < 12) {
        throw DomainError("two-resonance fit needs at least 12 samples");
    }
    const auto dips =
        transmission_dips(spectrum.s21, opt.fit.dip_prominence_db, detail::smoothing_window(spectrum));
    if (!opt.force_two_modes && dips.size() < 2) {
        return detail::single_resonance_fallback(spectrum, opt.fit, "only one transmission dip is resolvable");
    }

    const std::size_t i0 = detail::argmin_magnitude(spectrum);
    const double f_ref = spectrum.freq[i0];
    const auto x = detail::detunings_mhz(spectrum, f_ref);
    const double scale = std::max(std::abs(x.front()), std::abs(x.back()));
    const double step = detail::min_step_mhz(spectrum);

    const auto seed = spectrum.has_phase ? detail::rational_seed_complex(x, spectrum.s21, scale)
                                         : detail::rational_seed_amplitude(x, spectrum.s21, scale);
    if (!seed) {
        return detail::single_resonance_fallback(spectrum, opt.fit, "rational lineshape seed failed");
    }

    Eigen::VectorXd p0(10);
    p0 << seed->z1.real(), seed->z1.imag(), seed->z2.real(), seed->z2.imag(), seed->p1.real(), seed->p1.imag(),
        seed->p2.real(), seed->p2.imag(), seed->c.real(), seed->c.imag();
    constexpr double inf = std::numeric_limits<double>::infinity();
    const char* names[] = {"z1_re", "z1_im", "z2_re", "z2_im", "p1_re", "p1_im", "p2_re", "p2_im", "c_re", "c_im"};
    std::vector<LmParameter> params;
    for (int k = 0; k < 10; ++k) {
        LmParameter p{names[k], p0[k], -inf, inf, k < 8 ? std::max(step, 1e-3 * scale) : 1.0};
        if (!spectrum.has_phase && (k == 1 || k == 3 || k == 5 || k == 7)) {
            p.upper = 0.0;  // lower-half-plane representatives
            p.initial = std::min(p.initial, 0.0);
        }
        if (!spectrum.has_phase && k == 9) {
            p.lower = p.upper = 0.0;
            p.initial = 0.0;
        }
        params.push_back(p);
    }

    Eigen::VectorXd lm_x;
    LmResult lm;
    if (spectrum.has_phase) {
        auto residual = [&](const Eigen::VectorXd& p) {
            const auto model = detail::RationalModel::from(p);
            Eigen::VectorXd r(static_cast<Eigen::Index>(2 * n));
            for (std::size_t i = 0; i < n; ++i) {
                const cplx d = model(x[i]) - spectrum.s21[i];
                r[static_cast<Eigen::Index>(2 * i)] = d.real();
                r[static_cast<Eigen::Index>(2 * i + 1)] = d.imag();
            }
            return r;
        };
        lm = levenberg_marquardt(residual, params, opt.fit.lm);
    } else {
        auto residual = [&](const Eigen::VectorXd& p) {
            const auto model = detail::RationalModel::from(p);
            Eigen::VectorXd r(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) {
                r[static_cast<Eigen::Index>(i)] = std::abs(model(x[i])) - std::abs(spectrum.s21[i]);
            }
            return r;
        };
        lm = levenberg_marquardt(residual, params, opt.fit.lm);
    }

    const auto model = detail::RationalModel::from(lm.x);
    const bool finite = lm.x.allFinite();
    if (!finite || !lm.converged) {
        return detail::single_resonance_fallback(spectrum, opt.fit,
                                                 "two-resonance fit did not converge: " + lm.stop_reason);
    }
    if (std::abs(model.z1 - model.z2) < step) {
        return detail::single_resonance_fallback(spectrum, opt.fit, "the two resonances merge below grid resolution");
    }

    TwoResonanceFit out;
    const cplx offset{f_ref * kMHzPerGHz, 0.0};
    out.modes = ComplexModePair::ordered(model.z1 + offset, model.z2 + offset);
    out.poles = ComplexModePair::ordered(model.p1 + offset, model.p2 + offset);
    out.scale = model.c;
    detail::fill_report(out.report, lm);
    // Standard errors follow the parameters into the ordered pair.
    const bool swapped = out.modes.plus != model.z1 + offset;
    const Eigen::Index ip = swapped ? 2 : 0;
    const Eigen::Index im = swapped ? 0 : 2;
    out.report.parameters["omega_plus"] = {out.modes.plus.real() / kMHzPerGHz, lm.std_error[ip] / kMHzPerGHz};
    out.report.parameters["delta_plus"] = {-out.modes.plus.imag(), lm.std_error[ip + 1]};
    out.report.parameters["omega_minus"] = {out.modes.minus.real() / kMHzPerGHz, lm.std_error[im] / kMHzPerGHz};
    out.report.parameters["delta_minus"] = {-out.modes.minus.imag(), lm.std_error[im + 1]};
    return out;
}

struct PhaseSpectrum
{
    double phi = 0.0;  // rad
    Spectrum spectrum;
};

struct CouplingPoint
{
    double phi = 0.0;
    std::optional<CouplingResult> coupling;  // empty when the spectrum could not be fitted
    ComplexModePair modes;
    std::string error;
};

// Coupling strength per phase setting: two-resonance fit, then the coupling formula with the
// given uncoupled references (normally omega_c - i beta, omega_m - i alpha). Failures become gaps.
inline std::vector<CouplingPoint> extract_coupling_vs_phase(const std::vector<PhaseSpectrum>& dataset,
                                                            cplx cavity_tilde, cplx magnon_tilde, unsigned jobs = 1,
                                                            TwoResonanceOptions opt = {})
{
    opt.force_two_modes = true;
    std::vector<CouplingPoint> out(dataset.size());
    parallel_for(dataset.size(), jobs, [&](std::size_t i) {
        auto& point = out[i];
        point.phi = dataset[i].phi;
        try {
            const TwoResonanceFit fit = fit_two_resonances(dataset[i].spectrum, opt);
            point.modes = fit.modes;
            if (fit.fallback) {
                point.error = fit.report.warnings.empty() ? "fallback" : fit.report.warnings.back();
                return;
            }
            point.coupling = coupling_from_modes(fit.modes, cavity_tilde, magnon_tilde);
        } catch (const std::exception& e) {
            point.error = e.what();
        }
    });
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.phi < b.phi; });
    return out;
}

struct AnomalyObservation
{
    double delta_phi = 0.0;       // phase-shifter setting, rad
    double field_detuning = 0.0;  // Delta_m, MHz
    Spectrum spectrum;
};

struct AnomalyFit
{
    double eta = 1.0;
    double delta = 1.0;
    FitReport report;
};

// Two-parameter fit of (eta, delta) against the complex coupled transmission over a dataset,
// with every other parameter fixed by `sys_template`. eta is first compared on {1, 2}, then
// refined continuously together with delta in [0, 1].
inline AnomalyFit fit_anomaly_params(const std::vector<AnomalyObservation>& dataset, const CoupledSystem& sys_template,
                                     const FitOptions& opt = {})
{
    std::set<double> phis;
    for (const auto& obs : dataset) {
        obs.spectrum.validate();
        if (!obs.spectrum.has_phase) {
            throw IdentifiabilityError("anomaly fit needs complex spectra");
        }
        phis.insert(obs.delta_phi);
    }
    if (phis.size() < 2 || *phis.rbegin() - *phis.begin() < kPi) {
        throw IdentifiabilityError("anomaly fit needs phase coverage of at least half a period (pi rad) over >= 2 "
                                   "distinct settings; dataset spans " +
                                   std::to_string(phis.empty() ? 0.0 : *phis.rbegin() - *phis.begin()) + " rad");
    }

    std::size_t total = 0;
    for (const auto& obs : dataset) {
        total += obs.spectrum.size();
    }
    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(2 * total));
        Eigen::Index k = 0;
        for (const auto& obs : dataset) {
            CoupledSystem sys = with_field_detuning(sys_template, obs.field_detuning);
            sys.link.delta_phi = obs.delta_phi;
            sys.anomaly = {p[0], std::clamp(p[1], 0.0, 1.0)};
            const CoupledModel model(sys);
            for (std::size_t i = 0; i < obs.spectrum.size(); ++i) {
                const cplx d = model.s21(obs.spectrum.freq[i]) - obs.spectrum.s21[i];
                r[k++] = d.real();
                r[k++] = d.imag();
            }
        }
        return r;
    };

    struct Candidate
    {
        double eta;
        double delta;
        double cost;
    };
    std::vector<Candidate> coarse;
    for (double eta : {1.0, 2.0}) {
        Candidate best{eta, 1.0, std::numeric_limits<double>::infinity()};
        for (double delta : {0.5, 0.9, 0.99, 0.995, 0.999, 1.0}) {
            Eigen::Vector2d p(eta, delta);
            const double c = residual(p).squaredNorm();
            if (c < best.cost) {
                best = {eta, delta, c};
            }
        }
        coarse.push_back(best);
    }
    const double c1 = coarse[0].cost;
    const double c2 = coarse[1].cost;
    if (std::abs(c1 - c2) <= 1e-12 * std::max({c1, c2, 1e-300})) {
        throw IdentifiabilityError("objective is flat in eta; the dataset does not constrain the phase period");
    }

    std::optional<LmResult> best;
    for (const auto& cand : coarse) {
        const std::vector<LmParameter> params{
            {"eta", cand.eta, 0.25, 8.0, 1.0},
            {"delta", cand.delta, 0.0, 1.0, 1.0},
        };
        LmResult lm = levenberg_marquardt(residual, params, opt.lm);
        if (!best || lm.cost < best->cost) {
            best = std::move(lm);
        }
    }

    AnomalyFit out;
    out.eta = best->x[0];
    out.delta = best->x[1];
    detail::fill_report(out.report, *best);
    out.report.parameters["eta"] = {out.eta, best->std_error[0]};
    out.report.parameters["delta"] = {out.delta, best->std_error[1]};
    return out;
}

} // namespace cavmag
