#pragma once

// Forward model: bare-cavity and coupled transmission, effective dampings, the equation-of-motion
// drift matrix, its normal modes, the transmission poles/zeros and the complex coupling algebra.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "errors.hpp"
#include "types.hpp"

namespace cavmag {

using Matrix2c = std::array<std::array<cplx, 2>, 2>;

namespace detail {

inline void require_finite(double value, const char* name)
{
    if (!std::isfinite(value)) {
        throw DomainError(std::string(name) + " must be finite");
    }
}

inline void require_rate(double value, const char* name, std::vector<std::string>& problems)
{
    if (!std::isfinite(value) || value < 0.0) {
        problems.push_back(std::string(name) + " must be a finite non-negative rate (got " + std::to_string(value) + ")");
    }
}

inline cplx principal_branch(cplx g)
{
    if (g.real() < 0.0 || (g.real() == 0.0 && g.imag() < 0.0)) {
        return -g;
    }
    return g;
}

} // namespace detail

inline void validate(const CavityMode& cavity)
{
    std::vector<std::string> problems;
    if (!std::isfinite(cavity.f_c) || cavity.f_c <= 0.0) {
        problems.push_back("cavity.f_c must be a positive frequency");
    }
    detail::require_rate(cavity.beta0, "cavity.beta0", problems);
    detail::require_rate(cavity.kappa_l, "cavity.kappa_l", problems);
    detail::require_rate(cavity.kappa_r, "cavity.kappa_r", problems);
    if (!problems.empty()) {
        throw ValidationError(std::move(problems));
    }
}

inline void validate(const MagnonMode& magnon)
{
    std::vector<std::string> problems;
    if (!std::isfinite(magnon.gamma_e) || magnon.gamma_e <= 0.0) {
        problems.push_back("magnon.gamma_e must be positive");
    }
    detail::require_rate(magnon.alpha0, "magnon.alpha0", problems);
    detail::require_rate(magnon.kappa_l, "magnon.kappa_l", problems);
    detail::require_rate(magnon.kappa_r, "magnon.kappa_r", problems);
    if (!problems.empty()) {
        throw ValidationError(std::move(problems));
    }
}

inline void validate(const AnomalyParams& anomaly)
{
    std::vector<std::string> problems;
    if (!std::isfinite(anomaly.eta) || anomaly.eta <= 0.0) {
        problems.push_back("anomaly.eta must be positive");
    }
    if (!std::isfinite(anomaly.delta) || anomaly.delta < 0.0 || anomaly.delta > 1.0) {
        problems.push_back("anomaly.delta must lie in [0, 1]");
    }
    if (!problems.empty()) {
        throw ValidationError(std::move(problems));
    }
}

// f_m = gamma_e * mu0 (H + H_A), GHz.
inline double magnon_frequency(const MagnonMode& magnon)
{
    const double field_mt = magnon.mu0_h + magnon.mu0_ha;
    if (!std::isfinite(field_mt) || field_mt <= 0.0) {
        throw DomainError("magnon.mu0_h + magnon.mu0_ha must be positive (mu0_h = " + std::to_string(magnon.mu0_h) +
                          " mT, mu0_ha = " + std::to_string(magnon.mu0_ha) + " mT)");
    }
    return magnon.gamma_e * field_mt * 1e-3;
}

// Bias field (mT) that puts the magnon at `f_ghz`.
inline double bias_field_for(const MagnonMode& magnon, double f_ghz)
{
    if (!(f_ghz > 0.0)) {
        throw DomainError("target magnon frequency must be positive (got " + std::to_string(f_ghz) + " GHz)");
    }
    return f_ghz / magnon.gamma_e * 1e3 - magnon.mu0_ha;
}

// Returns a copy of `sys` with the bias field set so that f_m - f_c = delta_m (MHz).
inline CoupledSystem with_field_detuning(CoupledSystem sys, double delta_m_mhz)
{
    const double target = sys.cavity.f_c + delta_m_mhz / kMHzPerGHz;
    if (!(target > 0.0)) {
        throw DomainError("field detuning " + std::to_string(delta_m_mhz) + " MHz drives the magnon frequency non-positive");
    }
    sys.magnon.mu0_h = bias_field_for(sys.magnon, target);
    return sys;
}

// intrinsic + kappa_L/2 - kappa_R/2; beta for the cavity, alpha for the magnon. Signed.
inline double effective_damping(double intrinsic, double kappa_l, double kappa_r)
{
    detail::require_finite(intrinsic, "intrinsic damping");
    detail::require_finite(kappa_l, "kappa_L");
    detail::require_finite(kappa_r, "kappa_R");
    return intrinsic + kappa_l / 2.0 - kappa_r / 2.0;
}

inline double cavity_damping(const CavityMode& c) { return effective_damping(c.beta0, c.kappa_l, c.kappa_r); }
inline double magnon_damping(const MagnonMode& m) { return effective_damping(m.alpha0, m.kappa_l, m.kappa_r); }

// Full loaded half-width beta0 + (kappa_L + kappa_R)/2.
inline double cavity_total_damping(const CavityMode& c) { return c.beta0 + (c.kappa_l + c.kappa_r) / 2.0; }

// omega_c - i*beta, MHz.
inline cplx cavity_complex_frequency(const CavityMode& c)
{
    return {c.f_c * kMHzPerGHz, -cavity_damping(c)};
}

// omega_m - i*alpha, MHz.
inline cplx magnon_complex_frequency(const MagnonMode& m)
{
    return {magnon_frequency(m) * kMHzPerGHz, -magnon_damping(m)};
}

// Phi = 2 pi L / lambda + delta_phi, unreduced.
inline double total_phase(const PhaseLink& link)
{
    if (!std::isfinite(link.wavelength_mm) || link.wavelength_mm <= 0.0) {
        throw DomainError("link.wavelength must be positive (got " + std::to_string(link.wavelength_mm) + " mm)");
    }
    if (!std::isfinite(link.length_m) || link.length_m < 0.0) {
        throw DomainError("link.length must be non-negative (got " + std::to_string(link.length_m) + " m)");
    }
    return 2.0 * kPi * (link.length_m * 1e3) / link.wavelength_mm + link.delta_phi;
}

// Single-resonance transmission of the bare cavity.
inline cplx bare_cavity_s21(double f_ghz, const CavityMode& cavity)
{
    const double x = (f_ghz - cavity.f_c) * kMHzPerGHz;
    const double beta = cavity_damping(cavity);
    const double total = cavity_total_damping(cavity);
    const cplx den{x, total};
    if (den == cplx{0.0, 0.0}) {
        return {1.0, 0.0};  // all rates zero, removable singularity at f = f_c
    }
    return cplx{x, beta} / den;
}

// Precomputed coupled-system transmission. Evaluation is in MHz offsets from f_c so that the
// GHz-scale carrier never enters a difference of nearly equal numbers.
class CoupledModel
{
public:
    explicit CoupledModel(const CoupledSystem& sys) : sys_(sys)
    {
        validate(sys.cavity);
        validate(sys.magnon);
        validate(sys.anomaly);

        const auto& c = sys.cavity;
        const auto& m = sys.magnon;
        const double eta = sys.anomaly.eta;
        const double delta = sys.anomaly.delta;

        f_c_ = c.f_c;
        phi_ = total_phase(sys.link);
        wc_ = cplx{0.0, -cavity_damping(c)};
        wm_ = cplx{(magnon_frequency(m) - c.f_c) * kMHzPerGHz, -magnon_damping(m)};
        kcr_ = c.kappa_r;
        kmr_ = m.kappa_r;
        k_ = std::sqrt(c.kappa_r * m.kappa_r * c.kappa_l * m.kappa_l);
        phase_factor_ = std::polar(1.0, 2.0 * phi_ / eta);
        readout_shift_ = (1.0 - delta * delta) * m.kappa_r;
        // -kcR kmR (1-delta) (e^{i2Phi/eta} sqrt(kcL kmL / (kcR kmR)) - delta), multiplied through so
        // that vanishing right-going rates stay finite.
        g0_sq_ = -(1.0 - delta) * (phase_factor_ * k_ - delta * c.kappa_r * m.kappa_r);
    }

    [[nodiscard]] cplx numerator(double x_mhz) const
    {
        return (x_mhz - wm_ + cplx{0.0, readout_shift_}) * (x_mhz - wc_) - g0_sq_;
    }

    [[nodiscard]] cplx denominator(double x_mhz) const
    {
        return (x_mhz - wm_ + cplx{0.0, kmr_}) * (x_mhz - wc_ + cplx{0.0, kcr_}) + k_ * phase_factor_;
    }

    // S21 at absolute frequency f (GHz).
    [[nodiscard]] cplx s21(double f_ghz) const { return s21_detuned((f_ghz - f_c_) * kMHzPerGHz); }

    // S21 at detuning x = f - f_c (MHz).
    [[nodiscard]] cplx s21_detuned(double x_mhz) const
    {
        const cplx den = denominator(x_mhz);
        if (den == cplx{0.0, 0.0}) {
            throw SingularityError("coupled transmission evaluated on an undamped pole at detuning " +
                                   std::to_string(x_mhz) + " MHz");
        }
        return numerator(x_mhz) / den;
    }

    [[nodiscard]] double coupling_k() const { return k_; }
    [[nodiscard]] cplx g0_squared() const { return g0_sq_; }
    [[nodiscard]] double phase() const { return phi_; }
    [[nodiscard]] const CoupledSystem& system() const { return sys_; }

    // Transmission zeros (numerator roots), absolute MHz.
    [[nodiscard]] ComplexModePair zeros() const
    {
        return roots(wm_ - cplx{0.0, readout_shift_}, wc_, g0_sq_);
    }

    // Transmission poles (denominator roots), absolute MHz.
    [[nodiscard]] ComplexModePair poles() const
    {
        return roots(wm_ - cplx{0.0, kmr_}, wc_ - cplx{0.0, kcr_}, -k_ * phase_factor_);
    }

private:
    // Roots of (w - a)(w - b) - c = 0, shifted back to absolute MHz.
    [[nodiscard]] ComplexModePair roots(cplx a, cplx b, cplx c) const
    {
        const cplx mean = 0.5 * (a + b);
        const cplx half = 0.5 * (a - b);
        const cplx root = std::sqrt(half * half + c);
        const double scale = std::max({1.0, std::abs(a - b), std::sqrt(std::abs(c))});
        const bool degenerate = std::abs(root) <= 1e-9 * scale;
        const cplx offset{f_c_ * kMHzPerGHz, 0.0};
        if (degenerate) {
            return {mean + offset, mean + offset, true};
        }
        return ComplexModePair::ordered(mean + root + offset, mean - root + offset);
    }

    CoupledSystem sys_;
    double f_c_ = 0.0;
    double phi_ = 0.0;
    cplx wc_;
    cplx wm_;
    double kcr_ = 0.0;
    double kmr_ = 0.0;
    double k_ = 0.0;
    cplx phase_factor_;
    double readout_shift_ = 0.0;
    cplx g0_sq_;
};

inline cplx coupled_s21(double f_ghz, const CoupledSystem& sys) { return CoupledModel(sys).s21(f_ghz); }

inline ComplexModePair denominator_poles(const CoupledSystem& sys) { return CoupledModel(sys).poles(); }

inline ComplexModePair transmission_zeros(const CoupledSystem& sys) { return CoupledModel(sys).zeros(); }

// Drift matrix of the coupled equations of motion, absolute MHz:
//   [[w_c - i beta0 - i kappa_c,        -i e^{i Phi/eta} sqrt(kcR kmR)],
//    [-i e^{i Phi/eta} sqrt(kcL kmL),    w_m - i alpha0 - i kappa_m   ]]
// delta only enters the drive/readout vectors, never this matrix.
inline Matrix2c drift_matrix(const CoupledSystem& sys)
{
    const auto& c = sys.cavity;
    const auto& m = sys.magnon;
    const double kappa_c = (c.kappa_l + c.kappa_r) / 2.0;
    const double kappa_m = (m.kappa_l + m.kappa_r) / 2.0;
    const cplx hop = cplx{0.0, -1.0} * std::polar(1.0, total_phase(sys.link) / sys.anomaly.eta);
    Matrix2c out;
    out[0][0] = {c.f_c * kMHzPerGHz, -(c.beta0 + kappa_c)};
    out[0][1] = hop * std::sqrt(c.kappa_r * m.kappa_r);
    out[1][0] = hop * std::sqrt(c.kappa_l * m.kappa_l);
    out[1][1] = {magnon_frequency(m) * kMHzPerGHz, -(m.alpha0 + kappa_m)};
    return out;
}

// Closed-form eigenvalues of a 2x2 complex matrix, ordered as a ComplexModePair.
inline ComplexModePair eigenmodes(const Matrix2c& a)
{
    const cplx mean = 0.5 * (a[0][0] + a[1][1]);
    // Centre the diagonal before squaring; the GHz carrier cancels exactly.
    const cplx half = 0.5 * (a[0][0] - a[1][1]);
    const cplx root = std::sqrt(half * half + a[0][1] * a[1][0]);
    const double scale = std::max({1.0, std::abs(half), std::sqrt(std::abs(a[0][1] * a[1][0]))});
    if (std::abs(root) <= 1e-9 * scale) {
        return {mean, mean, true};
    }
    return ComplexModePair::ordered(mean + root, mean - root);
}

inline ComplexModePair drift_eigenmodes(const CoupledSystem& sys) { return eigenmodes(drift_matrix(sys)); }

// G = J + i Gamma = sqrt((w+ - w-)^2 - (w_c - w_m)^2) on the branch J >= 0 (Gamma >= 0 if J == 0).
// The references are normally the half-loaded omega_c - i beta and omega_m - i alpha.
inline CouplingResult coupling_from_modes(const ComplexModePair& pair, cplx omega_c_tilde, cplx omega_m_tilde)
{
    const cplx split = pair.plus - pair.minus;
    const cplx detune = omega_c_tilde - omega_m_tilde;
    return {detail::principal_branch(std::sqrt(split * split - detune * detune))};
}

// Eigenvalues of the drift matrix fed through the coupling formula, with the drift diagonal as the
// uncoupled references. Gives G^2 = 4 M01 M10 = -4 K e^{i 2 Phi/eta}.
inline CouplingResult coupling_from_drift(const CoupledSystem& sys)
{
    const Matrix2c m = drift_matrix(sys);
    return coupling_from_modes(eigenmodes(m), m[0][0], m[1][1]);
}

// C = |G|^2 / |beta alpha|. Diverges at critical coupling, which is reported as an error.
inline double cooperativity(const CouplingResult& g, double alpha, double beta)
{
    if (!std::isfinite(alpha) || !std::isfinite(beta)) {
        throw DomainError("cooperativity needs finite damping rates");
    }
    if (alpha == 0.0 || beta == 0.0) {
        throw SingularityError("cooperativity is singular: effective damping " +
                               std::string(beta == 0.0 ? "beta" : "alpha") + " is zero (critical coupling)");
    }
    return std::norm(g.g) / std::abs(beta * alpha);
}

} // namespace cavmag
