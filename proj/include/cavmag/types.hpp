#pragma once

// Domain value types for the cavity-magnon coupled-mode model.
//
// Units are linear frequencies throughout (the omega/2pi values):
//   resonance frequencies   GHz
//   damping / coupling rates MHz, half-width convention
//   complex frequencies      MHz, written omega - i*damping
//   fields                   mT, gyromagnetic ratio in GHz/T
//   lengths                  m (cable), mm (wavelength, spacing)
//   phases                   rad

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"

namespace cavmag {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kMHzPerGHz = 1e3;

struct CavityMode
{
    double f_c = 0.0;       // GHz
    double beta0 = 0.0;     // MHz, intrinsic
    double kappa_l = 0.0;   // MHz, to the left-going channel
    double kappa_r = 0.0;   // MHz, to the right-going channel
};

struct MagnonMode
{
    double gamma_e = 22.4;  // GHz/T
    double mu0_ha = 0.0;    // mT, anisotropy field
    double mu0_h = 0.0;     // mT, bias field
    double alpha0 = 0.0;    // MHz, intrinsic
    double kappa_l = 0.0;   // MHz
    double kappa_r = 0.0;   // MHz
};

// Travelling-photon channel between the two resonators. The total phase is derived, never stored.
struct PhaseLink
{
    double length_m = 0.0;
    double wavelength_mm = 32.7;
    double delta_phi = 0.0;  // phase-shifter offset, rad
};

// Phenomenological phase-period divisor (eta) and magnon drive/readout attenuation (delta).
// eta = 1, delta = 1 is the conventional photon-mediated coupling theory.
struct AnomalyParams
{
    double eta = 1.0;
    double delta = 1.0;
};

struct CoupledSystem
{
    CavityMode cavity;
    MagnonMode magnon;
    PhaseLink link;
    AnomalyParams anomaly;
};

// Pair of complex normal-mode frequencies (MHz), ordered so that Re(plus) >= Re(minus),
// ties broken by Im(plus) >= Im(minus). `degenerate` marks a double root.
struct ComplexModePair
{
    cplx plus;
    cplx minus;
    bool degenerate = false;

    [[nodiscard]] static ComplexModePair ordered(cplx a, cplx b, bool degenerate = false)
    {
        const bool swap = a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
        if (swap) {
            return {b, a, degenerate};
        }
        return {a, b, degenerate};
    }

    [[nodiscard]] double splitting() const { return plus.real() - minus.real(); }
};

// Complex coupling G = J + i*Gamma (MHz) on the branch J >= 0 (Gamma >= 0 when J == 0).
struct CouplingResult
{
    cplx g;

    [[nodiscard]] double j() const { return g.real(); }
    [[nodiscard]] double gamma() const { return g.imag(); }
    [[nodiscard]] double magnitude() const { return std::abs(g); }
};

enum class Provenance
{
    synthetic,
    measured
};

// Sampled complex transmission in the model's e^{-i omega t} convention.
struct Spectrum
{
    std::vector<double> freq;  // GHz, strictly increasing
    std::vector<cplx> s21;
    Provenance provenance = Provenance::synthetic;
    std::optional<double> noise_sigma;
    bool has_phase = true;  // false for amplitude-only data (s21 holds |S21| on the real axis)

    [[nodiscard]] std::size_t size() const noexcept { return freq.size(); }

    void validate() const
    {
        if (freq.size() != s21.size()) {
            throw ValidationError({"spectrum: grid has " + std::to_string(freq.size()) + " samples but values have " +
                                   std::to_string(s21.size())});
        }
        std::vector<std::string> problems;
        for (std::size_t i = 0; i < freq.size(); ++i) {
            if (!std::isfinite(freq[i])) {
                problems.push_back("spectrum: non-finite frequency at sample " + std::to_string(i));
            } else if (i > 0 && !(freq[i] > freq[i - 1])) {
                problems.push_back("spectrum: grid not strictly increasing at sample " + std::to_string(i));
            }
            if (!std::isfinite(s21[i].real()) || !std::isfinite(s21[i].imag())) {
                problems.push_back("spectrum: non-finite value at sample " + std::to_string(i));
            }
        }
        if (!problems.empty()) {
            throw ValidationError(std::move(problems));
        }
    }
};

} // namespace cavmag
