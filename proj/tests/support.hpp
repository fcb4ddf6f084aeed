#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cavmag/cavmag.hpp"

namespace fixtures {

using cavmag::cplx;

inline cavmag::CavityMode near_cc() { return {6.181, 17.0, 332.4, 370.0}; }
inline cavmag::CavityMode away_cc() { return {6.203, 17.0, 37.0, 37.0}; }

inline cavmag::MagnonMode magnon() { return {22.4, -7.1, 0.0, 0.8, 8.0, 7.0}; }

// Cable of 66 wavelengths: Phi_L = 132 pi, so delta_phi alone sets the phase modulo 4 pi.
inline cavmag::PhaseLink link(double delta_phi) { return {66.0 * 32.7e-3, 32.7, delta_phi}; }

inline cavmag::CoupledSystem system(cavmag::CavityMode cavity, double delta_phi, double eta, double delta,
                                    double field_detuning_mhz = 0.0)
{
    cavmag::CoupledSystem sys{cavity, magnon(), link(delta_phi), {eta, delta}};
    return cavmag::with_field_detuning(sys, field_detuning_mhz);
}

inline cavmag::CoupledSystem anomalous(double delta_phi = cavmag::kPi) { return system(near_cc(), delta_phi, 2.0, 0.996); }
inline cavmag::CoupledSystem conventional(double delta_phi = cavmag::kPi) { return system(near_cc(), delta_phi, 1.0, 1.0); }

// Uniform grid in GHz centred on f_c, half-span and step in MHz.
inline std::vector<double> grid(double f_c, double half_span_mhz, std::size_t n)
{
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = f_c + (-half_span_mhz + 2.0 * half_span_mhz * static_cast<double>(i) / static_cast<double>(n - 1)) * 1e-3;
    }
    return f;
}

// Minimal generator for property tests: fixed seed, uniform draws.
class Gen
{
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    cplx complex(double scale) { return {uniform(-scale, scale), uniform(-scale, scale)}; }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    cavmag::CavityMode cavity()
    {
        return {uniform(5.0, 7.0), uniform(0.0, 40.0), uniform(0.0, 400.0), uniform(0.0, 400.0)};
    }

    cavmag::MagnonMode magnon_mode()
    {
        return {22.4, uniform(-10.0, 10.0), uniform(150.0, 350.0), uniform(0.0, 3.0), uniform(0.0, 15.0),
                uniform(0.0, 15.0)};
    }

private:
    std::mt19937_64 rng_;
};

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

} // namespace fixtures
