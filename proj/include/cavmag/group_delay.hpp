#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "errors.hpp"
#include "types.hpp"

namespace cavmag {

struct GroupDelay
{
    std::vector<double> tau_ns;       // NaN where invalid
    std::vector<std::uint8_t> valid;  // 0 where the phase is undefined in the stencil
    bool undersampled = false;        // some adjacent samples differ by more than pi/20 in phase

    [[nodiscard]] std::size_t invalid_count() const
    {
        return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{0}));
    }
};

namespace detail {

// Fornberg's recursion for first-derivative weights at z on arbitrary nodes.
template <std::size_t N>
std::array<double, N> first_derivative_weights(double z, std::span<const double> x)
{
    std::array<std::array<double, 2>, N> c{};
    const std::size_t n = x.size();
    double c1 = 1.0;
    double c4 = x[0] - z;
    c[0][0] = 1.0;
    for (std::size_t i = 1; i < n; ++i) {
        const std::size_t mn = std::min<std::size_t>(i, 1);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - z;
        for (std::size_t j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (std::size_t k = mn; k >= 1; --k) {
                    c[i][k] = c1 * (static_cast<double>(k) * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (std::size_t k = mn; k >= 1; --k) {
                c[j][k] = (c4 * c[j][k] - static_cast<double>(k) * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::array<double, N> w{};
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = c[i][1];
    }
    return w;
}

inline double wrap_to_pi(double a)
{
    return std::remainder(a, 2.0 * kPi);
}

} // namespace detail

// Phase angle of S21 as an instrument reports it (e^{+j omega t}), i.e. -arg of the model value.
inline double instrument_phase(cplx s) { return -std::arg(s); }

// tau_g = -d(angle S21)/d omega, in ns, using the instrument phase angle. The phase is unwrapped
// cumulatively (jumps larger than pi), then differentiated with 5-point Fornberg weights: central in
// the interior, shifted to one side at the ends. Samples with |S21| = 0 have no phase; every sample
// whose stencil touches one is flagged rather than failing the spectrum.
inline GroupDelay group_delay(const Spectrum& spectrum)
{
    spectrum.validate();
    const std::size_t n = spectrum.size();
    if (n < 3) {
        throw DomainError("group delay needs at least 3 samples (got " + std::to_string(n) + ")");
    }
    if (!spectrum.has_phase) {
        throw DomainError("group delay needs phase data; spectrum is amplitude-only");
    }

    std::vector<std::uint8_t> defined(n, 1);
    std::vector<double> phase(n, 0.0);
    bool have_prev = false;
    double prev_raw = 0.0;
    double prev_unwrapped = 0.0;
    double max_step = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(spectrum.s21[i]) <= std::numeric_limits<double>::min()) {
            defined[i] = 0;
            continue;
        }
        const double raw = instrument_phase(spectrum.s21[i]);
        if (!have_prev) {
            phase[i] = raw;
        } else {
            const double step = detail::wrap_to_pi(raw - prev_raw);
            max_step = std::max(max_step, std::abs(step));
            phase[i] = prev_unwrapped + step;
        }
        prev_raw = raw;
        prev_unwrapped = phase[i];
        have_prev = true;
    }

    GroupDelay out;
    out.tau_ns.assign(n, std::numeric_limits<double>::quiet_NaN());
    out.valid.assign(n, 0);
    out.undersampled = max_step > kPi / 20.0;

    constexpr std::size_t width = 5;
    const std::size_t stencil = std::min(width, n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i >= stencil / 2 ? i - stencil / 2 : 0;
        lo = std::min(lo, n - stencil);
        bool ok = true;
        for (std::size_t k = lo; k < lo + stencil; ++k) {
            ok = ok && defined[k] != 0;
        }
        if (!ok) {
            continue;
        }
        const std::span<const double> nodes(spectrum.freq.data() + lo, stencil);
        const auto w = detail::first_derivative_weights<width>(spectrum.freq[i], nodes);
        double dphi_df = 0.0;  // rad per GHz
        for (std::size_t k = 0; k < stencil; ++k) {
            dphi_df += w[k] * phase[lo + k];
        }
        // omega = 2 pi f * 1e9 rad/s, so rad/GHz / (2 pi) is ns.
        out.tau_ns[i] = -dphi_df / (2.0 * kPi);
        out.valid[i] = 1;
    }
    return out;
}

} // namespace cavmag
