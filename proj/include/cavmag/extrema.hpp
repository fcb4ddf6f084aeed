#pragma once

// Local-minimum detection on sampled lineshapes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "types.hpp"

namespace cavmag {

struct LocalMinimum
{
    std::size_t index = 0;
    double value = 0.0;
    double prominence = 0.0;
};

// Centred moving average; the window shrinks at the ends.
inline std::vector<double> moving_average(std::span<const double> y, std::size_t window)
{
    const std::size_t n = y.size();
    std::vector<double> out(n);
    const std::size_t half = window / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n - 1, i + half);
        double sum = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) {
            sum += y[k];
        }
        out[i] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

// Interior local minima whose topographic prominence is at least `min_prominence`, in index order.
// A plateau counts once, at its first sample.
inline std::vector<LocalMinimum> find_minima(std::span<const double> y, double min_prominence)
{
    const std::size_t n = y.size();
    std::vector<LocalMinimum> out;
    if (n < 3) {
        return out;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(y[i] < y[i - 1])) {
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && y[j + 1] == y[i]) {
            ++j;
        }
        if (j + 1 >= n || !(y[j + 1] > y[i])) {
            continue;
        }
        // Highest point on each side before the curve drops below this minimum.
        double left_peak = y[i];
        for (std::size_t k = i; k-- > 0;) {
            left_peak = std::max(left_peak, y[k]);
            if (y[k] < y[i]) {
                break;
            }
        }
        double right_peak = y[i];
        for (std::size_t k = j + 1; k < n; ++k) {
            right_peak = std::max(right_peak, y[k]);
            if (y[k] < y[i]) {
                break;
            }
        }
        const double prominence = std::min(left_peak, right_peak) - y[i];
        if (prominence >= min_prominence) {
            out.push_back({i, y[i], prominence});
        }
        i = j;
    }
    return out;
}

// 20 log10 |S21|, floored so that exact zeros stay finite.
inline std::vector<double> magnitude_db(std::span<const cplx> s21)
{
    std::vector<double> out(s21.size());
    std::transform(s21.begin(), s21.end(), out.begin(),
                   [](cplx s) { return 20.0 * std::log10(std::max(std::abs(s), 1e-300)); });
    return out;
}

// Transmission dips of |S21| with at least `min_prominence_db` of prominence on a `smooth`-point
// moving average of the dB trace.
inline std::vector<LocalMinimum> transmission_dips(std::span<const cplx> s21, double min_prominence_db = 3.0,
                                                   std::size_t smooth = 1)
{
    auto db = magnitude_db(s21);
    if (smooth > 1) {
        db = moving_average(db, smooth);
    }
    return find_minima(db, min_prominence_db);
}

// The two deepest dips, returned in index order; fewer if the trace has fewer.
inline std::vector<LocalMinimum> deepest_two(std::vector<LocalMinimum> dips)
{
    std::stable_sort(dips.begin(), dips.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
    if (dips.size() > 2) {
        dips.resize(2);
    }
    std::sort(dips.begin(), dips.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    return dips;
}

} // namespace cavmag
