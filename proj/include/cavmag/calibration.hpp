#pragma once

// Cavity calibration versus the cavity-microstrip spacing d, its shape-preserving interpolation,
// and the search for critical-coupling spacings (roots of beta(d)).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <math.h>  // Boost 1.74 pchip calls unqualified isnan
#include <boost/math/interpolators/pchip.hpp>

#include "errors.hpp"
#include "model.hpp"
#include "types.hpp"

namespace cavmag {

struct CalibrationRow
{
    double d = 0.0;        // mm
    double f_c = 0.0;      // GHz
    double kappa_l = 0.0;  // MHz
    double kappa_r = 0.0;  // MHz
    double beta0 = 0.0;    // MHz

    [[nodiscard]] CavityMode cavity() const { return {f_c, beta0, kappa_l, kappa_r}; }
    [[nodiscard]] double beta() const { return effective_damping(beta0, kappa_l, kappa_r); }
};

struct CalibrationTable
{
    std::vector<CalibrationRow> rows;

    // Rows sorted by increasing d. Throws if d is not strictly monotone in the given order
    // (either direction is accepted) or any rate is negative.
    [[nodiscard]] CalibrationTable normalized() const
    {
        std::vector<std::string> problems;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            const std::string where = "row " + std::to_string(i + 1);
            if (!std::isfinite(r.d)) {
                problems.push_back(where + ": d is not finite");
            }
            if (!std::isfinite(r.f_c) || r.f_c <= 0.0) {
                problems.push_back(where + ": f_c must be positive");
            }
            for (auto [v, name] : {std::pair{r.kappa_l, "kappa_cL"}, std::pair{r.kappa_r, "kappa_cR"},
                                   std::pair{r.beta0, "beta0"}}) {
                if (!std::isfinite(v) || v < 0.0) {
                    problems.push_back(where + ": " + name + " must be a non-negative rate");
                }
            }
        }
        bool increasing = true;
        bool decreasing = true;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            increasing = increasing && rows[i].d > rows[i - 1].d;
            decreasing = decreasing && rows[i].d < rows[i - 1].d;
            if (rows[i].d == rows[i - 1].d) {
                problems.push_back("rows " + std::to_string(i) + " and " + std::to_string(i + 1) +
                                   ": duplicate d = " + std::to_string(rows[i].d));
            }
        }
        if (!increasing && !decreasing && problems.empty()) {
            problems.emplace_back("d is not monotone across rows");
        }
        if (!problems.empty()) {
            throw ValidationError(std::move(problems));
        }
        CalibrationTable out = *this;
        if (decreasing && rows.size() > 1) {
            std::reverse(out.rows.begin(), out.rows.end());
        }
        return out;
    }
};

// Monotone piecewise-cubic (PCHIP) interpolant of every rate column of a normalized table.
class CalibrationCurve
{
public:
    explicit CalibrationCurve(const CalibrationTable& table)
        : table_(table.normalized()),
          f_c_(column(&CalibrationRow::f_c)),
          kappa_l_(column(&CalibrationRow::kappa_l)),
          kappa_r_(column(&CalibrationRow::kappa_r)),
          beta0_(column(&CalibrationRow::beta0))
    {
    }

    [[nodiscard]] double d_min() const { return table_.rows.front().d; }
    [[nodiscard]] double d_max() const { return table_.rows.back().d; }
    [[nodiscard]] const CalibrationTable& table() const { return table_; }

    [[nodiscard]] CavityMode cavity_at(double d) const
    {
        check_range(d);
        if (const auto* row = node_at(d)) {
            return row->cavity();
        }
        return {f_c_(d), beta0_(d), kappa_l_(d), kappa_r_(d)};
    }

    [[nodiscard]] double beta_at(double d) const
    {
        check_range(d);
        if (const auto* row = node_at(d)) {
            return row->beta();
        }
        return effective_damping(beta0_(d), kappa_l_(d), kappa_r_(d));
    }

private:
    using Pchip = boost::math::interpolators::pchip<std::vector<double>>;

    Pchip column(double CalibrationRow::*field) const
    {
        if (table_.rows.size() < 4) {
            throw ValidationError({"calibration table needs at least 4 rows for interpolation (got " +
                                   std::to_string(table_.rows.size()) + ")"});
        }
        std::vector<double> x;
        std::vector<double> y;
        for (const auto& r : table_.rows) {
            x.push_back(r.d);
            y.push_back(r.*field);
        }
        return Pchip(std::move(x), std::move(y));
    }

    void check_range(double d) const
    {
        if (!(d >= d_min() && d <= d_max())) {
            throw RangeError("spacing d = " + std::to_string(d) + " mm lies outside the calibrated range [" +
                             std::to_string(d_min()) + ", " + std::to_string(d_max()) + "] mm");
        }
    }

    // Tabulated rows are reproduced exactly.
    [[nodiscard]] const CalibrationRow* node_at(double d) const
    {
        const auto it = std::lower_bound(table_.rows.begin(), table_.rows.end(), d,
                                         [](const CalibrationRow& r, double v) { return r.d < v; });
        if (it != table_.rows.end() && it->d == d) {
            return &*it;
        }
        return nullptr;
    }

    CalibrationTable table_;
    Pchip f_c_;
    Pchip kappa_l_;
    Pchip kappa_r_;
    Pchip beta0_;
};

struct CriticalSpacing
{
    double d = 0.0;   // mm
    double lo = 0.0;  // bracketing interval on the interpolant
    double hi = 0.0;
};

struct CriticalSearch
{
    std::vector<CriticalSpacing> roots;
    double min_abs_beta = std::numeric_limits<double>::infinity();  // diagnostic over the scan
};

// Every root of the interpolated beta(d), each refined by bisection to |beta| < tol (MHz).
// Each table interval is scanned on `subdivisions` sub-steps so that paired roots inside one
// interval are not missed.
inline CriticalSearch find_critical_spacing(const CalibrationTable& table, double tol = 1e-6,
                                            std::size_t subdivisions = 64)
{
    const CalibrationCurve curve(table);
    const auto& rows = curve.table().rows;
    CriticalSearch out;

    std::vector<double> grid;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        for (std::size_t k = 0; k < subdivisions; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(subdivisions);
            grid.push_back(k == 0 ? rows[i].d : rows[i].d + t * (rows[i + 1].d - rows[i].d));
        }
    }
    grid.push_back(rows.back().d);

    std::vector<double> beta(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        beta[i] = curve.beta_at(grid[i]);
        out.min_abs_beta = std::min(out.min_abs_beta, std::abs(beta[i]));
    }

    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (beta[i] == 0.0) {
            const double lo = i > 0 ? grid[i - 1] : grid[i];
            const double hi = i + 1 < grid.size() ? grid[i + 1] : grid[i];
            out.roots.push_back({grid[i], lo, hi});
            continue;
        }
        if (i + 1 >= grid.size() || beta[i + 1] == 0.0 || std::signbit(beta[i]) == std::signbit(beta[i + 1])) {
            continue;
        }
        double lo = grid[i];
        double hi = grid[i + 1];
        double f_lo = beta[i];
        double mid = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            mid = 0.5 * (lo + hi);
            const double f_mid = curve.beta_at(mid);
            if (std::abs(f_mid) < tol || mid == lo || mid == hi) {
                break;
            }
            if (std::signbit(f_mid) == std::signbit(f_lo)) {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        out.roots.push_back({mid, grid[i], grid[i + 1]});
    }
    return out;
}

} // namespace cavmag
