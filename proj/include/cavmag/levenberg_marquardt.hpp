#pragma once

// Bounded damped least squares (Levenberg-Marquardt with Marquardt diagonal scaling).
//
// Stops when the relative parameter step falls below `rel_step_tol`, when the gradient
// infinity-norm falls below `grad_tol`, or after `max_iterations`. Bounds are enforced by
// projection. Standard errors come from the linearised covariance s^2 (J^T J)^+.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cavmag {

struct LmOptions
{
    int max_iterations = 500;
    double rel_step_tol = 1e-9;
    double grad_tol = 1e-10;
    double fd_rel_step = 1e-6;
    double initial_lambda = 1e-3;
};

struct LmParameter
{
    std::string name;
    double initial = 0.0;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    double scale = 1.0;  // typical magnitude; floors the finite-difference and step-size scales
};

struct LmResult
{
    Eigen::VectorXd x;
    Eigen::VectorXd std_error;
    Eigen::MatrixXd covariance;
    int iterations = 0;
    bool converged = false;
    double cost = 0.0;  // sum of squared residuals
    double rms = 0.0;
    double gradient_norm = 0.0;
    std::string stop_reason;
};

namespace detail {

inline Eigen::VectorXd project(Eigen::VectorXd x, const std::vector<LmParameter>& p)
{
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const auto& spec = p[static_cast<std::size_t>(j)];
        x[j] = std::clamp(x[j], spec.lower, spec.upper);
    }
    return x;
}

} // namespace detail

// Central-difference Jacobian with steps fd_rel_step * max(|x_j|, scale_j), one-sided at a bound.
template <class Residual>
Eigen::MatrixXd numeric_jacobian(Residual& f, const Eigen::VectorXd& x, const Eigen::VectorXd& fx,
                                 const std::vector<LmParameter>& params, double rel_step)
{
    Eigen::MatrixXd jac(fx.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const auto& spec = params[static_cast<std::size_t>(j)];
        const double h = rel_step * std::max(std::abs(x[j]), spec.scale);
        Eigen::VectorXd xp = x;
        Eigen::VectorXd xm = x;
        const bool up = x[j] + h <= spec.upper;
        const bool down = x[j] - h >= spec.lower;
        if (up && down) {
            xp[j] += h;
            xm[j] -= h;
            jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
        } else if (up) {
            xp[j] += h;
            jac.col(j) = (f(xp) - fx) / h;
        } else {
            xm[j] -= h;
            jac.col(j) = (fx - f(xm)) / h;
        }
    }
    return jac;
}

template <class Residual, class Jacobian>
LmResult levenberg_marquardt(Residual&& f, Jacobian&& jac_fn, const std::vector<LmParameter>& params,
                             const LmOptions& opt = {})
{
    const auto n = static_cast<Eigen::Index>(params.size());
    Eigen::VectorXd x(n);
    Eigen::VectorXd scale(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        x[j] = params[static_cast<std::size_t>(j)].initial;
        scale[j] = params[static_cast<std::size_t>(j)].scale;
    }
    x = detail::project(x, params);

    LmResult out;
    Eigen::VectorXd r = f(x);
    double cost = r.squaredNorm();
    double lambda = opt.initial_lambda;
    Eigen::MatrixXd jac;

    auto finish = [&](bool converged, std::string reason) {
        out.x = x;
        out.converged = converged && std::isfinite(cost);
        out.stop_reason = std::move(reason);
        out.cost = cost;
        const auto m = r.size();
        out.rms = m > 0 ? std::sqrt(cost / static_cast<double>(m)) : 0.0;
        jac = jac_fn(x, r);
        const Eigen::VectorXd g = jac.transpose() * r;
        out.gradient_norm = g.size() > 0 ? g.lpNorm<Eigen::Infinity>() : 0.0;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
        const Eigen::MatrixXd inv = jtj.completeOrthogonalDecomposition().pseudoInverse();
        out.covariance = inv * (cost / dof);
        out.std_error = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
        return out;
    };

    if (!std::isfinite(cost)) {
        return finish(false, "non-finite residual at the initial point");
    }

    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        out.iterations = iter;
        jac = jac_fn(x, r);
        const Eigen::VectorXd g = jac.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
            return finish(true, "gradient norm below tolerance");
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        Eigen::VectorXd diag = jtj.diagonal();
        for (Eigen::Index j = 0; j < n; ++j) {
            diag[j] = std::max(diag[j], 1e-12 * std::max(1.0, jtj.diagonal().maxCoeff()));
        }

        bool accepted = false;
        double rel_step = 0.0;
        while (!accepted) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * diag;
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            const Eigen::VectorXd trial = detail::project(x + step, params);
            const Eigen::VectorXd actual = trial - x;
            rel_step = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                rel_step = std::max(rel_step, std::abs(actual[j]) / (std::abs(x[j]) + scale[j]));
            }
            const Eigen::VectorXd r_trial = f(trial);
            const double c_trial = r_trial.squaredNorm();
            if (std::isfinite(c_trial) && c_trial < cost) {
                x = trial;
                r = r_trial;
                cost = c_trial;
                lambda = std::max(lambda / 10.0, 1e-15);
                accepted = true;
            } else {
                lambda *= 10.0;
                if (rel_step < opt.rel_step_tol) {
                    return finish(true, "relative step below tolerance");
                }
                if (lambda > 1e20) {
                    return finish(false, "damping diverged without decreasing the residual");
                }
            }
        }
        if (rel_step < opt.rel_step_tol) {
            return finish(true, "relative step below tolerance");
        }
    }
    return finish(false, "iteration limit reached");
}

template <class Residual>
LmResult levenberg_marquardt(Residual&& f, const std::vector<LmParameter>& params, const LmOptions& opt = {})
{
    auto jac = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& fx) {
        return numeric_jacobian(f, x, fx, params, opt.fd_rel_step);
    };
    return levenberg_marquardt(f, jac, params, opt);
}

} // namespace cavmag
