#pragma once

// Box-constrained Levenberg-Marquardt for small weighted least-squares
// problems. Parameters pinned at a bound with the gradient pointing outward
// are frozen for the step (active set); everything else is a standard
// Marquardt-scaled damped Gauss-Newton iteration.
//
// Convergence contract: relative parameter change < param_rtol, or relative
// cost change < cost_rtol, within max_iterations accepted steps.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsps/error.hpp"

namespace fsps {

struct LsqOptions {
    int max_iterations = 10000;
    double param_rtol = 1e-8;
    double cost_rtol = 1e-10;
};

struct LsqResult {
    Eigen::VectorXd x;
    double cost = 0.0;  // sum of squared weighted residuals
    int iterations = 0;
    bool converged = false;
    std::vector<bool> at_lower;
    std::vector<bool> at_upper;
    Eigen::MatrixXd jtj;  // J^T J at the solution
    std::string message;
};

/// Model requirements:
///   Eigen::Index residual_count() const;
///   void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const;
/// where r holds weighted residuals (model - data) / sigma and jac = dr/dx.
template <class Model>
LsqResult bounded_least_squares(const Model& model, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, const LsqOptions& opt = {}) {
    const Eigen::Index n = x0.size();
    detail::require(lower.size() == n && upper.size() == n, "bounded_least_squares: bound size mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
        detail::require(lower[i] <= upper[i], "bounded_least_squares: empty bound interval");
    }
    auto clamp = [&](Eigen::VectorXd v) {
        for (Eigen::Index i = 0; i < n; ++i) v[i] = std::clamp(v[i], lower[i], upper[i]);
        return v;
    };

    LsqResult res;
    Eigen::VectorXd x = clamp(std::move(x0));
    Eigen::VectorXd r(model.residual_count());
    Eigen::MatrixXd jac(model.residual_count(), n);
    model.evaluate(x, r, &jac);
    double cost = r.squaredNorm();
    if (!std::isfinite(cost)) {
        res.x = x;
        res.cost = cost;
        res.message = "non-finite residual at the initial point";
        return res;
    }

    double lambda = 1e-3;
    Eigen::VectorXd r_new(r.size());
    Eigen::MatrixXd jac_new(jac.rows(), n);
    bool done = cost == 0.0;
    if (done) res.message = "exact fit";

    int it = 0;
    for (; !done && it < opt.max_iterations; ++it) {
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;

        std::vector<bool> frozen(static_cast<std::size_t>(n), false);
        for (Eigen::Index i = 0; i < n; ++i) {
            frozen[static_cast<std::size_t>(i)] = (x[i] <= lower[i] && g[i] > 0) || (x[i] >= upper[i] && g[i] < 0);
        }
        const double dmax = a.diagonal().maxCoeff();
        const double dfloor = std::max(dmax * 1e-12, std::numeric_limits<double>::min());

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd m = a;
            Eigen::VectorXd rhs = -g;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (frozen[static_cast<std::size_t>(i)]) {
                    m.row(i).setZero();
                    m.col(i).setZero();
                    m(i, i) = 1.0;
                    rhs[i] = 0.0;
                } else {
                    m(i, i) += lambda * std::max(a(i, i), dfloor);
                }
            }
            const Eigen::VectorXd step = m.ldlt().solve(rhs);
            const Eigen::VectorXd x_new = clamp(x + step);
            model.evaluate(x_new, r_new, &jac_new);
            const double cost_new = r_new.squaredNorm();

            if (std::isfinite(cost_new) && cost_new <= cost) {
                accepted = true;
                bool small_step = true;
                for (Eigen::Index i = 0; i < n; ++i) {
                    small_step = small_step &&
                                 std::abs(x_new[i] - x[i]) <= opt.param_rtol * (std::abs(x_new[i]) + opt.param_rtol);
                }
                const double dcost = cost - cost_new;
                x = x_new;
                r.swap(r_new);
                jac.swap(jac_new);
                lambda = std::max(lambda / 3.0, 1e-15);
                if (small_step) {
                    done = true;
                    res.message = "relative parameter change below tolerance";
                } else if (dcost <= opt.cost_rtol * cost_new) {
                    done = true;
                    res.message = "relative cost change below tolerance";
                }
                cost = cost_new;
            } else {
                lambda *= 4.0;
                if (lambda > 1e20) {
                    // No descent at any step length: stationary to machine precision.
                    done = true;
                    res.message = "no further decrease possible";
                    break;
                }
            }
        }
    }

    res.x = x;
    res.cost = cost;
    res.iterations = it;
    res.converged = done;
    if (!done) res.message = "iteration cap reached";
    res.jtj = jac.transpose() * jac;
    res.at_lower.resize(static_cast<std::size_t>(n));
    res.at_upper.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        res.at_lower[static_cast<std::size_t>(i)] = x[i] <= lower[i];
        res.at_upper[static_cast<std::size_t>(i)] = x[i] >= upper[i];
    }
    return res;
}

/// 1-sigma parameter errors from (J^T J)^-1. Parameters whose Jacobian
/// column vanishes are reported as +inf and excluded from the inversion.
inline std::vector<double> curvature_sigmas(const Eigen::MatrixXd& jtj) {
    const Eigen::Index n = jtj.rows();
    std::vector<double> out(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    const double scale = jtj.diagonal().cwiseAbs().maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (jtj(i, i) > 1e-14 * scale && jtj(i, i) > 0) keep.push_back(i);
    }
    if (keep.empty()) return out;
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        for (std::size_t j = 0; j < keep.size(); ++j) {
            sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = jtj(keep[i], keep[j]);
        }
    }
    // Scale to unit diagonal before inverting; the raw matrix mixes units.
    const Eigen::VectorXd d = sub.diagonal().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd scaled = d.asDiagonal() * sub * d.asDiagonal();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(scaled);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) return out;
    const Eigen::MatrixXd cov = d.asDiagonal() * lu.inverse() * d.asDiagonal();
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const double v = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
        out[static_cast<std::size_t>(keep[i])] = v >= 0 ? std::sqrt(v) : std::numeric_limits<double>::infinity();
    }
    return out;
}

}  // namespace fsps
