#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace levicool {

struct LmOptions {
    int max_iterations = 100;
    /// Stop once an accepted step changes the cost by less than this fraction.
    double rel_tol = 1e-8;
    double initial_lambda = 1e-3;
};

struct LmResult {
    Eigen::VectorXd params;
    double cost = 0.0;  // sum of squared residuals
    int iterations = 0;
    bool converged = false;
};

/// Gauss-Newton with Levenberg damping on the diagonal of J^T J.
/// `model(p, residuals, jacobian)` fills residuals and, when jacobian is
/// non-null, the residual Jacobian.
template <typename Model>
LmResult levenberg_marquardt(Model&& model, Eigen::VectorXd params, const LmOptions& opts = {}) {
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    model(params, r, &jac);
    double cost = r.squaredNorm();
    double lambda = opts.initial_lambda;
    LmResult res{params, cost, 0, false};
    if (!std::isfinite(cost)) return res;

    Eigen::VectorXd r_try;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        res.iterations = it;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-30);
            const Eigen::VectorXd delta = a.ldlt().solve(-grad);
            const Eigen::VectorXd trial = params + delta;
            model(trial, r_try, nullptr);
            const double trial_cost = r_try.squaredNorm();
            if (std::isfinite(trial_cost) && trial_cost <= cost) {
                const double change = cost - trial_cost;
                params = trial;
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                model(params, r, &jac);
                cost = r.squaredNorm();
                res.params = params;
                res.cost = cost;
                if (change <= opts.rel_tol * std::max(trial_cost + change, std::numeric_limits<double>::min()) ||
                    cost == 0.0) {
                    res.converged = true;
                    return res;
                }
            } else {
                lambda *= 10.0;
                // No descent direction left at working precision: we are at the minimum.
                if (lambda > 1e16) {
                    res.converged = true;
                    return res;
                }
            }
        }
    }
    return res;
}

}  // namespace levicool
