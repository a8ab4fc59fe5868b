#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "resnet.hpp"
#include "resnet_bounds.hpp"
#include "rng.hpp"

namespace htmc {

struct PruneResult {
    ResNet pruned;
    double eps_target = 0.0;
    double r_lin = 0.0;
    Eigen::VectorXd lambda;
    double lambda_sum = 0.0;       // = R_lin^2 / eps^2, the expected-l0 budget
    double expected_l0 = 0.0;      // sum 1 - exp(-lambda_i)
    long realized_l0 = 0;          // nonzero parameters after pruning
    double predicted_err_sq = 0.0; // first-order sum lambda_i^{-1} theta_i^2 |df|^2
    double measured_err_sq = 0.0;  // ||f - f~||^2 over fresh samples
    double measured_err_se = 0.0;
};

/// Multiply each parameter by an independent rescaled Poisson variable
/// theta_i P_i / lambda_i with lambda_i = |theta_i| |df_i| R_lin / eps^2,
/// the first-order optimal sparsity allocation. Parameters with lambda 0
/// (zero weight or zero sensitivity) are dropped.
inline PruneResult poisson_prune(const ResNet& net, double eps_target, uint64_t seed,
                                 int grad_samples = 2000, int err_samples = 4000) {
    if (!(eps_target > 0)) throw std::invalid_argument("poisson_prune: eps_target must be positive");
    PruneResult res;
    res.eps_target = eps_target;

    RLinResult rl = complexity_R_lin(net, grad_samples, Rng(seed, {1}).next_u64());
    res.r_lin = rl.value;
    Eigen::VectorXd theta = params_to_vector(net);
    size_t P = theta.size();
    res.lambda = Eigen::VectorXd::Zero(P);
    for (size_t i = 0; i < P; ++i)
        res.lambda(i) = std::abs(theta(i)) * rl.grad_norms(i) * rl.value / (eps_target * eps_target);
    res.lambda_sum = res.lambda.sum();

    Eigen::VectorXd pruned_theta = Eigen::VectorXd::Zero(P);
    for (size_t i = 0; i < P; ++i) {
        double lam = res.lambda(i);
        if (lam <= 0.0) continue;
        res.expected_l0 += 1.0 - std::exp(-lam);
        res.predicted_err_sq += theta(i) * theta(i) * rl.grad_norms(i) * rl.grad_norms(i) / lam;
        Rng stream(seed, {2, static_cast<uint64_t>(i)});
        long p = stream.poisson(lam);
        if (p > 0) {
            pruned_theta(i) = theta(i) * static_cast<double>(p) / lam;
            ++res.realized_l0;
        }
    }
    res.pruned = net;
    params_from_vector(res.pruned, pruned_theta);

    // Fresh-sample error measurement.
    Rng rng(seed, {3});
    double acc = 0.0, acc2 = 0.0;
    Eigen::VectorXd x(net.d_in);
    for (int s = 0; s < err_samples; ++s) {
        for (int j = 0; j < net.d_in; ++j)
            x(j) = net.domain.lo[j] + net.domain.width[j] * rng.uniform();
        double e = (forward(net, x) - forward(res.pruned, x)).squaredNorm();
        acc += e;
        acc2 += e * e;
    }
    res.measured_err_sq = acc / err_samples;
    double var = std::max(0.0, acc2 / err_samples - res.measured_err_sq * res.measured_err_sq);
    res.measured_err_se = std::sqrt(var / err_samples);
    return res;
}

}  // namespace htmc
