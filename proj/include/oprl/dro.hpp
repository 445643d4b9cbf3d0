#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "oprl/norms.hpp"

namespace oprl {

/// Solution of min_tau { tau + (C/N) sum_i (z_i - tau)_+ }.
struct CvarSolution {
    double value = 0.0;
    double tau_hat = 0.0;
    int k_star = 0;                // ceil(N / C)
    std::vector<int> active;       // indices with z_i > tau_hat, in stable sorted order
    double tail_fraction = 0.0;    // |active| / N, always <= 1/C
};

/// Exact minimizer of the piecewise-linear CVaR objective by breakpoint
/// enumeration (the minimum of a convex piecewise-linear function sits on a
/// breakpoint; ties resolve to the smallest tau).
CvarSolution empirical_cvar_one_sided(std::span<const double> z, double c);

/// Weighted (population on finite support) variant: min_tau { tau +
/// C sum_i w_i (z_i - tau)_+ } with sum w_i = 1.
CvarSolution population_cvar_one_sided(std::span<const double> z, std::span<const double> weights,
                                       double c);

/// Exact primal optimum of max { sum_i w_i z_i / N : 0 <= w <= C, mean(w)=1 }:
/// weight C on the floor(N/C) largest atoms, the leftover mass on the next.
double brute_force_linf_primal(std::span<const double> z, double c);
/// Same, returning the optimal per-atom weights (used as the DRO oracle).
std::vector<double> linf_primal_weights(std::span<const double> z, double c);

/// Two-sided robust loss max_{s in +-1} CVaR(s * eps); sign ties go to +1.
struct RobustLoss {
    double value = 0.0;
    int sign = 1;
    CvarSolution plus, minus;
};
RobustLoss robust_loss_linf(std::span<const double> residuals, double c);
RobustLoss robust_loss_linf_weighted(std::span<const double> residuals,
                                     std::span<const double> weights, double c);

/// Dual of the chi-square-ball maximization: min_tau { tau +
/// sqrt(C2 * mean((z-tau)^2)) }. The bracket starts at [-max|z|, max|z|] and
/// the lower end expands adaptively (the minimizer escapes -max|z| when C2 is
/// close to 1); evaluation is cancellation-free so wide brackets stay exact.
double chi2_dual(std::span<const double> z, double c2);
double chi2_dual_weighted(std::span<const double> z, std::span<const double> weights, double c2);

/// Step schedule for the projected subgradient solvers: alpha_t =
/// alpha0/sqrt(t+1) by default, or geometric alpha0 * decay^t when decay > 0.
struct SubgradSchedule {
    int iterations = 2000;
    double alpha0 = 0.0;  // <= 0: use v_max / (C * max score dual norm)
    double decay = 0.0;

    double step(int t, double fallback_alpha0) const {
        const double a0 = alpha0 > 0.0 ? alpha0 : fallback_alpha0;
        if (decay > 0.0) return a0 * std::pow(decay, t);
        return a0 / std::sqrt(static_cast<double>(t) + 1.0);
    }
};

struct MinimizeResult {
    Eigen::VectorXd v;
    double loss = 0.0;
    std::vector<double> best_loss_curve;  // non-increasing by construction
    int sign = 1;
};

/// Projected subgradient descent on the empirical robust loss under the
/// bounded-density-ratio class. Each iterate re-solves the inner problem
/// (sign, tau, active set) exactly; the step uses g = -s (C/N) sum_active phi.
MinimizeResult drpu_minimize_linf(const std::vector<Eigen::VectorXd>& scores,
                                  const std::vector<double>& targets, double c, double v_max,
                                  Norm norm = Norm::L2, SubgradSchedule schedule = {},
                                  const Eigen::VectorXd* start = nullptr);

/// Same scheme for the chi-square class; the inner dual is smooth, so the
/// gradient is -s C2 mean((s eps - tau) phi)/sqrt(C2 mean((s eps - tau)^2)).
MinimizeResult drpu_minimize_chi2(const std::vector<Eigen::VectorXd>& scores,
                                  const std::vector<double>& targets, double c2, double v_max,
                                  Norm norm = Norm::L2, SubgradSchedule schedule = {},
                                  const Eigen::VectorXd* start = nullptr);

/// Population robust loss on finite support (exact weights instead of 1/N).
double population_robust_loss_linf(const std::vector<Eigen::VectorXd>& scores,
                                   const std::vector<double>& targets,
                                   std::span<const double> weights, double c,
                                   const Eigen::VectorXd& v);

}  // namespace oprl
