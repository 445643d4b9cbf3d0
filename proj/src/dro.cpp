#include "oprl/dro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace oprl {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::vector<int> descending_order(std::span<const double> z) {
    std::vector<int> idx(z.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Stable: equal residuals keep their original index order.
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return z[a] > z[b]; });
    return idx;
}

CvarSolution cvar_on_sorted(std::span<const double> z, const std::vector<int>& order,
                            const std::vector<double>& w, double c, int k_star) {
    const std::size_t n = z.size();
    // Objective at breakpoint tau = z_(j), evaluated through prefix sums:
    // tau + C sum_{i<j} w_i (z_(i) - tau). Tied values contribute zero hinge,
    // so the formula is exact regardless of ties. The objective is convex
    // piecewise linear, hence minimized at a breakpoint; ties resolve to the
    // smallest tau.
    double best = std::numeric_limits<double>::infinity();
    double best_tau = 0.0;
    double wsum = 0.0, wzsum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double tau = z[order[j]];
        const double g = tau + c * (wzsum - wsum * tau);
        if (g <= best) {
            best = g;
            best_tau = tau;
        }
        wsum += w[order[j]];
        wzsum += w[order[j]] * z[order[j]];
    }
    CvarSolution out;
    out.value = best;
    out.tau_hat = best_tau;
    out.k_star = k_star;
    double tail_mass = 0.0;
    for (std::size_t j = 0; j < n && z[order[j]] > best_tau; ++j) {
        out.active.push_back(order[j]);
        tail_mass += w[order[j]];
    }
    out.tail_fraction = tail_mass;
    return out;
}

}  // namespace

CvarSolution empirical_cvar_one_sided(std::span<const double> z, double c) {
    require(!z.empty(), "empirical_cvar_one_sided: empty sample");
    require(c >= 1.0, "empirical_cvar_one_sided: C must be >= 1");
    const std::size_t n = z.size();
    const std::vector<int> order = descending_order(z);
    const std::vector<double> w(n, 1.0 / static_cast<double>(n));
    const int k_star = static_cast<int>(std::ceil(static_cast<double>(n) / c - 1e-9));
    return cvar_on_sorted(z, order, w, c, k_star);
}

CvarSolution population_cvar_one_sided(std::span<const double> z, std::span<const double> weights,
                                       double c) {
    require(!z.empty(), "population_cvar_one_sided: empty support");
    require(z.size() == weights.size(), "population_cvar_one_sided: weight shape mismatch");
    require(c >= 1.0, "population_cvar_one_sided: C must be >= 1");
    const std::vector<int> order = descending_order(z);
    const std::vector<double> w(weights.begin(), weights.end());
    return cvar_on_sorted(z, order, w, c, 0);
}

std::vector<double> linf_primal_weights(std::span<const double> z, double c) {
    require(!z.empty(), "linf_primal_weights: empty sample");
    require(c >= 1.0, "linf_primal_weights: C must be >= 1");
    const std::size_t n = z.size();
    const std::vector<int> order = descending_order(z);
    const int full = static_cast<int>(std::floor(static_cast<double>(n) / c + 1e-9));
    std::vector<double> w(n, 0.0);
    for (int j = 0; j < full; ++j) w[order[j]] = c;
    const double leftover = std::max(0.0, static_cast<double>(n) - c * full);
    if (full < static_cast<int>(n) && leftover > 0.0) w[order[full]] = leftover;
    return w;
}

double brute_force_linf_primal(std::span<const double> z, double c) {
    const std::vector<double> w = linf_primal_weights(z, c);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) acc += w[i] * z[i];
    return acc / static_cast<double>(z.size());
}

RobustLoss robust_loss_linf(std::span<const double> residuals, double c) {
    std::vector<double> neg(residuals.size());
    for (std::size_t i = 0; i < residuals.size(); ++i) neg[i] = -residuals[i];
    RobustLoss out;
    out.plus = empirical_cvar_one_sided(residuals, c);
    out.minus = empirical_cvar_one_sided(neg, c);
    out.sign = out.plus.value >= out.minus.value ? 1 : -1;
    out.value = std::max(out.plus.value, out.minus.value);
    return out;
}

RobustLoss robust_loss_linf_weighted(std::span<const double> residuals,
                                     std::span<const double> weights, double c) {
    std::vector<double> neg(residuals.size());
    for (std::size_t i = 0; i < residuals.size(); ++i) neg[i] = -residuals[i];
    RobustLoss out;
    out.plus = population_cvar_one_sided(residuals, weights, c);
    out.minus = population_cvar_one_sided(neg, weights, c);
    out.sign = out.plus.value >= out.minus.value ? 1 : -1;
    out.value = std::max(out.plus.value, out.minus.value);
    return out;
}

namespace {

struct Chi2Dual {
    double value = 0.0;
    double tau = 0.0;
};

// Objective in terms of (mean, second central moment): tau +
// sqrt(C2 ((m-tau)^2 + s2)) evaluated without cancellation for tau << m.
double chi2_objective(double m, double s2, double c2, double tau) {
    const double u = m - tau;
    if (u <= 0.0) return tau + std::sqrt(c2 * (u * u + s2));
    const double root = std::sqrt(c2 * (u * u + s2));
    // g = m + (root - u), with the difference formed stably.
    const double diff = ((c2 - 1.0) * u * u + c2 * s2) / (root + u);
    return m + diff;
}

double chi2_slope(double m, double s2, double c2, double tau) {
    const double u = m - tau;
    const double root = std::sqrt(c2 * (u * u + s2));
    if (root == 0.0) return u >= 0.0 ? 1.0 - std::sqrt(c2) : 1.0 + std::sqrt(c2);
    return 1.0 - c2 * u / root;
}

Chi2Dual chi2_dual_moments(double m, double s2, double b, double c2) {
    double hi = b;
    double lo = -std::abs(b) - 1.0;
    // Convexity: slope(lo) > 0 means the minimizer lies below lo; widen.
    const double cap = 1e13 * (std::abs(b) + 1.0);
    while (chi2_slope(m, s2, c2, lo) > 0.0 && std::abs(lo) < cap) lo = 2.0 * lo - hi;

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = chi2_objective(m, s2, c2, x1);
    double f2 = chi2_objective(m, s2, c2, x2);
    while (hi - lo > 1e-12) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = chi2_objective(m, s2, c2, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = chi2_objective(m, s2, c2, x2);
        }
    }
    const double tau = 0.5 * (lo + hi);
    return {chi2_objective(m, s2, c2, tau), tau};
}

Chi2Dual chi2_dual_full(std::span<const double> z, std::span<const double> weights, double c2) {
    require(!z.empty(), "chi2_dual: empty sample");
    require(c2 >= 1.0, "chi2_dual: C2 must be >= 1");
    double m = 0.0, b = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        m += weights[i] * z[i];
        b = std::max(b, std::abs(z[i]));
    }
    double s2 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s2 += weights[i] * (z[i] - m) * (z[i] - m);
    return chi2_dual_moments(m, s2, b, c2);
}

}  // namespace

double chi2_dual(std::span<const double> z, double c2) {
    const std::vector<double> w(z.size(), 1.0 / static_cast<double>(z.size()));
    return chi2_dual_full(z, w, c2).value;
}

double chi2_dual_weighted(std::span<const double> z, std::span<const double> weights, double c2) {
    return chi2_dual_full(z, weights, c2).value;
}

namespace {

struct LossEval {
    double value = 0.0;
    int sign = 1;
    Eigen::VectorXd subgrad;
};

using LossFn = std::function<LossEval(const Eigen::VectorXd&)>;

MinimizeResult minimize_with_subgradient(const LossFn& loss, int dim, double v_max, Norm norm,
                                         const SubgradSchedule& schedule, double fallback_alpha0,
                                         const Eigen::VectorXd* start) {
    Eigen::VectorXd v = start ? project_ball(*start, v_max, norm) : Eigen::VectorXd::Zero(dim);
    MinimizeResult out;
    out.v = v;
    out.loss = std::numeric_limits<double>::infinity();
    out.best_loss_curve.reserve(schedule.iterations + 1);
    for (int t = 0; t <= schedule.iterations; ++t) {
        const LossEval e = loss(v);
        if (!std::isfinite(e.value)) throw std::runtime_error("robust loss became non-finite");
        if (e.value < out.loss) {
            out.loss = e.value;
            out.v = v;
            out.sign = e.sign;
        }
        out.best_loss_curve.push_back(out.loss);
        if (t == schedule.iterations) break;
        v = project_ball(v - schedule.step(t, fallback_alpha0) * e.subgrad, v_max, norm);
    }
    return out;
}

double max_score_dual_norm(const std::vector<Eigen::VectorXd>& scores, Norm norm) {
    double g = 0.0;
    for (const auto& phi : scores) g = std::max(g, dual_norm_of(phi, norm));
    return g > 0.0 ? g : 1.0;
}

}  // namespace

MinimizeResult drpu_minimize_linf(const std::vector<Eigen::VectorXd>& scores,
                                  const std::vector<double>& targets, double c, double v_max,
                                  Norm norm, SubgradSchedule schedule,
                                  const Eigen::VectorXd* start) {
    require(!scores.empty() && scores.size() == targets.size(),
            "drpu_minimize_linf: need matching scores and targets");
    const int dim = static_cast<int>(scores[0].size());
    const std::size_t n = scores.size();
    const double fallback = v_max / (c * max_score_dual_norm(scores, norm));

    LossFn loss = [&](const Eigen::VectorXd& v) {
        std::vector<double> eps(n);
        for (std::size_t i = 0; i < n; ++i) eps[i] = targets[i] - v.dot(scores[i]);
        const RobustLoss rl = robust_loss_linf(eps, c);
        // Danskin on the primal max: the loss is max over (sign, weights) of
        // a v-linear function, so -s E[w* phi] with the maximizing weights is
        // always a subgradient. (The tau-side active set drops boundary
        // atoms and can fail to be one, e.g. at C = 1.)
        std::vector<double> side(n);
        for (std::size_t i = 0; i < n; ++i) side[i] = rl.sign * eps[i];
        const std::vector<double> w = linf_primal_weights(side, c);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
        for (std::size_t i = 0; i < n; ++i) g += w[i] * scores[i];
        g *= -static_cast<double>(rl.sign) / static_cast<double>(n);
        return LossEval{rl.value, rl.sign, std::move(g)};
    };
    return minimize_with_subgradient(loss, dim, v_max, norm, schedule, fallback, start);
}

MinimizeResult drpu_minimize_chi2(const std::vector<Eigen::VectorXd>& scores,
                                  const std::vector<double>& targets, double c2, double v_max,
                                  Norm norm, SubgradSchedule schedule,
                                  const Eigen::VectorXd* start) {
    require(!scores.empty() && scores.size() == targets.size(),
            "drpu_minimize_chi2: need matching scores and targets");
    const int dim = static_cast<int>(scores[0].size());
    const std::size_t n = scores.size();
    const std::vector<double> w(n, 1.0 / static_cast<double>(n));
    const double fallback = v_max / (c2 * max_score_dual_norm(scores, norm));

    LossFn loss = [&](const Eigen::VectorXd& v) {
        std::vector<double> eps(n), neg(n);
        for (std::size_t i = 0; i < n; ++i) {
            eps[i] = targets[i] - v.dot(scores[i]);
            neg[i] = -eps[i];
        }
        const Chi2Dual plus = chi2_dual_full(eps, w, c2);
        const Chi2Dual minus = chi2_dual_full(neg, w, c2);
        const int sign = plus.value >= minus.value ? 1 : -1;
        const Chi2Dual& side = sign > 0 ? plus : minus;
        // d/dv of tau + sqrt(C2 mean((s eps - tau)^2)) at the optimal tau.
        double sq = 0.0;
        Eigen::VectorXd cross = Eigen::VectorXd::Zero(dim);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = sign * eps[i] - side.tau;
            sq += w[i] * r * r;
            cross += w[i] * r * scores[i];
        }
        Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
        const double root = std::sqrt(c2 * sq);
        if (root > 0.0) g = -sign * c2 / root * cross;
        return LossEval{std::max(plus.value, minus.value), sign, std::move(g)};
    };
    return minimize_with_subgradient(loss, dim, v_max, norm, schedule, fallback, start);
}

double population_robust_loss_linf(const std::vector<Eigen::VectorXd>& scores,
                                   const std::vector<double>& targets,
                                   std::span<const double> weights, double c,
                                   const Eigen::VectorXd& v) {
    std::vector<double> eps(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) eps[i] = targets[i] - v.dot(scores[i]);
    return robust_loss_linf_weighted(eps, weights, c).value;
}

}  // namespace oprl
