#include "oprl/actor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "oprl/rng.hpp"
#include "oprl/tolerances.hpp"

namespace oprl {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Dataset sample_dataset(const TabularMDP& mdp, const Occupancy& d_d, int n, std::uint64_t seed) {
    require(n >= 1, "sample_dataset: need at least one draw");
    CounterRng rng(seed);
    Dataset out;
    out.exhaustive = false;
    out.entries.reserve(n);
    for (int i = 0; i < n; ++i) {
        const int cell = rng.categorical(d_d.d_sa);
        out.entries.push_back({cell / mdp.n_actions, cell % mdp.n_actions, 1.0 / n});
    }
    return out;
}

Dataset exhaustive_dataset(const TabularMDP& mdp, const Occupancy& d_d) {
    Dataset out;
    out.exhaustive = true;
    out.entries.reserve(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) out.entries.push_back({s, a, d_d(s, a)});
    return out;
}

std::vector<double> proxy_advantage(const PolicyTable& pi, const std::vector<double>& f) {
    const std::vector<double> baseline = expected_under_policy(pi, f);
    std::vector<double> adv(f.size());
    for (int s = 0; s < pi.n_states; ++s)
        for (int a = 0; a < pi.n_actions; ++a) {
            const std::size_t i = static_cast<std::size_t>(s) * pi.n_actions + a;
            adv[i] = f[i] - baseline[s];
        }
    return adv;
}

PolicyTable pspi_step_tabular(const PolicyTable& pi, const std::vector<double>& f, double eta) {
    require(eta >= 0.0, "pspi_step_tabular: eta must be nonnegative");
    require(f.size() == pi.probs.size(), "pspi_step_tabular: f must have shape S x A");
    PolicyTable out = pi;
    for (int s = 0; s < pi.n_states; ++s) {
        double mx = -std::numeric_limits<double>::infinity();
        std::vector<double> logw(pi.n_actions);
        for (int a = 0; a < pi.n_actions; ++a) {
            const std::size_t i = static_cast<std::size_t>(s) * pi.n_actions + a;
            const double bump = std::clamp(eta * f[i], -tol::logit_clamp, tol::logit_clamp);
            logw[a] = pi.pi(s, a) > 0.0 ? std::log(pi.pi(s, a)) + bump
                                        : -std::numeric_limits<double>::infinity();
            mx = std::max(mx, logw[a]);
        }
        double z = 0.0;
        for (int a = 0; a < pi.n_actions; ++a) z += std::exp(logw[a] - mx);
        for (int a = 0; a < pi.n_actions; ++a) out.pi(s, a) = std::exp(logw[a] - mx) / z;
    }
    return out;
}

GaussianState pspi_step_gaussian(const GaussianState& state, const QuadraticCritic& critic,
                                 double eta) {
    require(eta >= 0.0, "pspi_step_gaussian: eta must be nonnegative");
    state.check_positive_definite();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(critic.q);
    require(es.eigenvalues().minCoeff() >= -1e-10,
            "pspi_step_gaussian: critic curvature must be positive semidefinite");
    GaussianState next;
    next.lambda = state.lambda + eta * critic.q;
    next.h = state.h + eta * critic.q * critic.u;
    next.check_positive_definite();
    return next;
}

double cmd_step_hardness(double p_k, double eta, double eps) {
    require(p_k > 0.0 && p_k < 1.0, "cmd_step_hardness: p must lie in (0,1)");
    require(eps > 0.0 && eps < 0.5, "cmd_step_hardness: eps must lie in (0, 1/2)");
    const double logit = std::log(p_k / (1.0 - p_k));
    return sigmoid(logit + eta * (1.0 - 2.0 * eps));
}

Eigen::VectorXd cmd_step_generic(const FinitePolicyFamily& family, const Eigen::VectorXd& theta_k,
                                 const std::vector<double>& f, double eta,
                                 const std::vector<double>& d_d_states, int inner_iters,
                                 double inner_lr) {
    family.check_theta(theta_k);
    require(eta > 0.0, "cmd_step_generic: eta must be positive");
    require(d_d_states.size() == static_cast<std::size_t>(family.n_states()),
            "cmd_step_generic: state distribution has wrong length");
    const int na = family.n_actions();

    auto objective = [&](const Eigen::VectorXd& theta) {
        double obj = 0.0;
        for (int s = 0; s < family.n_states(); ++s) {
            if (d_d_states[s] == 0.0) continue;
            double val = 0.0;
            for (int a = 0; a < na; ++a) {
                const double lp = family.log_prob(theta, s, a);
                const double p = std::exp(lp);
                const double lk = family.log_prob(theta_k, s, a);
                val += p * (f[static_cast<std::size_t>(s) * na + a] - (lp - lk) / eta);
            }
            obj += d_d_states[s] * val;
        }
        return obj;
    };
    auto gradient = [&](const Eigen::VectorXd& theta) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(family.dim());
        for (int s = 0; s < family.n_states(); ++s) {
            if (d_d_states[s] == 0.0) continue;
            for (int a = 0; a < na; ++a) {
                const double lp = family.log_prob(theta, s, a);
                const double p = std::exp(lp);
                const double lk = family.log_prob(theta_k, s, a);
                const double weight = f[static_cast<std::size_t>(s) * na + a] - (lp - lk) / eta;
                g += d_d_states[s] * p * weight * family.score(theta, s, a);
            }
        }
        return g;
    };

    Eigen::VectorXd theta = theta_k, best = theta_k;
    double best_obj = objective(theta_k);
    if (!std::isfinite(best_obj)) throw std::runtime_error("cmd_step_generic: non-finite objective");
    for (int it = 0; it < inner_iters; ++it) {
        theta += inner_lr * gradient(theta);
        const double obj = objective(theta);
        if (!std::isfinite(obj)) throw std::runtime_error("cmd_step_generic: non-finite objective");
        if (obj > best_obj) {
            best_obj = obj;
            best = theta;
        }
    }
    return best;
}

namespace {

struct RegressionData {
    std::vector<Eigen::VectorXd> scores;
    std::vector<double> targets;
    std::vector<double> weights;
    double total_weight = 0.0;
};

RegressionData build_regression(const Dataset& data, const FinitePolicyFamily& family,
                                const Eigen::VectorXd& theta_k, const std::vector<double>& f) {
    require(!data.entries.empty(), "regression needs at least one sample");
    const PolicyTable pi = family.to_policy_table(theta_k);
    const std::vector<double> adv = proxy_advantage(pi, f);
    RegressionData out;
    out.scores.reserve(data.entries.size());
    out.targets.reserve(data.entries.size());
    out.weights.reserve(data.entries.size());
    for (const auto& e : data.entries) {
        out.scores.push_back(family.score(theta_k, e.s, e.a));
        out.targets.push_back(adv[static_cast<std::size_t>(e.s) * family.n_actions() + e.a]);
        out.weights.push_back(e.weight);
        out.total_weight += e.weight;
    }
    return out;
}

}  // namespace

UpdateVector ols_update(const std::vector<Eigen::VectorXd>& scores,
                        const std::vector<double>& targets, const std::vector<double>& weights,
                        double v_max, double ridge, Norm norm) {
    require(ridge >= 0.0, "ols_update: ridge must be nonnegative");
    require(!scores.empty() && scores.size() == targets.size() && scores.size() == weights.size(),
            "ols_update: scores, targets and weights must have equal length");
    const int d = static_cast<int>(scores[0].size());
    double total_weight = 0.0;
    for (double w : weights) total_weight += w;
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd cross = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double w = weights[i] / total_weight;
        sigma += w * scores[i] * scores[i].transpose();
        cross += w * targets[i] * scores[i];
    }
    Eigen::VectorXd v;
    if (ridge > 0.0) {
        v = (sigma + ridge * Eigen::MatrixXd::Identity(d, d)).partialPivLu().solve(cross);
    } else {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);
        if (lu.rank() < d)
            throw std::runtime_error("lspu_ols: singular score covariance (rank " +
                                     std::to_string(lu.rank()) + " < " + std::to_string(d) + ")");
        v = lu.solve(cross);
    }
    const double nrm = norm_of(v, norm);
    if (nrm > v_max) v *= v_max / nrm;

    UpdateVector out;
    out.v = v;
    out.v_max = v_max;
    out.rule_id = "lspu-ols";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double r = targets[i] - v.dot(scores[i]);
        out.loss += weights[i] / total_weight * r * r;
    }
    return out;
}

UpdateVector lspu_ols(const Dataset& data, const FinitePolicyFamily& family,
                      const Eigen::VectorXd& theta_k, const std::vector<double>& f, double v_max,
                      double ridge, Norm norm) {
    const RegressionData reg = build_regression(data, family, theta_k, f);
    return ols_update(reg.scores, reg.targets, reg.weights, v_max, ridge, norm);
}

UpdateVector lspu_sgd(const Dataset& data, const FinitePolicyFamily& family,
                      const Eigen::VectorXd& theta_k, const std::vector<double>& f, double v_max,
                      double alpha) {
    require(!data.exhaustive, "lspu_sgd: needs an i.i.d. sample stream, not exhaustive weights");
    require(alpha > 0.0, "lspu_sgd: alpha must be positive");
    const RegressionData reg = build_regression(data, family, theta_k, f);
    const int d = family.dim();
    const std::size_t n = reg.scores.size();

    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd& phi = reg.scores[i];
        v = project_ball(v - 2.0 * alpha * (v.dot(phi) - reg.targets[i]) * phi, v_max, Norm::L2);
        sum += v;
    }
    UpdateVector out;
    out.v = sum / static_cast<double>(n);
    out.v_max = v_max;
    out.rule_id = "lspu-sgd";
    for (std::size_t i = 0; i < n; ++i) {
        const double r = reg.targets[i] - out.v.dot(reg.scores[i]);
        out.loss += r * r / static_cast<double>(n);
    }
    return out;
}

UpdateVector mean_match(double m_k, const Eigen::VectorXd& mu_k, double v_max, Norm norm) {
    require(mu_k.allFinite(), "mean_match: mu must be finite");
    UpdateVector out;
    out.v_max = v_max;
    out.rule_id = "mean-match";
    const double mu_dual = dual_norm_of(mu_k, norm);
    if (mu_dual == 0.0) {
        out.v = Eigen::VectorXd::Zero(mu_k.size());
        out.irreducible_residual = std::abs(m_k);
        out.degenerate = m_k != 0.0;
        out.loss = std::abs(m_k);
        return out;
    }
    const double reach = v_max * mu_dual;
    const double matched = std::clamp(m_k, -reach, reach);
    out.v = (matched / mu_dual) * dual_align(mu_k, norm);
    out.loss = std::abs(m_k - matched);
    return out;
}

double cfa_error(const TabularMDP& mdp, const Occupancy& d_cp, const FinitePolicyFamily& family,
                 const Eigen::VectorXd& theta_k, const std::vector<double>& f,
                 const Eigen::VectorXd& v) {
    const PolicyTable pi = family.to_policy_table(theta_k);
    const std::vector<double> adv = proxy_advantage(pi, f);
    double acc = 0.0;
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double w = d_cp(s, a);
            if (w == 0.0) continue;
            acc += w * (adv[mdp.sa(s, a)] - v.dot(family.score(theta_k, s, a)));
        }
    return acc;
}

MeanStats mean_statistics(const TabularMDP& mdp, const Occupancy& d_cp,
                          const FinitePolicyFamily& family, const Eigen::VectorXd& theta_k,
                          const std::vector<double>& f) {
    const PolicyTable pi = family.to_policy_table(theta_k);
    const std::vector<double> adv = proxy_advantage(pi, f);
    MeanStats out;
    out.mu = Eigen::VectorXd::Zero(family.dim());
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double w = d_cp(s, a);
            if (w == 0.0) continue;
            out.m += w * adv[mdp.sa(s, a)];
            out.mu += w * family.score(theta_k, s, a);
        }
    return out;
}

double bc_objective(const FinitePolicyFamily& family, const Eigen::VectorXd& theta,
                    const PolicyTable& pi_cp, const std::vector<double>& state_dist) {
    const KlResult kl = kl_under(pi_cp, family.to_policy_table(theta), state_dist);
    return kl.value;
}

FeatureCoverage feature_coverage(const TabularMDP& mdp, const Occupancy& d_cp,
                                 const Occupancy& d_d, const FinitePolicyFamily& family,
                                 const std::vector<Eigen::VectorXd>& thetas) {
    require(!thetas.empty(), "feature_coverage: need at least one parameter vector");
    const int d = family.dim();
    FeatureCoverage out;
    for (const Eigen::VectorXd& theta : thetas) {
        Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a) {
                const Eigen::VectorXd phi = family.score(theta, s, a);
                if (d_d(s, a) > 0.0) sigma += d_d(s, a) * phi * phi.transpose();
                if (d_cp(s, a) > 0.0) mu += d_cp(s, a) * phi;
            }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);
        double value;
        if (lu.rank() < d) {
            out.pseudo_inverse = true;
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(sigma);
            value = mu.dot(cod.pseudoInverse() * mu);
        } else {
            value = mu.dot(lu.solve(mu));
        }
        out.value = std::max(out.value, value);
    }
    return out;
}

const char* rule_name(UpdateRule r) {
    switch (r) {
        case UpdateRule::Pspi: return "pspi";
        case UpdateRule::Cmd: return "cmd";
        case UpdateRule::LspuOls: return "lspu-ols";
        case UpdateRule::LspuSgd: return "lspu-sgd";
        case UpdateRule::DrpuLinf: return "drpu-linf";
        case UpdateRule::DrpuChi2: return "drpu-chi2";
        case UpdateRule::MeanMatch: return "mean-match";
    }
    return "?";
}

std::optional<UpdateRule> rule_from_name(const std::string& name) {
    for (UpdateRule r : {UpdateRule::Pspi, UpdateRule::Cmd, UpdateRule::LspuOls,
                         UpdateRule::LspuSgd, UpdateRule::DrpuLinf, UpdateRule::DrpuChi2,
                         UpdateRule::MeanMatch})
        if (name == rule_name(r)) return r;
    return std::nullopt;
}

namespace {

double regret_term_under(const Occupancy& d_cp, const PolicyTable& pi_cp, const PolicyTable& pi_k,
                         const std::vector<double>& f) {
    const std::vector<double> f_cp = expected_under_policy(pi_cp, f);
    const std::vector<double> f_k = expected_under_policy(pi_k, f);
    double acc = 0.0;
    for (int s = 0; s < pi_cp.n_states; ++s) acc += d_cp.d_s[s] * (f_cp[s] - f_k[s]);
    return acc;
}

}  // namespace

RunResult run_template(const TemplateConfig& config) {
    config.mdp.validate();
    config.pi_cp.validate();
    require(config.iterations >= 1, "run_template: need at least one iteration");
    const bool parametric = config.rule != UpdateRule::Pspi;
    if (parametric) {
        require(config.family != nullptr, "run_template: parametric rules need a policy family");
        require(config.family->n_states() == config.mdp.n_states &&
                    config.family->n_actions() == config.mdp.n_actions,
                "run_template: family shape does not match the MDP");
    }
    const TabularMDP& mdp = config.mdp;
    const double v_max = mdp.v_max();
    const Occupancy d_cp = occupancy(mdp, config.pi_cp);
    const Occupancy d_d = config.d_d ? *config.d_d : d_cp;

    const bool needs_data = config.rule == UpdateRule::LspuOls ||
                            config.rule == UpdateRule::LspuSgd ||
                            config.rule == UpdateRule::DrpuLinf ||
                            config.rule == UpdateRule::DrpuChi2;
    Dataset data;
    if (needs_data) {
        if (config.rule != UpdateRule::LspuOls)
            require(!config.exhaustive, std::string(rule_name(config.rule)) +
                                            " consumes an i.i.d. sample stream; disable exhaustive "
                                            "mode");
        data = config.exhaustive ? exhaustive_dataset(mdp, d_d)
                                 : sample_dataset(mdp, d_d, config.n_samples, config.seed);
    }

    Eigen::VectorXd theta = config.theta1;
    PolicyTable cur = parametric ? config.family->to_policy_table(theta)
                                 : (config.pi1.probs.empty()
                                        ? PolicyTable::uniform(mdp.n_states, mdp.n_actions)
                                        : config.pi1);

    RunResult result;
    const KlResult kl = kl_under(config.pi_cp, cur, d_cp.d_s);
    result.kl_prior = kl.value;
    double eta = config.eta;
    if (config.eta_auto) {
        require(kl.finite, "run_template: KL(pi_cp||pi_1) is infinite, formula step size undefined");
        const double k = config.iterations;
        if (config.rule == UpdateRule::Pspi) {
            eta = std::sqrt(8.0 * kl.value / (k * v_max * v_max));
        } else {
            const double beta = config.family->smoothness_beta();
            eta = std::sqrt(2.0 * kl.value / (beta * k * v_max * v_max));
        }
    }
    result.eta = eta;

    const double inv_k = 1.0 / config.iterations;
    for (int k = 1; k <= config.iterations; ++k) {
        try {
            const ValueBundle vb = eval_policy(mdp, cur);
            CriticFunction critic;
            if (config.oracle == OracleKind::Exact) {
                critic.f = vb.q;
                critic.kind = OracleKind::Exact;
            } else {
                critic = perturbed_oracle(mdp, cur, config.pessimism);
            }
            const std::vector<double>& f = critic.f;

            IterationRecord row;
            row.k = k;
            row.eta = eta;
            row.j_pi = vb.return_;
            row.regret_term = regret_term_under(d_cp, config.pi_cp, cur, f);

            Eigen::VectorXd v;
            Eigen::VectorXd cmd_next;
            if (parametric) {
                const MeanStats stats = mean_statistics(mdp, d_cp, *config.family, theta, f);
                row.m = stats.m;
                row.mu_dual_norm = dual_norm_of(stats.mu, config.norm);
                row.bc_phi = bc_objective(*config.family, theta, config.pi_cp, d_cp.d_s);

                switch (config.rule) {
                    case UpdateRule::MeanMatch: {
                        const UpdateVector u = mean_match(stats.m, stats.mu, v_max, config.norm);
                        v = u.v;
                        row.loss = u.loss;
                        break;
                    }
                    case UpdateRule::LspuOls: {
                        const UpdateVector u = lspu_ols(data, *config.family, theta, f, v_max,
                                                        config.ridge, config.norm);
                        v = u.v;
                        row.loss = u.loss;
                        break;
                    }
                    case UpdateRule::LspuSgd: {
                        double alpha = config.sgd_alpha;
                        if (alpha <= 0.0) {
                            const double g = config.family->lipschitz_g();
                            alpha = v_max / (2.0 * g * (g * v_max + v_max) *
                                             std::sqrt(static_cast<double>(data.entries.size())));
                        }
                        const UpdateVector u =
                            lspu_sgd(data, *config.family, theta, f, v_max, alpha);
                        v = u.v;
                        row.loss = u.loss;
                        break;
                    }
                    case UpdateRule::DrpuLinf:
                    case UpdateRule::DrpuChi2: {
                        std::vector<Eigen::VectorXd> scores;
                        std::vector<double> targets;
                        scores.reserve(data.entries.size());
                        targets.reserve(data.entries.size());
                        const std::vector<double> adv = proxy_advantage(cur, f);
                        for (const auto& e : data.entries) {
                            scores.push_back(config.family->score(theta, e.s, e.a));
                            targets.push_back(adv[mdp.sa(e.s, e.a)]);
                        }
                        const MinimizeResult mr =
                            config.rule == UpdateRule::DrpuLinf
                                ? drpu_minimize_linf(scores, targets, config.c, v_max, config.norm,
                                                     config.schedule)
                                : drpu_minimize_chi2(scores, targets, config.c2, v_max,
                                                     config.norm, config.schedule);
                        v = mr.v;
                        row.loss = mr.loss;
                        break;
                    }
                    case UpdateRule::Cmd: {
                        cmd_next = cmd_step_generic(*config.family, theta, f, eta, d_d.d_s,
                                                    config.cmd_inner_iters, config.cmd_inner_lr);
                        v = eta > 0.0 ? Eigen::VectorXd((cmd_next - theta) / eta)
                                      : Eigen::VectorXd::Zero(config.family->dim());
                        break;
                    }
                    case UpdateRule::Pspi: break;  // unreachable
                }
                row.err = cfa_error(mdp, d_cp, *config.family, theta, f, v);
                row.v_norm = norm_of(v, config.norm);
            }

            if (!std::isfinite(row.j_pi) || !std::isfinite(row.regret_term) ||
                !std::isfinite(row.err) || !std::isfinite(row.loss))
                throw std::runtime_error("non-finite iteration metric");

            result.rows.push_back(row);
            result.avg_regret += row.regret_term * inv_k;
            result.j_mixture += row.j_pi * inv_k;
            if (config.keep_iterates) {
                result.policies.push_back(cur);
                result.critics.push_back(f);
            }

            if (parametric) {
                if (config.rule == UpdateRule::Cmd && eta > 0.0)
                    theta = cmd_next;
                else
                    theta += eta * v;
                cur = config.family->to_policy_table(theta);
            } else {
                cur = pspi_step_tabular(cur, f, eta);
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("run_template failed at iteration " + std::to_string(k) +
                                     ": " + e.what());
        }
    }
    result.theta_final = theta;
    return result;
}

}  // namespace oprl
