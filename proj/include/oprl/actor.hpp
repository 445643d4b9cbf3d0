#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oprl/critic.hpp"
#include "oprl/dro.hpp"
#include "oprl/mdp.hpp"
#include "oprl/norms.hpp"
#include "oprl/policy.hpp"

namespace oprl {

/// Update direction with its norm budget and provenance.
struct UpdateVector {
    Eigen::VectorXd v;
    double v_max = 0.0;
    std::string rule_id;
    double loss = 0.0;                  // achieved loss of the producing rule
    double irreducible_residual = 0.0;  // mean-matching with mu = 0
    bool degenerate = false;
};

/// One weighted data point (s, a); i.i.d. draws carry weight 1/N.
struct WeightedSample {
    int s = 0;
    int a = 0;
    double weight = 0.0;
};

struct Dataset {
    std::vector<WeightedSample> entries;
    bool exhaustive = false;
};

/// N counter-seeded i.i.d. draws from the categorical d_d over (s, a).
Dataset sample_dataset(const TabularMDP& mdp, const Occupancy& d_d, int n, std::uint64_t seed);
/// Every (s, a) with its exact weight (the infinite-data limit).
Dataset exhaustive_dataset(const TabularMDP& mdp, const Occupancy& d_d);

/// Proxy advantage A(s,a) = f(s,a) - f(s,pi) induced by a critic table.
std::vector<double> proxy_advantage(const PolicyTable& pi, const std::vector<double>& f);

/// Multiplicative-weights step: pi'(a|s) proportional to pi(a|s) exp(eta f(s,a)).
PolicyTable pspi_step_tabular(const PolicyTable& pi, const std::vector<double>& f, double eta);

/// Concave quadratic critic f(a) = -1/2 (a-u)^T Q (a-u) + c with Q PSD.
struct QuadraticCritic {
    Eigen::MatrixXd q;
    Eigen::VectorXd u;
    double c = 0.0;
};

/// Multiplicative-weights step in natural parameters: the density product
/// pi * exp(eta f) is Gaussian with Lambda' = Lambda + eta Q, h' = h + eta Q u.
GaussianState pspi_step_gaussian(const GaussianState& state, const QuadraticCritic& critic,
                                 double eta);

/// Closed-form contextual mirror-descent step on the two-state coupled
/// bandit: logit(p') = logit(p) + eta (1 - 2 eps).
double cmd_step_hardness(double p_k, double eta, double eps);

/// Contextual mirror descent for a general finite family: fixed-budget
/// gradient ascent on E_{s~d_D}[f(s,pi_theta) - KL(pi_theta||pi_k)/eta],
/// returning the best iterate by objective value.
Eigen::VectorXd cmd_step_generic(const FinitePolicyFamily& family, const Eigen::VectorXd& theta_k,
                                 const std::vector<double>& f, double eta,
                                 const std::vector<double>& d_d_states, int inner_iters = 200,
                                 double inner_lr = 0.1);

/// Least-square policy update: v = (Sigma_hat + ridge I)^-1 mean(score * A),
/// radially rescaled onto the v_max ball when it overshoots. Throws on a
/// singular covariance with ridge = 0, naming the deficient rank.
UpdateVector lspu_ols(const Dataset& data, const FinitePolicyFamily& family,
                      const Eigen::VectorXd& theta_k, const std::vector<double>& f, double v_max,
                      double ridge = 0.0, Norm norm = Norm::L2);

/// Normal-equations core of lspu_ols on raw (score, target, weight) triples.
UpdateVector ols_update(const std::vector<Eigen::VectorXd>& scores,
                        const std::vector<double>& targets, const std::vector<double>& weights,
                        double v_max, double ridge = 0.0, Norm norm = Norm::L2);

/// Projected-SGD variant: one pass over the samples in order from v = 0,
/// returning the running average of the iterates.
UpdateVector lspu_sgd(const Dataset& data, const FinitePolicyFamily& family,
                      const Eigen::VectorXd& theta_k, const std::vector<double>& f, double v_max,
                      double alpha);

/// Closed-form mean matching: v = t u with u the unit dual-aligned direction
/// and t chosen so v.mu equals m clipped to [-v_max ||mu||_*, v_max ||mu||_*].
UpdateVector mean_match(double m_k, const Eigen::VectorXd& mu_k, double v_max,
                        Norm norm = Norm::L2);

/// Exact compatible-function-approximation error
/// E_{(s,a)~d_cp}[A(s,a) - v.score(s,a)] (signed).
double cfa_error(const TabularMDP& mdp, const Occupancy& d_cp, const FinitePolicyFamily& family,
                 const Eigen::VectorXd& theta_k, const std::vector<double>& f,
                 const Eigen::VectorXd& v);

/// Expected advantage m = E_{d_cp}[A] and mean score mu = E_{d_cp}[score].
struct MeanStats {
    double m = 0.0;
    Eigen::VectorXd mu;
};
MeanStats mean_statistics(const TabularMDP& mdp, const Occupancy& d_cp,
                          const FinitePolicyFamily& family, const Eigen::VectorXd& theta_k,
                          const std::vector<double>& f);

/// Behavior-cloning objective Phi(theta) = E_{s~dist}[KL(pi_cp || pi_theta)].
double bc_objective(const FinitePolicyFamily& family, const Eigen::VectorXd& theta,
                    const PolicyTable& pi_cp, const std::vector<double>& state_dist);

struct FeatureCoverage {
    double value = 0.0;
    bool pseudo_inverse = false;  // set when a score covariance was singular
};

/// max_k E_{d_cp}[score_k]^T (Sigma_D^k)^-1 E_{d_cp}[score_k]; diagnostic only.
FeatureCoverage feature_coverage(const TabularMDP& mdp, const Occupancy& d_cp,
                                 const Occupancy& d_d, const FinitePolicyFamily& family,
                                 const std::vector<Eigen::VectorXd>& thetas);

// ---------------------------------------------------------------------------
// Actor-critic template loop.

enum class UpdateRule { Pspi, Cmd, LspuOls, LspuSgd, DrpuLinf, DrpuChi2, MeanMatch };

const char* rule_name(UpdateRule r);
std::optional<UpdateRule> rule_from_name(const std::string& name);

struct TemplateConfig {
    TabularMDP mdp;
    std::shared_ptr<const FinitePolicyFamily> family;  // unused by the Pspi rule
    Eigen::VectorXd theta1;
    PolicyTable pi1;    // Pspi start (defaults to uniform when empty)
    PolicyTable pi_cp;  // comparator
    UpdateRule rule = UpdateRule::MeanMatch;
    int iterations = 80;

    bool eta_auto = true;  // theorem step size from KL(pi_cp||pi_1)
    double eta = 0.0;

    OracleKind oracle = OracleKind::Exact;
    std::vector<double> pessimism;  // used when oracle == Perturbed

    // Data distribution for sample-based rules; empty means d^{pi_cp}.
    std::optional<Occupancy> d_d;
    bool exhaustive = true;
    int n_samples = 512;
    std::uint64_t seed = 0;

    double c = 2.0;
    double c2 = 2.0;
    Norm norm = Norm::L2;
    SubgradSchedule schedule;
    double ridge = 0.0;
    double sgd_alpha = 0.0;  // <= 0: V_max / (2G (G V_max + V_max) sqrt(N))
    int cmd_inner_iters = 200;
    double cmd_inner_lr = 0.1;

    bool keep_iterates = true;
};

struct IterationRecord {
    int k = 0;
    double j_pi = 0.0;
    double regret_term = 0.0;  // E_{s~d_cp}[f_k(s,pi_cp) - f_k(s,pi_k)]
    double err = 0.0;          // CFA error of the produced v
    double loss = 0.0;
    double eta = 0.0;
    double m = 0.0;            // E_{d_cp}[A_k]
    double mu_dual_norm = 0.0;
    double bc_phi = 0.0;       // behavior-cloning objective at theta_k
    double v_norm = 0.0;
};

struct RunResult {
    std::vector<IterationRecord> rows;
    double avg_regret = 0.0;
    double j_mixture = 0.0;  // uniform trajectory mixture: mean of J(pi_k)
    double kl_prior = 0.0;   // KL(pi_cp || pi_1) under d^{pi_cp}
    double eta = 0.0;
    std::vector<PolicyTable> policies;
    std::vector<std::vector<double>> critics;
    Eigen::VectorXd theta_final;
};

/// Runs K rounds of critic -> update -> parameter step, recording exact
/// per-iteration metrics. Any sub-operation failure aborts with the
/// offending iteration index in the message.
RunResult run_template(const TemplateConfig& config);

}  // namespace oprl
