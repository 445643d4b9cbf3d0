#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oprl/mdp.hpp"

namespace oprl {

struct KlResult {
    double value = 0.0;
    bool finite = true;  // false when q has zero mass where p is positive
};

/// Parametric policy family over a finite action set. Parameters live in
/// R^d; log-probabilities are G-Lipschitz and beta-smooth in theta.
class FinitePolicyFamily {
public:
    virtual ~FinitePolicyFamily() = default;

    virtual int dim() const = 0;
    virtual int n_states() const = 0;
    virtual int n_actions() const = 0;
    virtual std::string name() const = 0;

    /// log pi_theta(a|s); logits are clamped to +-500 before normalization.
    virtual double log_prob(const Eigen::VectorXd& theta, int s, int a) const = 0;

    /// grad_theta log pi_theta(a|s).
    virtual Eigen::VectorXd score(const Eigen::VectorXd& theta, int s, int a) const = 0;

    virtual double lipschitz_g() const = 0;
    virtual double smoothness_beta() const = 0;

    double prob(const Eigen::VectorXd& theta, int s, int a) const;
    PolicyTable to_policy_table(const Eigen::VectorXd& theta) const;
    std::vector<std::vector<Eigen::VectorXd>> score_table(const Eigen::VectorXd& theta) const;

    void check_theta(const Eigen::VectorXd& theta) const;
};

/// pi_theta(a|s) proportional to exp(theta(s,a)); parameters indexed s*A+a.
class TabularSoftmaxFamily final : public FinitePolicyFamily {
public:
    TabularSoftmaxFamily(int n_states, int n_actions);

    int dim() const override { return n_states_ * n_actions_; }
    int n_states() const override { return n_states_; }
    int n_actions() const override { return n_actions_; }
    std::string name() const override { return "tabular_softmax"; }
    double log_prob(const Eigen::VectorXd& theta, int s, int a) const override;
    Eigen::VectorXd score(const Eigen::VectorXd& theta, int s, int a) const override;
    double lipschitz_g() const override { return 2.0; }  // 2 max||phi||, phi one-hot
    // quarter squared feature diameter; one-hot pairs are sqrt(2) apart
    double smoothness_beta() const override { return 0.5; }

private:
    int n_states_, n_actions_;
};

/// pi_theta(a|s) proportional to exp(theta . phi(s,a)) for a user feature map.
class LogLinearFamily : public FinitePolicyFamily {
public:
    explicit LogLinearFamily(std::vector<std::vector<Eigen::VectorXd>> features);

    int dim() const override { return dim_; }
    int n_states() const override { return static_cast<int>(features_.size()); }
    int n_actions() const override { return static_cast<int>(features_[0].size()); }
    std::string name() const override { return "log_linear"; }
    double log_prob(const Eigen::VectorXd& theta, int s, int a) const override;
    Eigen::VectorXd score(const Eigen::VectorXd& theta, int s, int a) const override;
    double lipschitz_g() const override { return 2.0 * max_feature_norm_; }
    double smoothness_beta() const override {
        return 0.25 * max_feature_diameter_ * max_feature_diameter_;
    }

    const Eigen::VectorXd& feature(int s, int a) const { return features_[s][a]; }

private:
    std::vector<std::vector<Eigen::VectorXd>> features_;
    int dim_;
    double max_feature_norm_;
    double max_feature_diameter_;
};

/// One-dimensional coupled logistic class: pi_theta(1|s) = sigma(theta x(s))
/// with x(s1)=+1, x(s2)=-1. The tight constants G=1, beta=1/4 hold.
class HardnessFamily final : public LogLinearFamily {
public:
    HardnessFamily();
    std::string name() const override { return "hardness_one_dim"; }
    double lipschitz_g() const override { return 1.0; }
    double smoothness_beta() const override { return 0.25; }
};

// Feature-map generators.
std::vector<std::vector<Eigen::VectorXd>> one_hot_features(int n_states, int n_actions);
// phi(s,a) = e_s * m_a with the centered action multiplier m_a = a - (A-1)/2
// (for two actions this is the +-1/2 sign pattern).
std::vector<std::vector<Eigen::VectorXd>> state_onehot_action_features(int n_states,
                                                                       int n_actions);

/// Expected per-state KL divergence E_{s~dist}[KL(pi_p(.|s) || pi_q(.|s))].
KlResult kl_under(const FinitePolicyFamily& family, const Eigen::VectorXd& theta_p,
                  const Eigen::VectorXd& theta_q, const std::vector<double>& state_dist);
KlResult kl_under(const PolicyTable& p, const PolicyTable& q,
                  const std::vector<double>& state_dist);

// ---------------------------------------------------------------------------
// Gaussian policy in natural parameters. Additive sufficient-statistic
// updates keep the family closed under multiplicative-weight steps, so the
// state holds (Lambda, h) = (Sigma^-1, Sigma^-1 mu) rather than (mu, Sigma).

struct GaussianState {
    Eigen::MatrixXd lambda;  // precision, positive definite
    Eigen::VectorXd h;       // natural parameter Lambda * mu

    Eigen::MatrixXd covariance() const;
    Eigen::VectorXd mean() const;
    double log_density(const Eigen::VectorXd& a) const;
    double kl_to(const GaussianState& other) const;  // KL(this || other), closed form
    void check_positive_definite() const;
};

struct GaussianPolicy {
    std::vector<GaussianState> states;

    double density(int s, const Eigen::VectorXd& a) const;
    double kl_under(const GaussianPolicy& other, const std::vector<double>& state_dist) const;
    // Continuous action families have no finite table.
    [[noreturn]] void to_policy_table() const;
};

}  // namespace oprl
