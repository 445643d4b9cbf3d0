#include "oprl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "oprl/tolerances.hpp"

namespace oprl {

namespace {

double clamp_logit(double x) {
    return std::clamp(x, -tol::logit_clamp, tol::logit_clamp);
}

// Stable log-softmax over clamped logits.
double log_softmax_at(const std::vector<double>& logits, int a) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double l : logits) mx = std::max(mx, l);
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    return logits[a] - mx - std::log(z);
}

}  // namespace

void FinitePolicyFamily::check_theta(const Eigen::VectorXd& theta) const {
    if (theta.size() != dim())
        throw std::invalid_argument("theta has dimension " + std::to_string(theta.size()) +
                                    ", family expects " + std::to_string(dim()));
    if (!theta.allFinite()) throw std::invalid_argument("theta has non-finite entries");
}

double FinitePolicyFamily::prob(const Eigen::VectorXd& theta, int s, int a) const {
    return std::exp(log_prob(theta, s, a));
}

PolicyTable FinitePolicyFamily::to_policy_table(const Eigen::VectorXd& theta) const {
    check_theta(theta);
    PolicyTable t{n_states(), n_actions(),
                  std::vector<double>(static_cast<std::size_t>(n_states()) * n_actions())};
    for (int s = 0; s < n_states(); ++s) {
        double sum = 0.0;
        for (int a = 0; a < n_actions(); ++a) {
            t.pi(s, a) = prob(theta, s, a);
            sum += t.pi(s, a);
        }
        for (int a = 0; a < n_actions(); ++a) t.pi(s, a) /= sum;  // absorb clamp roundoff
    }
    return t;
}

std::vector<std::vector<Eigen::VectorXd>> FinitePolicyFamily::score_table(
    const Eigen::VectorXd& theta) const {
    std::vector<std::vector<Eigen::VectorXd>> out(n_states(),
                                                  std::vector<Eigen::VectorXd>(n_actions()));
    for (int s = 0; s < n_states(); ++s)
        for (int a = 0; a < n_actions(); ++a) out[s][a] = score(theta, s, a);
    return out;
}

TabularSoftmaxFamily::TabularSoftmaxFamily(int n_states, int n_actions)
    : n_states_(n_states), n_actions_(n_actions) {
    if (n_states <= 0 || n_actions <= 0)
        throw std::invalid_argument("tabular softmax needs positive dimensions");
}

double TabularSoftmaxFamily::log_prob(const Eigen::VectorXd& theta, int s, int a) const {
    check_theta(theta);
    std::vector<double> logits(n_actions_);
    for (int a2 = 0; a2 < n_actions_; ++a2) logits[a2] = clamp_logit(theta(s * n_actions_ + a2));
    return log_softmax_at(logits, a);
}

Eigen::VectorXd TabularSoftmaxFamily::score(const Eigen::VectorXd& theta, int s, int a) const {
    check_theta(theta);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
    for (int a2 = 0; a2 < n_actions_; ++a2)
        g(s * n_actions_ + a2) = (a2 == a ? 1.0 : 0.0) - prob(theta, s, a2);
    return g;
}

LogLinearFamily::LogLinearFamily(std::vector<std::vector<Eigen::VectorXd>> features)
    : features_(std::move(features)) {
    if (features_.empty() || features_[0].empty())
        throw std::invalid_argument("log-linear family needs a nonempty feature map");
    dim_ = static_cast<int>(features_[0][0].size());
    max_feature_norm_ = 0.0;
    max_feature_diameter_ = 0.0;
    for (const auto& row : features_) {
        if (row.size() != features_[0].size())
            throw std::invalid_argument("feature map rows must have equal action counts");
        for (const auto& phi : row) {
            if (phi.size() != dim_)
                throw std::invalid_argument("feature vectors must share one dimension");
            max_feature_norm_ = std::max(max_feature_norm_, phi.norm());
        }
        // The score Jacobian is -Cov_pi(phi); by Popoviciu its norm is at
        // most a quarter of the squared per-state feature diameter.
        for (std::size_t a = 0; a < row.size(); ++a)
            for (std::size_t b = a + 1; b < row.size(); ++b)
                max_feature_diameter_ = std::max(max_feature_diameter_, (row[a] - row[b]).norm());
    }
}

double LogLinearFamily::log_prob(const Eigen::VectorXd& theta, int s, int a) const {
    check_theta(theta);
    const int na = n_actions();
    std::vector<double> logits(na);
    for (int a2 = 0; a2 < na; ++a2) logits[a2] = clamp_logit(theta.dot(features_[s][a2]));
    return log_softmax_at(logits, a);
}

Eigen::VectorXd LogLinearFamily::score(const Eigen::VectorXd& theta, int s, int a) const {
    check_theta(theta);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim_);
    for (int a2 = 0; a2 < n_actions(); ++a2) mean += prob(theta, s, a2) * features_[s][a2];
    return features_[s][a] - mean;
}

HardnessFamily::HardnessFamily() : LogLinearFamily(hardness_bandit_features()) {}

std::vector<std::vector<Eigen::VectorXd>> one_hot_features(int n_states, int n_actions) {
    std::vector<std::vector<Eigen::VectorXd>> phi(n_states,
                                                  std::vector<Eigen::VectorXd>(n_actions));
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            phi[s][a] = Eigen::VectorXd::Zero(n_states * n_actions);
            phi[s][a](s * n_actions + a) = 1.0;
        }
    return phi;
}

std::vector<std::vector<Eigen::VectorXd>> state_onehot_action_features(int n_states,
                                                                       int n_actions) {
    std::vector<std::vector<Eigen::VectorXd>> phi(n_states,
                                                  std::vector<Eigen::VectorXd>(n_actions));
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            phi[s][a] = Eigen::VectorXd::Zero(n_states);
            phi[s][a](s) = a - 0.5 * (n_actions - 1);
        }
    return phi;
}

KlResult kl_under(const FinitePolicyFamily& family, const Eigen::VectorXd& theta_p,
                  const Eigen::VectorXd& theta_q, const std::vector<double>& state_dist) {
    return kl_under(family.to_policy_table(theta_p), family.to_policy_table(theta_q), state_dist);
}

KlResult kl_under(const PolicyTable& p, const PolicyTable& q,
                  const std::vector<double>& state_dist) {
    if (p.n_states != q.n_states || p.n_actions != q.n_actions)
        throw std::invalid_argument("kl_under: policy shapes differ");
    if (state_dist.size() != static_cast<std::size_t>(p.n_states))
        throw std::invalid_argument("kl_under: state distribution has wrong length");
    KlResult out;
    for (int s = 0; s < p.n_states; ++s) {
        if (state_dist[s] == 0.0) continue;
        double kl = 0.0;
        for (int a = 0; a < p.n_actions; ++a) {
            const double pp = p.pi(s, a);
            if (pp <= 0.0) continue;
            const double qq = q.pi(s, a);
            if (qq <= 0.0) {
                out.finite = false;
                out.value = std::numeric_limits<double>::infinity();
                return out;
            }
            kl += pp * std::log(pp / qq);
        }
        out.value += state_dist[s] * kl;
    }
    return out;
}

Eigen::MatrixXd GaussianState::covariance() const {
    return lambda.llt().solve(Eigen::MatrixXd::Identity(lambda.rows(), lambda.rows()));
}

Eigen::VectorXd GaussianState::mean() const { return lambda.llt().solve(h); }

void GaussianState::check_positive_definite() const {
    Eigen::LLT<Eigen::MatrixXd> llt(lambda);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("Gaussian precision matrix is not positive definite");
}

double GaussianState::log_density(const Eigen::VectorXd& a) const {
    const int m = static_cast<int>(a.size());
    Eigen::LLT<Eigen::MatrixXd> llt(lambda);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("Gaussian precision matrix is not positive definite");
    const Eigen::VectorXd mu = llt.solve(h);
    const Eigen::VectorXd diff = a - mu;
    double logdet = 0.0;
    const Eigen::MatrixXd l = llt.matrixL();
    for (int i = 0; i < m; ++i) logdet += 2.0 * std::log(l(i, i));
    const double quad = diff.dot(lambda * diff);
    return 0.5 * (logdet - m * std::log(2.0 * M_PI) - quad);
}

double GaussianState::kl_to(const GaussianState& other) const {
    const int m = static_cast<int>(h.size());
    const Eigen::MatrixXd sigma_p = covariance();
    const Eigen::VectorXd mu_p = mean(), mu_q = other.mean();
    const Eigen::VectorXd diff = mu_q - mu_p;
    const double trace = (other.lambda * sigma_p).trace();
    const double quad = diff.dot(other.lambda * diff);
    // log det Sigma_q / det Sigma_p = log det Lambda_p - log det Lambda_q
    auto logdet = [](const Eigen::MatrixXd& mat) {
        Eigen::LLT<Eigen::MatrixXd> llt(mat);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("Gaussian precision matrix is not positive definite");
        double ld = 0.0;
        const Eigen::MatrixXd l = llt.matrixL();
        for (int i = 0; i < mat.rows(); ++i) ld += 2.0 * std::log(l(i, i));
        return ld;
    };
    return 0.5 * (trace + quad - m + logdet(lambda) - logdet(other.lambda));
}

double GaussianPolicy::density(int s, const Eigen::VectorXd& a) const {
    return std::exp(states.at(s).log_density(a));
}

double GaussianPolicy::kl_under(const GaussianPolicy& other,
                                const std::vector<double>& state_dist) const {
    if (states.size() != other.states.size() || states.size() != state_dist.size())
        throw std::invalid_argument("kl_under: Gaussian policies have mismatched states");
    double acc = 0.0;
    for (std::size_t s = 0; s < states.size(); ++s)
        if (state_dist[s] != 0.0) acc += state_dist[s] * states[s].kl_to(other.states[s]);
    return acc;
}

void GaussianPolicy::to_policy_table() const {
    throw std::logic_error("unsupported family: a continuous-action Gaussian policy has no table");
}

}  // namespace oprl
