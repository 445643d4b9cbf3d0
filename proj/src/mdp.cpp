#include "oprl/mdp.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "oprl/tolerances.hpp"

namespace oprl {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void check_dims(const TabularMDP& mdp, const PolicyTable& pi) {
    require(mdp.n_states == pi.n_states && mdp.n_actions == pi.n_actions,
            "policy table dimensions do not match the MDP");
}

void check_table(const TabularMDP& mdp, const std::vector<double>& f, const char* what) {
    require(f.size() == static_cast<std::size_t>(mdp.n_states) * mdp.n_actions,
            std::string(what) + ": table must have shape S x A");
}

// Product kernel M[(s,a),(s',a')] = P(s'|s,a) pi(a'|s').
Eigen::MatrixXd product_kernel(const TabularMDP& mdp, const PolicyTable& pi) {
    const int sa = mdp.n_states * mdp.n_actions;
    Eigen::MatrixXd m(sa, sa);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                const double p = mdp.p(s, a, s2);
                for (int a2 = 0; a2 < mdp.n_actions; ++a2)
                    m(mdp.sa(s, a), mdp.sa(s2, a2)) = p * pi.pi(s2, a2);
            }
    return m;
}

}  // namespace

void TabularMDP::validate() const {
    require(n_states > 0 && n_actions > 0, "MDP needs at least one state and action");
    require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    require(transition.size() == static_cast<std::size_t>(n_states) * n_actions * n_states,
            "transition tensor has wrong shape");
    require(reward.size() == static_cast<std::size_t>(n_states) * n_actions,
            "reward matrix has wrong shape");
    require(init_dist.size() == static_cast<std::size_t>(n_states), "init_dist has wrong shape");
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            double sum = 0.0;
            for (int s2 = 0; s2 < n_states; ++s2) {
                const double v = p(s, a, s2);
                require(v >= 0.0, "transition probabilities must be nonnegative");
                sum += v;
            }
            require(std::abs(sum - 1.0) <= tol::row_stochastic, "transition row does not sum to 1");
            require(r(s, a) >= 0.0 && r(s, a) <= r_max, "reward outside [0, r_max]");
        }
    double d0 = std::accumulate(init_dist.begin(), init_dist.end(), 0.0);
    for (double v : init_dist) require(v >= 0.0, "init_dist must be nonnegative");
    require(std::abs(d0 - 1.0) <= tol::row_stochastic, "init_dist does not sum to 1");
}

PolicyTable PolicyTable::uniform(int n_states, int n_actions) {
    PolicyTable t{n_states, n_actions,
                  std::vector<double>(static_cast<std::size_t>(n_states) * n_actions,
                                      1.0 / n_actions)};
    return t;
}

PolicyTable PolicyTable::deterministic(int n_states, int n_actions,
                                       const std::vector<int>& action) {
    require(action.size() == static_cast<std::size_t>(n_states),
            "deterministic policy needs one action per state");
    PolicyTable t{n_states, n_actions,
                  std::vector<double>(static_cast<std::size_t>(n_states) * n_actions, 0.0)};
    for (int s = 0; s < n_states; ++s) {
        require(action[s] >= 0 && action[s] < n_actions, "action index out of range");
        t.pi(s, action[s]) = 1.0;
    }
    return t;
}

void PolicyTable::validate() const {
    for (int s = 0; s < n_states; ++s) {
        double sum = 0.0;
        for (int a = 0; a < n_actions; ++a) {
            require(pi(s, a) >= 0.0, "policy probabilities must be nonnegative");
            sum += pi(s, a);
        }
        require(std::abs(sum - 1.0) <= tol::row_stochastic, "policy row does not sum to 1");
    }
}

ValueBundle eval_policy(const TabularMDP& mdp, const PolicyTable& pi) {
    check_dims(mdp, pi);
    const int sa = mdp.n_states * mdp.n_actions;
    Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(sa, sa) - mdp.gamma * product_kernel(mdp, pi);
    Eigen::VectorXd rhs(sa);
    for (int i = 0; i < sa; ++i) rhs(i) = mdp.reward[i];
    Eigen::VectorXd q = sys.partialPivLu().solve(rhs);

    ValueBundle out;
    out.q.assign(q.data(), q.data() + sa);
    out.v.resize(mdp.n_states);
    out.adv.resize(sa);
    for (int s = 0; s < mdp.n_states; ++s) {
        double v = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a) v += pi.pi(s, a) * out.q[mdp.sa(s, a)];
        out.v[s] = v;
        for (int a = 0; a < mdp.n_actions; ++a) out.adv[mdp.sa(s, a)] = out.q[mdp.sa(s, a)] - v;
    }
    out.return_ = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) out.return_ += mdp.init_dist[s] * out.v[s];
    return out;
}

Occupancy occupancy(const TabularMDP& mdp, const PolicyTable& pi) {
    check_dims(mdp, pi);
    const int sa = mdp.n_states * mdp.n_actions;
    // d solves (I - gamma M^T) d = (1-gamma) b with b = d0 (x) pi.
    Eigen::MatrixXd sys =
        Eigen::MatrixXd::Identity(sa, sa) - mdp.gamma * product_kernel(mdp, pi).transpose();
    Eigen::VectorXd b(sa);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            b(mdp.sa(s, a)) = (1.0 - mdp.gamma) * mdp.init_dist[s] * pi.pi(s, a);
    Eigen::VectorXd d = sys.partialPivLu().solve(b);

    Occupancy occ;
    occ.n_states = mdp.n_states;
    occ.n_actions = mdp.n_actions;
    occ.d_sa.resize(sa);
    double total = 0.0;
    for (int i = 0; i < sa; ++i) {
        double v = d(i);
        if (v < 0.0) {
            if (v < -tol::occupancy_clamp)
                throw std::runtime_error("occupancy solve produced a negative entry: " +
                                         std::to_string(v));
            v = 0.0;
        }
        occ.d_sa[i] = v;
        total += v;
    }
    for (double& v : occ.d_sa) v /= total;
    occ.d_s.assign(mdp.n_states, 0.0);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) occ.d_s[s] += occ(s, a);
    return occ;
}

std::vector<double> bellman_apply(const TabularMDP& mdp, const PolicyTable& pi,
                                  const std::vector<double>& f) {
    check_dims(mdp, pi);
    check_table(mdp, f, "bellman_apply");
    std::vector<double> fs = expected_under_policy(pi, f);  // f(s', pi)
    std::vector<double> out(f.size());
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            double next = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) next += mdp.p(s, a, s2) * fs[s2];
            out[mdp.sa(s, a)] = mdp.r(s, a) + mdp.gamma * next;
        }
    return out;
}

std::vector<double> expected_under_policy(const PolicyTable& pi, const std::vector<double>& f) {
    std::vector<double> out(pi.n_states, 0.0);
    for (int s = 0; s < pi.n_states; ++s)
        for (int a = 0; a < pi.n_actions; ++a)
            out[s] += pi.pi(s, a) * f[static_cast<std::size_t>(s) * pi.n_actions + a];
    return out;
}

namespace {

double expect_sa(const Occupancy& occ, const std::vector<double>& table) {
    double acc = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) acc += occ.d_sa[i] * table[i];
    return acc;
}

}  // namespace

double check_telescoping(const TabularMDP& mdp, const PolicyTable& pi,
                         const std::vector<double>& f) {
    check_table(mdp, f, "check_telescoping");
    const ValueBundle vb = eval_policy(mdp, pi);
    const Occupancy occ = occupancy(mdp, pi);
    const std::vector<double> tf = bellman_apply(mdp, pi, f);
    const std::vector<double> fs = expected_under_policy(pi, f);
    double jf = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) jf += mdp.init_dist[s] * fs[s];
    std::vector<double> diff(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) diff[i] = f[i] - tf[i];
    const double rhs = expect_sa(occ, diff) / (1.0 - mdp.gamma);
    return std::abs(jf - vb.return_ - rhs);
}

double check_pdl(const TabularMDP& mdp, const PolicyTable& pi, const PolicyTable& pi_prime,
                 const std::vector<double>& f) {
    check_table(mdp, f, "check_pdl");
    const ValueBundle vb = eval_policy(mdp, pi);
    const ValueBundle vb_prime = eval_policy(mdp, pi_prime);
    const Occupancy occ = occupancy(mdp, pi);
    const Occupancy occ_prime = occupancy(mdp, pi_prime);
    const std::vector<double> tf = bellman_apply(mdp, pi, f);
    const std::vector<double> f_pi = expected_under_policy(pi, f);
    const std::vector<double> f_pi_prime = expected_under_policy(pi_prime, f);

    double term_actor = 0.0;
    for (int s = 0; s < mdp.n_states; ++s)
        term_actor += occ_prime.d_s[s] * (f_pi_prime[s] - f_pi[s]);
    std::vector<double> tf_minus_f(f.size()), f_minus_tf(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        tf_minus_f[i] = tf[i] - f[i];
        f_minus_tf[i] = -tf_minus_f[i];
    }
    const double rhs = (term_actor + expect_sa(occ_prime, tf_minus_f) + expect_sa(occ, f_minus_tf)) /
                       (1.0 - mdp.gamma);
    return std::abs(vb_prime.return_ - vb.return_ - rhs);
}

SuboptimalityDecomposition decompose_suboptimality(
    const TabularMDP& mdp, const PolicyTable& pi_cp, const std::vector<PolicyTable>& policies,
    const std::vector<std::vector<double>>& critics) {
    require(!policies.empty(), "decompose_suboptimality: need at least one iterate");
    require(policies.size() == critics.size(),
            "decompose_suboptimality: policies and critics must have equal length");
    const Occupancy occ_cp = occupancy(mdp, pi_cp);
    const double j_cp = eval_policy(mdp, pi_cp).return_;
    const double k = static_cast<double>(policies.size());

    SuboptimalityDecomposition out;
    double j_mix = 0.0;
    for (std::size_t i = 0; i < policies.size(); ++i) {
        const PolicyTable& pi_k = policies[i];
        const std::vector<double>& f = critics[i];
        check_table(mdp, f, "decompose_suboptimality");
        j_mix += eval_policy(mdp, pi_k).return_ / k;

        const std::vector<double> f_cp = expected_under_policy(pi_cp, f);
        const std::vector<double> f_k = expected_under_policy(pi_k, f);
        for (int s = 0; s < mdp.n_states; ++s)
            out.actor_term += occ_cp.d_s[s] * (f_cp[s] - f_k[s]) / k;

        const std::vector<double> tf = bellman_apply(mdp, pi_k, f);
        std::vector<double> tf_minus_f(f.size());
        for (std::size_t j = 0; j < f.size(); ++j) tf_minus_f[j] = tf[j] - f[j];
        out.critic_term_cp += expect_sa(occ_cp, tf_minus_f) / k;

        const Occupancy occ_k = occupancy(mdp, pi_k);
        double ek = 0.0;
        for (std::size_t j = 0; j < f.size(); ++j) ek += occ_k.d_sa[j] * (f[j] - tf[j]);
        out.critic_term_k += ek / k;
    }
    out.total = out.actor_term + out.critic_term_cp + out.critic_term_k;
    out.residual = std::abs(out.total - (1.0 - mdp.gamma) * (j_cp - j_mix));
    return out;
}

TabularMDP three_state_absorbing_mdp() {
    TabularMDP m;
    m.n_states = 3;
    m.n_actions = 2;
    m.gamma = 0.9;
    m.r_max = 4.0;
    m.transition.assign(3 * 2 * 3, 0.0);
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) m.transition[(s * 2 + a) * 3 + s] = 1.0;  // absorbing
    m.reward = {1.0, 2.0, 4.0, 2.0, 4.0, 2.0};  // r(s,a1)=(1,4,4), r(s,a2)=(2,2,2)
    m.init_dist = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    m.validate();
    return m;
}

std::vector<std::vector<Eigen::VectorXd>> three_state_absorbing_features() {
    const double c[3] = {1.0, 2.0, 3.0};
    std::vector<std::vector<Eigen::VectorXd>> phi(3, std::vector<Eigen::VectorXd>(2));
    for (int s = 0; s < 3; ++s) {
        phi[s][0] = Eigen::VectorXd::Constant(1, c[s]);
        phi[s][1] = Eigen::VectorXd::Constant(1, -c[s]);
    }
    return phi;
}

TabularMDP hardness_bandit_mdp() {
    TabularMDP m;
    m.n_states = 2;
    m.n_actions = 2;
    m.gamma = 0.0;
    m.r_max = 1.0;
    m.transition.assign(2 * 2 * 2, 0.0);
    for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 2; ++a) m.transition[(s * 2 + a) * 2 + s] = 1.0;
    m.reward = {0.0, 1.0, 0.0, 1.0};  // R(s,0)=0, R(s,1)=1
    // Start mass sits on the coupled state, so the comparator occupancy is
    // concentrated there while the data marginal is chosen separately.
    m.init_dist = {0.0, 1.0};
    m.validate();
    return m;
}

std::vector<std::vector<Eigen::VectorXd>> hardness_bandit_features() {
    // phi(s,1) = x(s) with x = (+1,-1); phi(s,0) = 0.
    std::vector<std::vector<Eigen::VectorXd>> phi(2, std::vector<Eigen::VectorXd>(2));
    phi[0][0] = Eigen::VectorXd::Zero(1);
    phi[0][1] = Eigen::VectorXd::Constant(1, 1.0);
    phi[1][0] = Eigen::VectorXd::Zero(1);
    phi[1][1] = Eigen::VectorXd::Constant(1, -1.0);
    return phi;
}

MdpFile load_mdp_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open MDP file: " + path);
    nlohmann::json j;
    in >> j;

    MdpFile out;
    TabularMDP& m = out.mdp;
    m.n_states = j.at("n_states").get<int>();
    m.n_actions = j.at("n_actions").get<int>();
    m.gamma = j.at("gamma").get<double>();
    const auto& pt = j.at("transition");
    const auto& rw = j.at("reward");
    m.transition.reserve(static_cast<std::size_t>(m.n_states) * m.n_actions * m.n_states);
    m.reward.reserve(static_cast<std::size_t>(m.n_states) * m.n_actions);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) {
            m.reward.push_back(rw.at(s).at(a).get<double>());
            for (int s2 = 0; s2 < m.n_states; ++s2)
                m.transition.push_back(pt.at(s).at(a).at(s2).get<double>());
        }
    m.init_dist = j.at("init_dist").get<std::vector<double>>();
    m.r_max = j.contains("r_max") ? j.at("r_max").get<double>()
                                  : *std::max_element(m.reward.begin(), m.reward.end());
    m.validate();

    if (j.contains("features")) {
        const auto& ft = j.at("features");
        out.features.assign(m.n_states, std::vector<Eigen::VectorXd>(m.n_actions));
        for (int s = 0; s < m.n_states; ++s)
            for (int a = 0; a < m.n_actions; ++a) {
                const auto vec = ft.at(s).at(a).get<std::vector<double>>();
                out.features[s][a] = Eigen::Map<const Eigen::VectorXd>(vec.data(), vec.size());
            }
    }
    return out;
}

void save_mdp_file(const std::string& path, const TabularMDP& mdp,
                   const std::vector<std::vector<Eigen::VectorXd>>& features) {
    nlohmann::json j;
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["gamma"] = mdp.gamma;
    j["r_max"] = mdp.r_max;
    nlohmann::json pt = nlohmann::json::array(), rw = nlohmann::json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        nlohmann::json ps = nlohmann::json::array(), rs = nlohmann::json::array();
        for (int a = 0; a < mdp.n_actions; ++a) {
            rs.push_back(mdp.r(s, a));
            nlohmann::json row = nlohmann::json::array();
            for (int s2 = 0; s2 < mdp.n_states; ++s2) row.push_back(mdp.p(s, a, s2));
            ps.push_back(row);
        }
        pt.push_back(ps);
        rw.push_back(rs);
    }
    j["transition"] = pt;
    j["reward"] = rw;
    j["init_dist"] = mdp.init_dist;
    if (!features.empty()) {
        nlohmann::json ft = nlohmann::json::array();
        for (int s = 0; s < mdp.n_states; ++s) {
            nlohmann::json fs = nlohmann::json::array();
            for (int a = 0; a < mdp.n_actions; ++a) {
                fs.push_back(std::vector<double>(features[s][a].data(),
                                                 features[s][a].data() + features[s][a].size()));
            }
            ft.push_back(fs);
        }
        j["features"] = ft;
    }
    std::ofstream outf(path);
    if (!outf) throw std::runtime_error("cannot write MDP file: " + path);
    outf << j.dump(2) << "\n";
}

}  // namespace oprl
