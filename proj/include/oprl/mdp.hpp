#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oprl {

/// Finite discounted MDP held as dense arrays; the source of exact ground
/// truth for every algorithm in the lab. Indexing: transition[(s*A+a)*S+s'],
/// reward[s*A+a].
struct TabularMDP {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> transition;  // P[s][a][s'], rows sum to 1
    std::vector<double> reward;      // R[s][a] in [0, r_max]
    double gamma = 0.0;
    std::vector<double> init_dist;   // d0[s]
    double r_max = 1.0;

    double v_max() const { return r_max / (1.0 - gamma); }

    double p(int s, int a, int s2) const { return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2]; }
    double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
    int sa(int s, int a) const { return s * n_actions + a; }

    // Throws std::invalid_argument when a probability row does not sum to 1,
    // a reward leaves [0, r_max], or gamma >= 1.
    void validate() const;
};

/// Row-stochastic action distribution per state.
struct PolicyTable {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> probs;  // pi[s][a]

    double pi(int s, int a) const { return probs[static_cast<std::size_t>(s) * n_actions + a]; }
    double& pi(int s, int a) { return probs[static_cast<std::size_t>(s) * n_actions + a]; }

    static PolicyTable uniform(int n_states, int n_actions);
    static PolicyTable deterministic(int n_states, int n_actions, const std::vector<int>& action);

    void validate() const;
};

/// Q/V/advantage tables plus the scalar return of one policy.
struct ValueBundle {
    std::vector<double> q;    // Q[s][a]
    std::vector<double> v;    // V[s]
    std::vector<double> adv;  // A[s][a] = Q - V
    double return_ = 0.0;     // J(pi) = E_{d0}[V]
};

/// Discounted state-action visitation distribution.
struct Occupancy {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> d_sa;  // d[s][a], sums to 1
    std::vector<double> d_s;   // state marginal

    double operator()(int s, int a) const { return d_sa[static_cast<std::size_t>(s) * n_actions + a]; }
};

/// Solves Q = R + gamma P Pi Q by dense LU, then derives V, A and J.
ValueBundle eval_policy(const TabularMDP& mdp, const PolicyTable& pi);

/// Solves the occupancy flow system d = (1-gamma) d0*pi + gamma * flow(d).
/// Entries in [-1e-14, 0] are clamped to zero and the vector renormalized;
/// anything more negative signals a bad solve and throws.
Occupancy occupancy(const TabularMDP& mdp, const PolicyTable& pi);

/// One application of the policy Bellman operator to an arbitrary table f.
std::vector<double> bellman_apply(const TabularMDP& mdp, const PolicyTable& pi,
                                  const std::vector<double>& f);

/// E_{a~pi(.|s)}[f(s,a)] for every state.
std::vector<double> expected_under_policy(const PolicyTable& pi, const std::vector<double>& f);

/// |J_f(pi) - J(pi) - (1/(1-gamma)) E_{d^pi}[f - T^pi f]|; zero up to solver
/// roundoff for any f.
double check_telescoping(const TabularMDP& mdp, const PolicyTable& pi,
                         const std::vector<double>& f);

/// Residual of the generalized performance-difference identity between pi'
/// and pi through an arbitrary table f.
double check_pdl(const TabularMDP& mdp, const PolicyTable& pi, const PolicyTable& pi_prime,
                 const std::vector<double>& f);

struct SuboptimalityDecomposition {
    double actor_term = 0.0;      // avg_k E_{d^cp}[f_k(s,pi_cp) - f_k(s,pi_k)]
    double critic_term_cp = 0.0;  // avg_k E_{d^cp}[T^{pi_k} f_k - f_k]
    double critic_term_k = 0.0;   // avg_k E_{d^{pi_k}}[f_k - T^{pi_k} f_k]
    double total = 0.0;
    double residual = 0.0;        // |total - (1-gamma)(J(pi_cp) - J(mixture))|
};

/// Averaged three-term split of (1-gamma)(J(pi_cp) - J(uniform mixture)).
SuboptimalityDecomposition decompose_suboptimality(const TabularMDP& mdp,
                                                   const PolicyTable& pi_cp,
                                                   const std::vector<PolicyTable>& policies,
                                                   const std::vector<std::vector<double>>& critics);

// Built-in instances.

/// Three absorbing states, two actions, gamma 0.9, rewards (1,4,4)/(2,2,2),
/// uniform start. Comes with the one-dimensional feature map c=(1,2,3) used
/// by the comparison experiment (phi(s,a1)=c_s, phi(s,a2)=-c_s).
TabularMDP three_state_absorbing_mdp();
std::vector<std::vector<Eigen::VectorXd>> three_state_absorbing_features();

/// Two-state, two-action bandit (gamma 0) with R(s,1)=1, R(s,0)=0 and the
/// one-dimensional coupled feature x(s1)=+1, x(s2)=-1.
TabularMDP hardness_bandit_mdp();
std::vector<std::vector<Eigen::VectorXd>> hardness_bandit_features();

// Definition-file I/O (JSON: n_states, n_actions, gamma, r_max, transition,
// reward, init_dist, optional features[s][a][d]).
struct MdpFile {
    TabularMDP mdp;
    std::vector<std::vector<Eigen::VectorXd>> features;  // empty when absent
};
MdpFile load_mdp_file(const std::string& path);
void save_mdp_file(const std::string& path, const TabularMDP& mdp,
                   const std::vector<std::vector<Eigen::VectorXd>>& features = {});

}  // namespace oprl
