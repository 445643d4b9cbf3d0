#include "oprl/critic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oprl {

CriticFunction exact_oracle(const TabularMDP& mdp, const PolicyTable& pi) {
    CriticFunction out;
    out.f = eval_policy(mdp, pi).q;
    out.kind = OracleKind::Exact;
    return out;
}

CriticFunction perturbed_oracle(const TabularMDP& mdp, const PolicyTable& pi,
                                const std::vector<double>& pessimism) {
    if (pessimism.size() != static_cast<std::size_t>(mdp.n_states) * mdp.n_actions)
        throw std::invalid_argument("pessimism table must have shape S x A");
    for (double c : pessimism)
        if (c < 0.0) throw std::invalid_argument("pessimism entries must be nonnegative");

    const ValueBundle vb = eval_policy(mdp, pi);
    CriticFunction out;
    out.kind = OracleKind::Perturbed;
    out.f.resize(vb.q.size());
    for (std::size_t i = 0; i < vb.q.size(); ++i) {
        out.f[i] = std::clamp(vb.q[i] - pessimism[i], 0.0, mdp.v_max());
        out.perturbation = std::max(out.perturbation, pessimism[i]);
    }
    const double gap = critic_return(mdp, pi, out.f) - vb.return_;
    out.eps_r = std::max(0.0, (1.0 - mdp.gamma) * gap);
    return out;
}

double check_transferred_bellman(const TabularMDP& mdp, const PolicyTable& pi,
                                 const std::vector<double>& f, const Occupancy& d_cp) {
    const std::vector<double> tf = bellman_apply(mdp, pi, f);
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) acc += d_cp.d_sa[i] * (tf[i] - f[i]);
    return acc;
}

double critic_return(const TabularMDP& mdp, const PolicyTable& pi, const std::vector<double>& f) {
    const std::vector<double> fs = expected_under_policy(pi, f);
    double acc = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) acc += mdp.init_dist[s] * fs[s];
    return acc;
}

}  // namespace oprl
