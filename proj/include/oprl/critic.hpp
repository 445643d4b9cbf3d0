#pragma once

#include <string>
#include <vector>

#include "oprl/mdp.hpp"

namespace oprl {

enum class OracleKind { Exact, Perturbed };

/// Critic table in [0, V_max] with the realized pessimism gap attached.
struct CriticFunction {
    std::vector<double> f;  // f[s][a]
    OracleKind kind = OracleKind::Exact;
    double perturbation = 0.0;  // max entry of the pessimism table
    double eps_r = 0.0;         // realized max(0, (1-gamma)(J_f - J))

    double at(int s, int a, int n_actions) const {
        return f[static_cast<std::size_t>(s) * n_actions + a];
    }
};

/// f = Q^pi exactly (same solve path as eval_policy), so both oracle gaps
/// vanish.
CriticFunction exact_oracle(const TabularMDP& mdp, const PolicyTable& pi);

/// f = clamp(Q^pi - c, 0, V_max) for a nonnegative pessimism table c.
/// Clamping can only deepen pessimism, so J_f(pi) <= J(pi) is preserved.
CriticFunction perturbed_oracle(const TabularMDP& mdp, const PolicyTable& pi,
                                const std::vector<double>& pessimism);

/// Realized transferred Bellman error E_{d_cp}[T^pi f - f].
double check_transferred_bellman(const TabularMDP& mdp, const PolicyTable& pi,
                                 const std::vector<double>& f, const Occupancy& d_cp);

/// J_f(pi) = E_{d0}[f(s, pi)].
double critic_return(const TabularMDP& mdp, const PolicyTable& pi, const std::vector<double>& f);

}  // namespace oprl
