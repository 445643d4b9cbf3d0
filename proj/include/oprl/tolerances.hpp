#pragma once

// Central numerical tolerances. Identity checks (fixed points, exact
// cancellations) use `identity`; quantities produced through a chain of
// solves use `derived`. Keep these in one place so every module and test
// agrees on what "exact" means.
namespace oprl::tol {

inline constexpr double row_stochastic = 1e-12;  // probability rows / d0
inline constexpr double identity = 1e-10;        // single-solve identities
inline constexpr double derived = 1e-9;          // multi-solve chains (lemma suites)
inline constexpr double occupancy_clamp = 1e-14; // negativity absorbed as roundoff
inline constexpr double norm_budget_slack = 1e-12;
inline constexpr double logit_clamp = 500.0;     // clamp logits before exp

}  // namespace oprl::tol
