#pragma once

#include <Eigen/Dense>

namespace oprl {

/// Norm placed on update vectors; scores and their means are measured in the
/// dual norm (l2<->l2, l1<->linf, linf<->l1).
enum class Norm { L2, L1, LInf };

double norm_of(const Eigen::VectorXd& v, Norm n);
double dual_norm_of(const Eigen::VectorXd& v, Norm n);

/// Unit-ball maximizer u = argmax_{||u|| <= 1} u.mu, so u.mu = ||mu||_*.
/// Ties resolve to a fixed sign pattern: first maximal coordinate for L1,
/// sign(mu_j) with zeros mapped to -1 for LInf.
Eigen::VectorXd dual_align(const Eigen::VectorXd& mu, Norm n);

/// Euclidean-nearest point of the radius-r ball in the given norm.
Eigen::VectorXd project_ball(const Eigen::VectorXd& v, double radius, Norm n);

const char* norm_name(Norm n);

}  // namespace oprl
