#include "oprl/norms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oprl {

double norm_of(const Eigen::VectorXd& v, Norm n) {
    switch (n) {
        case Norm::L2: return v.norm();
        case Norm::L1: return v.lpNorm<1>();
        case Norm::LInf: return v.lpNorm<Eigen::Infinity>();
    }
    throw std::logic_error("unknown norm");
}

double dual_norm_of(const Eigen::VectorXd& v, Norm n) {
    switch (n) {
        case Norm::L2: return v.norm();
        case Norm::L1: return v.lpNorm<Eigen::Infinity>();
        case Norm::LInf: return v.lpNorm<1>();
    }
    throw std::logic_error("unknown norm");
}

Eigen::VectorXd dual_align(const Eigen::VectorXd& mu, Norm n) {
    const int d = static_cast<int>(mu.size());
    Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
    switch (n) {
        case Norm::L2: {
            const double m = mu.norm();
            if (m > 0.0) u = mu / m;
            return u;
        }
        case Norm::L1: {
            int best = 0;
            for (int i = 1; i < d; ++i)
                if (std::abs(mu(i)) > std::abs(mu(best))) best = i;
            u(best) = mu(best) >= 0.0 ? 1.0 : -1.0;
            return u;
        }
        case Norm::LInf: {
            for (int i = 0; i < d; ++i) u(i) = mu(i) > 0.0 ? 1.0 : -1.0;
            return u;
        }
    }
    throw std::logic_error("unknown norm");
}

namespace {

// Duchi et al. simplex-based projection onto the l1 ball.
Eigen::VectorXd project_l1(const Eigen::VectorXd& v, double radius) {
    if (v.lpNorm<1>() <= radius) return v;
    const int d = static_cast<int>(v.size());
    std::vector<double> mag(d);
    for (int i = 0; i < d; ++i) mag[i] = std::abs(v(i));
    std::vector<double> sorted = mag;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0, theta = 0.0;
    for (int j = 0; j < d; ++j) {
        cumulative += sorted[j];
        const double t = (cumulative - radius) / (j + 1);
        if (t >= (j + 1 < d ? sorted[j + 1] : 0.0)) {
            theta = t;
            break;
        }
    }
    Eigen::VectorXd out(d);
    for (int i = 0; i < d; ++i) {
        const double shrunk = std::max(0.0, mag[i] - theta);
        out(i) = v(i) >= 0.0 ? shrunk : -shrunk;
    }
    return out;
}

}  // namespace

Eigen::VectorXd project_ball(const Eigen::VectorXd& v, double radius, Norm n) {
    switch (n) {
        case Norm::L2: {
            const double m = v.norm();
            return m <= radius ? v : Eigen::VectorXd(v * (radius / m));
        }
        case Norm::L1: return project_l1(v, radius);
        case Norm::LInf: return v.cwiseMax(-radius).cwiseMin(radius);
    }
    throw std::logic_error("unknown norm");
}

const char* norm_name(Norm n) {
    switch (n) {
        case Norm::L2: return "l2";
        case Norm::L1: return "l1";
        case Norm::LInf: return "linf";
    }
    return "?";
}

}  // namespace oprl
