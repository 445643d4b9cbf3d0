#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oprl/dro.hpp"
#include "oracles.hpp"

using namespace oprl;

namespace {

std::vector<double> random_sample(std::mt19937_64& rng, int n, double scale) {
    std::uniform_real_distribution<double> unif(-5.0, 5.0);
    std::vector<double> z(n);
    for (double& v : z) v = scale * unif(rng);
    return z;
}

}  // namespace

TEST_CASE("one-sided CVaR") {
    SUBCASE("C = 1 forces the all-ones weight: mean value, tau at the minimum") {
        const std::vector<double> z = {2.0, -1.0, 0.5, 3.5};
        const CvarSolution sol = empirical_cvar_one_sided(z, 1.0);
        CHECK(sol.value == doctest::Approx(1.25).epsilon(1e-14));
        CHECK(sol.tau_hat == doctest::Approx(-1.0));
    }
    SUBCASE("hand case: z = [3,1,-1,-3], C = 2 gives (2/4)(3+1) = 2 with k* = 2") {
        const std::vector<double> z = {3.0, 1.0, -1.0, -3.0};
        const CvarSolution sol = empirical_cvar_one_sided(z, 2.0);
        CHECK(sol.value == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(sol.k_star == 2);
        CHECK(sol.tail_fraction <= 0.5 + 1e-12);
    }
    SUBCASE("500 random instances match the tau-grid oracle to 1e-8") {
        std::mt19937_64 rng(51);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int trial = 0; trial < 500; ++trial) {
            const int n = 1 + static_cast<int>(unif(rng) * 64) % 64;
            const double c = 1.0 + 9.0 * unif(rng);
            const std::vector<double> z =
                random_sample(rng, n, std::pow(10.0, unif(rng) * 2 - 1));
            const CvarSolution sol = empirical_cvar_one_sided(z, c);
            CHECK(std::abs(sol.value - oracles::cvar_by_grid(z, c)) <= 1e-8);
            CHECK(sol.tail_fraction <= 1.0 / c + 1e-12);
        }
    }
    SUBCASE("empty input is rejected") {
        CHECK_THROWS_AS(empirical_cvar_one_sided(std::vector<double>{}, 2.0),
                        std::invalid_argument);
    }
}

TEST_CASE("two-sided robust loss") {
    SUBCASE("symmetric residuals tie, sign resolves to +1") {
        const std::vector<double> z = {3.0, 1.0, -1.0, -3.0};
        const RobustLoss rl = robust_loss_linf(z, 2.0);
        CHECK(rl.value == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(rl.sign == 1);
        CHECK(rl.plus.value == doctest::Approx(rl.minus.value).epsilon(1e-14));
    }
    SUBCASE("constant residuals give |c| for any C") {
        for (double c : {1.0, 2.5, 7.0}) {
            const std::vector<double> z(5, -0.8);
            CHECK(robust_loss_linf(z, c).value == doctest::Approx(0.8).epsilon(1e-14));
        }
    }
}

TEST_CASE("primal brute force equals the dual breakpoint value (strong duality)") {
    SUBCASE("C = 1 is the mean") {
        const std::vector<double> z = {3.0, 1.0, -1.0, -3.0};
        CHECK(brute_force_linf_primal(z, 1.0) == doctest::Approx(0.0).epsilon(1e-14));
    }
    SUBCASE("hand case") {
        const std::vector<double> z = {3.0, 1.0, -1.0, -3.0};
        CHECK(brute_force_linf_primal(z, 2.0) == doctest::Approx(2.0).epsilon(1e-14));
    }
    SUBCASE("500 random instances agree to 1e-10") {
        std::mt19937_64 rng(52);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int trial = 0; trial < 500; ++trial) {
            const int n = 1 + static_cast<int>(unif(rng) * 64) % 64;
            const double c = 1.0 + 9.0 * unif(rng);
            const std::vector<double> z = random_sample(rng, n, std::pow(10.0, unif(rng) * 2 - 1));
            CHECK(std::abs(brute_force_linf_primal(z, c) - empirical_cvar_one_sided(z, c).value) <=
                  1e-10);
        }
    }
    SUBCASE("primal weights are a feasible class member") {
        std::mt19937_64 rng(53);
        const std::vector<double> z = random_sample(rng, 17, 1.0);
        const double c = 3.7;
        const std::vector<double> w = linf_primal_weights(z, c);
        double mean_w = 0.0;
        for (double wi : w) {
            CHECK(wi >= 0.0);
            CHECK(wi <= c + 1e-12);
            mean_w += wi / w.size();
        }
        CHECK(mean_w == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("chi-square dual") {
    SUBCASE("C2 = 1 collapses to the mean") {
        const std::vector<double> z = {0.0, 2.0};
        CHECK(std::abs(chi2_dual(z, 1.0) - 1.0) <= 1e-8);
    }
    SUBCASE("z = [0,2], C2 = 2 gives 2 (weights w = [0,2] are feasible and optimal)") {
        const std::vector<double> z = {0.0, 2.0};
        CHECK(chi2_dual(z, 2.0) == doctest::Approx(2.0).epsilon(1e-9));
    }
    SUBCASE("500 random instances match mean + sqrt((C2-1) var) to 1e-8") {
        std::mt19937_64 rng(54);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int trial = 0; trial < 500; ++trial) {
            const int n = 2 + static_cast<int>(unif(rng) * 63) % 63;
            const double c2 = 1.0 + 9.0 * unif(rng);
            const std::vector<double> z = random_sample(rng, n, std::pow(10.0, unif(rng) * 2 - 1));
            double mean = 0.0;
            for (double v : z) mean += v / n;
            double var = 0.0;
            for (double v : z) var += (v - mean) * (v - mean) / n;
            const double closed = mean + std::sqrt((c2 - 1.0) * var);
            CHECK(std::abs(chi2_dual(z, c2) - closed) <= 1e-8);
        }
    }
}

TEST_CASE("projected subgradient minimization of the robust loss") {
    SUBCASE("realizable 1-D instance reaches a near-zero loss near v = 3") {
        std::vector<Eigen::VectorXd> scores;
        std::vector<double> targets;
        for (double phi : {-1.0, -0.4, 0.3, 0.8, 1.5}) {
            scores.push_back(Eigen::VectorXd::Constant(1, phi));
            targets.push_back(3.0 * phi);
        }
        SubgradSchedule sched;
        sched.iterations = 4000;
        sched.alpha0 = 1.0;
        sched.decay = 0.997;
        const MinimizeResult res = drpu_minimize_linf(scores, targets, 2.0, 5.0, Norm::L2, sched);
        CHECK(res.loss <= 1e-3);
        CHECK(std::abs(res.v(0) - 3.0) <= 0.05);
    }
    SUBCASE("C = 1 reduces to mean matching: achieved losses agree to 1e-6") {
        std::mt19937_64 rng(55);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<Eigen::VectorXd> scores;
            std::vector<double> targets;
            Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
            double m = 0.0;
            const int n = 12;
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXd phi(2);
                phi << normal(rng), normal(rng);
                scores.push_back(phi);
                targets.push_back(normal(rng));
                mu += phi / n;
                m += targets.back() / n;
            }
            const double v_max = 1.0;
            SubgradSchedule sched;
            sched.iterations = 6000;
            sched.alpha0 = 0.5;
            sched.decay = 0.998;
            const MinimizeResult res =
                drpu_minimize_linf(scores, targets, 1.0, v_max, Norm::L2, sched);
            // mean matching on the same empirical means
            const double reach = v_max * mu.norm();
            const double matched = std::clamp(m, -reach, reach);
            const double mm_loss = std::abs(m - matched);
            CHECK(std::abs(res.loss - mm_loss) <= 1e-6);
        }
    }
    SUBCASE("d = 2 random instance comes within 1e-4 of the 400x400 grid value") {
        std::mt19937_64 rng(56);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<Eigen::VectorXd> scores;
        std::vector<double> targets;
        for (int i = 0; i < 24; ++i) {
            Eigen::VectorXd phi(2);
            phi << normal(rng), normal(rng);
            scores.push_back(phi);
            targets.push_back(0.7 * phi(0) - 0.4 * phi(1) + 0.3 * normal(rng));
        }
        const double c = 2.5, v_max = 1.5;
        SubgradSchedule sched;
        sched.iterations = 2000;
        const MinimizeResult res = drpu_minimize_linf(scores, targets, c, v_max, Norm::L2, sched);
        const double grid = oracles::robust_loss_grid(scores, targets, c, v_max);
        CHECK(res.loss <= grid + 1e-4);
    }
    SUBCASE("best-so-far loss curve is non-increasing") {
        std::mt19937_64 rng(57);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<Eigen::VectorXd> scores;
        std::vector<double> targets;
        for (int i = 0; i < 16; ++i) {
            scores.push_back(Eigen::VectorXd::Constant(1, normal(rng)));
            targets.push_back(normal(rng));
        }
        SubgradSchedule sched;
        sched.iterations = 500;
        const MinimizeResult res = drpu_minimize_linf(scores, targets, 3.0, 1.0, Norm::L2, sched);
        for (std::size_t i = 1; i < res.best_loss_curve.size(); ++i)
            CHECK(res.best_loss_curve[i] <= res.best_loss_curve[i - 1] + 1e-15);
    }
}

TEST_CASE("projected subgradient minimization of the chi-square loss") {
    SUBCASE("realizable residuals drive the loss to ~0") {
        std::vector<Eigen::VectorXd> scores;
        std::vector<double> targets;
        for (double phi : {-1.2, -0.5, 0.4, 1.0}) {
            scores.push_back(Eigen::VectorXd::Constant(1, phi));
            targets.push_back(1.5 * phi);
        }
        SubgradSchedule sched;
        sched.iterations = 4000;
        sched.alpha0 = 0.5;
        sched.decay = 0.998;
        const MinimizeResult res = drpu_minimize_chi2(scores, targets, 2.0, 3.0, Norm::L2, sched);
        CHECK(res.loss <= 1e-6);
    }
    SUBCASE("C2 = 1 matches the mean-matching achieved loss to 1e-6") {
        std::mt19937_64 rng(58);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<Eigen::VectorXd> scores;
        std::vector<double> targets;
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
        double m = 0.0;
        const int n = 10;
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd phi(2);
            phi << normal(rng), normal(rng);
            scores.push_back(phi);
            targets.push_back(normal(rng));
            mu += phi / n;
            m += targets.back() / n;
        }
        const double v_max = 1.0;
        SubgradSchedule sched;
        sched.iterations = 6000;
        sched.alpha0 = 0.5;
        sched.decay = 0.998;
        const MinimizeResult res = drpu_minimize_chi2(scores, targets, 1.0, v_max, Norm::L2, sched);
        const double reach = v_max * mu.norm();
        const double mm_loss = std::abs(m - std::clamp(m, -reach, reach));
        CHECK(std::abs(res.loss - mm_loss) <= 1e-6);
    }
    SUBCASE("d = 1 instance against the dense grid") {
        std::mt19937_64 rng(59);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<Eigen::VectorXd> scores;
        std::vector<double> targets;
        for (int i = 0; i < 20; ++i) {
            scores.push_back(Eigen::VectorXd::Constant(1, normal(rng)));
            targets.push_back(0.9 * scores.back()(0) + 0.2 * normal(rng));
        }
        SubgradSchedule sched;
        sched.iterations = 2000;
        const MinimizeResult res = drpu_minimize_chi2(scores, targets, 3.0, 2.0, Norm::L2, sched);
        const double grid = oracles::chi2_loss_grid(scores, targets, 3.0, 2.0, 2000);
        CHECK(res.loss <= grid + 1e-4);
    }
}

TEST_CASE("realizability upper bound: |err| <= population robust loss") {
    std::mt19937_64 rng(60);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 4 + static_cast<int>(unif(rng) * 20);
        const double c = 1.0 + 9.0 * unif(rng);
        std::vector<Eigen::VectorXd> scores;
        std::vector<double> targets, d_d(n);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd phi(2);
            phi << normal(rng), normal(rng);
            scores.push_back(phi);
            targets.push_back(normal(rng));
            d_d[i] = -std::log(1.0 - unif(rng));
            total += d_d[i];
        }
        for (double& w : d_d) w /= total;

        // random density ratio in [0, C] with E_{d_d}[w] = 1: normalize a raw
        // draw, then shrink toward the all-ones weight until the cap holds
        std::vector<double> w(n);
        double mean_w = 0.0;
        for (int i = 0; i < n; ++i) {
            w[i] = unif(rng);
            mean_w += d_d[i] * w[i];
        }
        double w_max = 0.0;
        for (double& wi : w) {
            wi /= mean_w;
            w_max = std::max(w_max, wi);
        }
        const double shrink = w_max > c ? (c - 1.0) / (w_max - 1.0) : 1.0;
        std::vector<double> d_cp(n);
        for (int i = 0; i < n; ++i) d_cp[i] = d_d[i] * (1.0 + shrink * (w[i] - 1.0));

        Eigen::VectorXd v(2);
        v << normal(rng), normal(rng);
        double err = 0.0;
        for (int i = 0; i < n; ++i) err += d_cp[i] * (targets[i] - v.dot(scores[i]));
        const double loss = population_robust_loss_linf(scores, targets, d_d, c, v);
        CHECK(std::abs(err) <= loss + 1e-9);
    }
}

TEST_CASE("robust bias is at most sqrt(C times the squared-loss bias)") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 6 + static_cast<int>(unif(rng) * 18);
        const double c = 1.0 + 9.0 * unif(rng);
        std::vector<Eigen::VectorXd> scores;
        std::vector<double> targets, d_d(n);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd phi(2);
            phi << normal(rng), normal(rng);
            scores.push_back(phi);
            targets.push_back(normal(rng));
            d_d[i] = -std::log(1.0 - unif(rng));
            total += d_d[i];
        }
        for (double& w : d_d) w /= total;

        // population least-squares solution (independent normal equations)
        Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
        Eigen::Vector2d cross = Eigen::Vector2d::Zero();
        for (int i = 0; i < n; ++i) {
            sigma += d_d[i] * scores[i] * scores[i].transpose();
            cross += d_d[i] * targets[i] * scores[i];
        }
        const Eigen::Vector2d v_star = sigma.ldlt().solve(cross);
        double sq_loss = 0.0;
        for (int i = 0; i < n; ++i) {
            const double r = targets[i] - v_star.dot(scores[i]);
            sq_loss += d_d[i] * r * r;
        }
        const double robust = population_robust_loss_linf(scores, targets, d_d, c, v_star);
        CHECK(robust <= std::sqrt(c * sq_loss) + 1e-6);
    }
}
