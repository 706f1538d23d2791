#pragma once

#include "hetcsma/core.hpp"
#include "hetcsma/randacc.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hetcsma {

/// Probabilities aligned with the schedules of a FeasibleScheduleSet.
struct ScheduleDistribution {
    std::size_t carrier = 0;
    std::vector<double> probabilities;

    std::size_t size() const noexcept { return probabilities.size(); }
    double operator[](std::size_t i) const { return probabilities[i]; }
};

/// Product form: pi_m proportional to the product of lambda * mu over the
/// active transmissions of m.
ScheduleDistribution stationary_distribution(const AccessParams& params, const FeasibleScheduleSet& set);

/// pi_m proportional to exp(sum_l r_{l,m} q_l), normalized with log-sum-exp.
ScheduleDistribution queue_stationary_distribution(std::span<const double> q, const FeasibleScheduleSet& set);

/// log sum_m exp(sum_l r_{l,m} q_l)
double log_partition(std::span<const double> q, const FeasibleScheduleSet& set);

ThroughputVector link_throughput(std::span<const ScheduleDistribution> pi, std::span<const FeasibleScheduleSet> sets);

/// Shannon entropy in nats, with 0 log 0 = 0.
double entropy(const ScheduleDistribution& pi);

double objective_f1(const ThroughputVector& gamma, const Utility& u);
double objective_f2(const ThroughputVector& gamma, std::span<const ScheduleDistribution> pi, const Utility& u,
                    double V);

struct KktResiduals {
    double stationarity_gamma = 0.0;       // |V U'(sum_c gamma) - nu|
    double stationarity_pi = 0.0;          // |-1 - log pi + sum r nu - eta|
    double primal_feasibility = 0.0;       // max(0, gamma - sum pi r)
    double complementary_slackness = 0.0;  // |nu (gamma - sum pi r)|
    double dual_nonnegativity = 0.0;       // max(0, -nu)
    double simplex = 0.0;                  // |sum pi - 1|

    double max() const;
};

struct SolverOptions {
    double tol = 1e-8;
    std::uint64_t max_iters = 1'000'000;
    double eta0 = 0.5;
    double eta_decay = 0.7;
    /// Finish with projected Newton steps once the drift is below this.
    double newton_switch = 1e-3;
    bool newton_polish = true;
    bool record_f2 = false;
};

struct OracleSolution {
    std::vector<double> q_star;
    std::vector<ScheduleDistribution> pi_star;
    ThroughputVector gamma_star;
    double f1 = 0.0;
    double f2 = 0.0;
    KktResiduals kkt;
    /// nu[l][c] = q_l for every carrier.
    std::vector<std::vector<double>> nu;
    std::vector<double> eta;
    std::uint64_t iterations = 0;
    std::uint64_t newton_steps = 0;
    /// max_l |clip(p + F(p)) - p| at the returned point.
    double drift = 0.0;
    /// Some q_l sits on q_min or q_max; the clipped problem then differs
    /// from the unconstrained one.
    bool on_boundary = false;
    std::string warning;
    std::vector<double> f2_history;
};

/// Fixed point of p = clip(p + eta_k (U'^{-1}(p / V) - sum_c sum_m r pi^p)).
/// Throws ConvergenceError with the final drift if max_iters is exhausted.
OracleSolution subgradient_solve(std::span<const FeasibleScheduleSet> sets, const Utility& u, double V, double q_min,
                                 double q_max, const SolverOptions& options = {});

/// Fixed-point residual U'^{-1}(p / V) - sum_c sum_m r pi^p per link.
std::vector<double> fixed_point_residual(std::span<const FeasibleScheduleSet> sets, const Utility& u, double V,
                                         std::span<const double> p);

KktResiduals kkt_residuals(std::span<const FeasibleScheduleSet> sets, const Utility& u, double V,
                           std::span<const double> q);

/// |C| log|union of N_c| / V, with the union taken over rate vectors.
double gap_bound(double V, std::span<const FeasibleScheduleSet> sets);

struct UtilityOptimum {
    std::vector<ScheduleDistribution> pi;
    ThroughputVector gamma;
    double f1 = 0.0;
    std::uint64_t iterations = 0;
};

/// Maximizes f1 directly over the per-carrier schedule simplices by
/// projected gradient ascent (no entropy term).
UtilityOptimum maximize_utility(std::span<const FeasibleScheduleSet> sets, const Utility& u, double tol = 1e-12,
                                std::uint64_t max_iters = 200'000);

/// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::span<const double> v);

/// Structured text report: per-carrier schedule table, per-link q and gamma,
/// objectives, gap bound and KKT residuals.
void write_oracle_report(std::ostream& out, const OracleSolution& sol, std::span<const FeasibleScheduleSet> sets,
                         double V);

} // namespace hetcsma
