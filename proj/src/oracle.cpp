#include "hetcsma/oracle.hpp"

#include "hetcsma/error.hpp"
#include "hetcsma/format.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

namespace hetcsma {

namespace {

void check_shapes(std::span<const FeasibleScheduleSet> sets) {
    if (sets.empty()) throw Error(ErrorKind::structural, "need at least one carrier");
    for (std::size_t c = 0; c < sets.size(); ++c)
        if (sets[c].num_links() != sets[0].num_links())
            throw Error(ErrorKind::structural, "carriers disagree on the number of links");
}

std::vector<double> softmax(std::vector<double> logw) {
    if (logw.empty()) return logw;
    const double top = *std::max_element(logw.begin(), logw.end());
    double z = 0.0;
    for (double& v : logw) {
        v = std::exp(v - top);
        z += v;
    }
    for (double& v : logw) v /= z;
    return logw;
}

std::vector<double> queue_log_weights(std::span<const double> q, const FeasibleScheduleSet& set) {
    if (q.size() != set.num_links()) throw Error(ErrorKind::structural, "queue vector has the wrong length");
    std::vector<double> logw(set.size(), 0.0);
    for (std::size_t m = 0; m < set.size(); ++m) {
        double s = 0.0;
        for (std::size_t l = 0; l < q.size(); ++l) s += set[m].rates[l] * q[l];
        logw[m] = s;
    }
    return logw;
}

double inverse_derivative_slope(const Utility& u, double V, double p) {
    // d/dp of max(0, V/p - eps)
    return (V / p > u.epsilon()) ? -V / (p * p) : 0.0;
}

// Everything the solver needs at one point p.
struct Evaluation {
    std::vector<double> residual;      // F(p)
    std::vector<double> neg_jacobian;  // -dF/dp, L x L row-major
    double drift = 0.0;
};

Evaluation evaluate(std::span<const FeasibleScheduleSet> sets, const Utility& u, double V, std::span<const double> p,
                    double q_min, double q_max, bool jacobian) {
    const std::size_t L = p.size();
    Evaluation ev;
    ev.residual.assign(L, 0.0);
    if (jacobian) ev.neg_jacobian.assign(L * L, 0.0);
    for (std::size_t l = 0; l < L; ++l) ev.residual[l] = u.inverse_derivative(p[l] / V);
    std::vector<double> gamma(L);
    for (const auto& set : sets) {
        const auto pi = softmax(queue_log_weights(p, set));
        std::fill(gamma.begin(), gamma.end(), 0.0);
        for (std::size_t m = 0; m < set.size(); ++m)
            for (std::size_t l = 0; l < L; ++l) gamma[l] += pi[m] * set[m].rates[l];
        for (std::size_t l = 0; l < L; ++l) ev.residual[l] -= gamma[l];
        if (!jacobian) continue;
        for (std::size_t m = 0; m < set.size(); ++m) {
            const auto& r = set[m].rates;
            for (std::size_t a = 0; a < L; ++a) {
                if (r[a] == 0.0) continue;
                for (std::size_t b = 0; b < L; ++b) ev.neg_jacobian[a * L + b] += pi[m] * r[a] * r[b];
            }
        }
        for (std::size_t a = 0; a < L; ++a)
            for (std::size_t b = 0; b < L; ++b) ev.neg_jacobian[a * L + b] -= gamma[a] * gamma[b];
    }
    if (jacobian)
        for (std::size_t l = 0; l < L; ++l) ev.neg_jacobian[l * L + l] -= inverse_derivative_slope(u, V, p[l]);
    for (std::size_t l = 0; l < L; ++l)
        ev.drift = std::max(ev.drift, std::abs(std::clamp(p[l] + ev.residual[l], q_min, q_max) - p[l]));
    return ev;
}

// Solves A x = b for symmetric positive definite A (n x n, row-major).
bool cholesky_solve(std::vector<double> a, std::vector<double>& b, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        a[j * n + j] = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / d;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
        b[i] = s / a[i * n + i];
    }
    return true;
}

double f2_at(std::span<const FeasibleScheduleSet> sets, const Utility& u, double V, std::span<const double> p) {
    std::vector<ScheduleDistribution> pi;
    for (const auto& set : sets) pi.push_back(queue_stationary_distribution(p, set));
    return objective_f2(link_throughput(pi, sets), pi, u, V);
}

} // namespace

ScheduleDistribution stationary_distribution(const AccessParams& params, const FeasibleScheduleSet& set) {
    if (params.num_links() != set.num_links() || params.num_rates() != set.rates().size() ||
        set.carrier() >= params.num_carriers())
        throw Error(ErrorKind::structural, "access parameters do not cover the schedule set");
    std::vector<double> logw(set.size(), 0.0);
    for (std::size_t m = 0; m < set.size(); ++m) {
        double s = 0.0;
        for (std::size_t l = 0; l < set.num_links(); ++l) {
            const auto level = *set.rates().level_of(set[m].rates[l]);
            if (level == 0) continue;
            s += std::log(params.product(l, level - 1, set.carrier()));
        }
        logw[m] = s;
    }
    return {set.carrier(), softmax(std::move(logw))};
}

ScheduleDistribution queue_stationary_distribution(std::span<const double> q, const FeasibleScheduleSet& set) {
    return {set.carrier(), softmax(queue_log_weights(q, set))};
}

double log_partition(std::span<const double> q, const FeasibleScheduleSet& set) {
    const auto logw = queue_log_weights(q, set);
    const double top = *std::max_element(logw.begin(), logw.end());
    double z = 0.0;
    for (double v : logw) z += std::exp(v - top);
    return top + std::log(z);
}

ThroughputVector link_throughput(std::span<const ScheduleDistribution> pi, std::span<const FeasibleScheduleSet> sets) {
    check_shapes(sets);
    if (pi.size() != sets.size()) throw Error(ErrorKind::structural, "one distribution per carrier expected");
    const std::size_t L = sets[0].num_links();
    ThroughputVector gamma(L, sets.size());
    for (std::size_t c = 0; c < sets.size(); ++c) {
        if (pi[c].size() != sets[c].size()) throw Error(ErrorKind::structural, "distribution and set sizes differ");
        for (std::size_t m = 0; m < sets[c].size(); ++m)
            for (std::size_t l = 0; l < L; ++l) gamma.at(l, c) += pi[c][m] * sets[c][m].rates[l];
    }
    return gamma;
}

double entropy(const ScheduleDistribution& pi) {
    double h = 0.0;
    for (double p : pi.probabilities)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

double objective_f1(const ThroughputVector& gamma, const Utility& u) {
    double f = 0.0;
    for (std::size_t l = 0; l < gamma.num_links(); ++l) f += u.value(gamma.link_total(l));
    return f;
}

double objective_f2(const ThroughputVector& gamma, std::span<const ScheduleDistribution> pi, const Utility& u,
                    double V) {
    double h = 0.0;
    for (const auto& d : pi) h += entropy(d);
    return V * objective_f1(gamma, u) + h;
}

double KktResiduals::max() const {
    return std::max({stationarity_gamma, stationarity_pi, primal_feasibility, complementary_slackness,
                     dual_nonnegativity, simplex});
}

std::vector<double> fixed_point_residual(std::span<const FeasibleScheduleSet> sets, const Utility& u, double V,
                                         std::span<const double> p) {
    check_shapes(sets);
    return evaluate(sets, u, V, p, 0.0, std::numeric_limits<double>::infinity(), false).residual;
}

KktResiduals kkt_residuals(std::span<const FeasibleScheduleSet> sets, const Utility& u, double V,
                           std::span<const double> q) {
    check_shapes(sets);
    const std::size_t L = q.size(), C = sets.size();
    std::vector<ScheduleDistribution> pi;
    for (const auto& set : sets) pi.push_back(queue_stationary_distribution(q, set));
    // primal gamma from pi, so the coupling constraint holds with equality
    const ThroughputVector gamma = link_throughput(pi, sets);
    KktResiduals k;
    for (std::size_t l = 0; l < L; ++l) {
        const double marginal = V * u.derivative(gamma.link_total(l));
        k.stationarity_gamma = std::max(k.stationarity_gamma, std::abs(marginal - q[l]));
        k.dual_nonnegativity = std::max(k.dual_nonnegativity, std::max(0.0, -q[l]));
    }
    for (std::size_t c = 0; c < C; ++c) {
        const double eta = log_partition(q, sets[c]) - 1.0;
        double mass = 0.0;
        std::vector<double> served(L, 0.0);
        for (std::size_t m = 0; m < sets[c].size(); ++m) {
            double score = 0.0;
            for (std::size_t l = 0; l < L; ++l) {
                score += sets[c][m].rates[l] * q[l];
                served[l] += sets[c][m].rates[l] * pi[c][m];
            }
            // underflowed probabilities take their log from the weights
            const double log_pi = pi[c][m] > 0.0 ? std::log(pi[c][m]) : score - (eta + 1.0);
            k.stationarity_pi = std::max(k.stationarity_pi, std::abs(-1.0 - log_pi + score - eta));
            mass += pi[c][m];
        }
        k.simplex = std::max(k.simplex, std::abs(mass - 1.0));
        for (std::size_t l = 0; l < L; ++l) {
            const double slack = gamma.at(l, c) - served[l];
            k.primal_feasibility = std::max(k.primal_feasibility, std::max(0.0, slack));
            k.complementary_slackness = std::max(k.complementary_slackness, std::abs(q[l] * slack));
        }
    }
    return k;
}

OracleSolution subgradient_solve(std::span<const FeasibleScheduleSet> sets, const Utility& u, double V, double q_min,
                                 double q_max, const SolverOptions& options) {
    check_shapes(sets);
    if (!(V > 0.0)) throw Error(ErrorKind::configuration, "V must be positive");
    if (!(q_min > 0.0) || !(q_min < q_max)) throw Error(ErrorKind::configuration, "queue bounds need 0 < q_min < q_max");
    const std::size_t L = sets[0].num_links();
    const double start = std::clamp(V * u.derivative(sets[0].rates().max() / 2.0), q_min, q_max);
    std::vector<double> p(L, start);

    OracleSolution sol;
    auto record = [&](std::span<const double> at) {
        if (options.record_f2) sol.f2_history.push_back(f2_at(sets, u, V, at));
    };

    // Damped projected Newton on the free coordinates; returns true once the
    // drift drops below tol.
    auto polish = [&](Evaluation& ev) {
        for (int step = 0; step < 100; ++step) {
            std::vector<std::size_t> free;
            for (std::size_t l = 0; l < L; ++l) {
                const bool pinned_low = p[l] <= q_min && ev.residual[l] < 0.0;
                const bool pinned_high = p[l] >= q_max && ev.residual[l] > 0.0;
                if (!pinned_low && !pinned_high) free.push_back(l);
            }
            std::vector<double> delta(L, 0.0);
            if (!free.empty()) {
                const std::size_t n = free.size();
                std::vector<double> a(n * n), b(n);
                for (std::size_t i = 0; i < n; ++i) {
                    b[i] = ev.residual[free[i]];
                    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = ev.neg_jacobian[free[i] * L + free[j]];
                }
                if (!cholesky_solve(std::move(a), b, n)) return false;
                for (std::size_t i = 0; i < n; ++i) delta[free[i]] = b[i];
            }
            bool accepted = false;
            for (double t = 1.0; t > 1e-6; t *= 0.5) {
                std::vector<double> trial(L);
                for (std::size_t l = 0; l < L; ++l) trial[l] = std::clamp(p[l] + t * delta[l], q_min, q_max);
                Evaluation next = evaluate(sets, u, V, trial, q_min, q_max, true);
                if (next.drift < ev.drift) {
                    p = std::move(trial);
                    ev = std::move(next);
                    accepted = true;
                    break;
                }
            }
            ++sol.newton_steps;
            ++sol.iterations;
            record(p);
            if (!accepted) return false;
            if (ev.drift < options.tol) return true;
        }
        return false;
    };

    bool converged = false;
    bool newton_available = options.newton_polish;
    double newton_retry_below = options.newton_switch;
    std::uint64_t stall_check = 1024;
    std::vector<double> avg(L, 0.0);
    std::uint64_t avg_count = 0, avg_reset = 64;
    Evaluation ev = evaluate(sets, u, V, p, q_min, q_max, options.newton_polish);
    for (std::uint64_t k = 0; k < options.max_iters; ++k) {
        record(p);
        if (ev.drift < options.tol) {
            converged = true;
            break;
        }
        // Flat maps (large V) crawl under diminishing steps; retry the polish
        // whenever the iteration count doubles as well.
        const bool stalled = k + 1 == stall_check;
        if (stalled) stall_check *= 2;
        if (newton_available && (ev.drift < newton_retry_below || stalled)) {
            if (polish(ev)) {
                converged = true;
                break;
            }
            newton_retry_below = std::min(newton_retry_below, ev.drift / 2.0);
        }
        const double eta = options.eta0 / std::pow(1.0 + static_cast<double>(k), options.eta_decay);
        for (std::size_t l = 0; l < L; ++l) p[l] = std::clamp(p[l] + eta * ev.residual[l], q_min, q_max);
        ++sol.iterations;

        // tail average over a doubling window; adopt it when it is closer
        if (k + 1 == avg_reset) {
            std::fill(avg.begin(), avg.end(), 0.0);
            avg_count = 0;
            avg_reset *= 2;
        }
        for (std::size_t l = 0; l < L; ++l) avg[l] += (p[l] - avg[l]) / static_cast<double>(avg_count + 1);
        ++avg_count;

        ev = evaluate(sets, u, V, p, q_min, q_max, options.newton_polish);
        if (avg_count >= 16 && (k + 1) % 16 == 0) {
            Evaluation at_avg = evaluate(sets, u, V, avg, q_min, q_max, options.newton_polish);
            if (at_avg.drift < ev.drift) {
                p = avg;
                ev = std::move(at_avg);
            }
        }
    }
    if (!converged)
        throw ConvergenceError("fixed-point drift " + fmt(ev.drift) + " above tolerance after " +
                                   std::to_string(sol.iterations) + " iterations",
                               ev.drift);

    sol.q_star = p;
    sol.drift = ev.drift;
    for (const auto& set : sets) sol.pi_star.push_back(queue_stationary_distribution(p, set));
    sol.gamma_star = link_throughput(sol.pi_star, sets);
    sol.f1 = objective_f1(sol.gamma_star, u);
    sol.f2 = objective_f2(sol.gamma_star, sol.pi_star, u, V);
    sol.kkt = kkt_residuals(sets, u, V, p);
    sol.nu.assign(L, std::vector<double>(sets.size()));
    for (std::size_t l = 0; l < L; ++l) std::fill(sol.nu[l].begin(), sol.nu[l].end(), p[l]);
    for (const auto& set : sets) sol.eta.push_back(log_partition(p, set) - 1.0);
    for (std::size_t l = 0; l < L; ++l) {
        if (p[l] <= q_min || p[l] >= q_max) {
            sol.on_boundary = true;
            sol.warning = "fixed point touches the queue bounds at link " + std::to_string(l) +
                          "; widen [q_min, q_max] or change V";
            break;
        }
    }
    return sol;
}

double gap_bound(double V, std::span<const FeasibleScheduleSet> sets) {
    check_shapes(sets);
    std::set<std::vector<double>> all;
    for (const auto& set : sets)
        for (const auto& s : set) all.insert(s.rates);
    return static_cast<double>(sets.size()) * std::log(static_cast<double>(all.size())) / V;
}

std::vector<double> project_to_simplex(std::span<const double> v) {
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0, theta = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        cumulative += sorted[i];
        const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
        if (sorted[i] - t > 0.0) theta = t;
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(0.0, v[i] - theta);
    return out;
}

UtilityOptimum maximize_utility(std::span<const FeasibleScheduleSet> sets, const Utility& u, double tol,
                                std::uint64_t max_iters) {
    check_shapes(sets);
    const std::size_t L = sets[0].num_links(), C = sets.size();
    std::vector<ScheduleDistribution> pi;
    for (const auto& set : sets)
        pi.push_back({set.carrier(), std::vector<double>(set.size(), 1.0 / static_cast<double>(set.size()))});

    auto totals = [&](const std::vector<ScheduleDistribution>& at) {
        return link_throughput(at, sets).link_totals();
    };
    auto value = [&](const std::vector<double>& x) {
        double f = 0.0;
        for (double v : x) f += u.value(v);
        return f;
    };

    UtilityOptimum out;
    double step = 1.0;
    std::vector<double> x = totals(pi);
    double f = value(x);
    for (; out.iterations < max_iters; ++out.iterations) {
        std::vector<double> marginal(L);
        for (std::size_t l = 0; l < L; ++l) marginal[l] = u.derivative(x[l]);
        std::vector<std::vector<double>> grad(C);
        for (std::size_t c = 0; c < C; ++c) {
            grad[c].assign(sets[c].size(), 0.0);
            for (std::size_t m = 0; m < sets[c].size(); ++m)
                for (std::size_t l = 0; l < L; ++l) grad[c][m] += marginal[l] * sets[c][m].rates[l];
        }
        bool moved = false;
        double change = 0.0;
        for (int tries = 0; tries < 80; ++tries) {
            std::vector<ScheduleDistribution> trial = pi;
            double linear = 0.0, dist2 = 0.0;
            change = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                std::vector<double> ascent(sets[c].size());
                for (std::size_t m = 0; m < ascent.size(); ++m) ascent[m] = pi[c][m] + step * grad[c][m];
                trial[c].probabilities = project_to_simplex(ascent);
                for (std::size_t m = 0; m < ascent.size(); ++m) {
                    const double d = trial[c][m] - pi[c][m];
                    linear += grad[c][m] * d;
                    dist2 += d * d;
                    change = std::max(change, std::abs(d));
                }
            }
            const std::vector<double> xt = totals(trial);
            const double ft = value(xt);
            if (ft >= f + linear - dist2 / (2.0 * step)) {
                moved = ft > f;
                pi = std::move(trial);
                x = xt;
                const double gain = ft - f;
                f = ft;
                step *= 1.5;
                if (gain < tol && change < 1e-10) moved = false;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    out.pi = std::move(pi);
    out.gamma = link_throughput(out.pi, sets);
    out.f1 = objective_f1(out.gamma, u);
    return out;
}

void write_oracle_report(std::ostream& out, const OracleSolution& sol, std::span<const FeasibleScheduleSet> sets,
                         double V) {
    const std::size_t L = sol.q_star.size();
    out << "# hetcsma oracle report v1\n";
    out << "V " << fmt(V) << "\nlinks " << L << "\ncarriers " << sets.size() << '\n';
    out << "iterations " << sol.iterations << "\ndrift " << fmt(sol.drift) << '\n';
    if (sol.on_boundary) out << "warning " << sol.warning << '\n';
    for (std::size_t c = 0; c < sets.size(); ++c) {
        out << "\n[carrier " << c << "]\nschedule,probability\n";
        std::vector<std::size_t> order(sets[c].size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return sol.pi_star[c][a] > sol.pi_star[c][b]; });
        for (std::size_t m : order)
            out << schedule_label(sets[c][m], sets[c].rates()) << ',' << fmt(sol.pi_star[c][m]) << '\n';
    }
    out << "\n[links]\nlink,q_star,gamma";
    for (std::size_t c = 0; c < sets.size(); ++c) out << ",gamma_c" << c;
    out << '\n';
    for (std::size_t l = 0; l < L; ++l) {
        out << l << ',' << fmt(sol.q_star[l]) << ',' << fmt(sol.gamma_star.link_total(l));
        for (std::size_t c = 0; c < sets.size(); ++c) out << ',' << fmt(sol.gamma_star.at(l, c));
        out << '\n';
    }
    out << "\n[objectives]\nf1 " << fmt(sol.f1) << "\nf2 " << fmt(sol.f2) << "\ngap_bound " << fmt(gap_bound(V, sets))
        << '\n';
    out << "\n[kkt]\n";
    out << "stationarity_gamma " << fmt(sol.kkt.stationarity_gamma) << '\n';
    out << "stationarity_pi " << fmt(sol.kkt.stationarity_pi) << '\n';
    out << "primal_feasibility " << fmt(sol.kkt.primal_feasibility) << '\n';
    out << "complementary_slackness " << fmt(sol.kkt.complementary_slackness) << '\n';
    out << "dual_nonnegativity " << fmt(sol.kkt.dual_nonnegativity) << '\n';
    out << "simplex " << fmt(sol.kkt.simplex) << '\n';
}

} // namespace hetcsma
