#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hetcsma {

/// Strictly increasing set of positive normalized rates. Level 0 denotes
/// silence; level k (1-based) maps to the k-th smallest rate.
class RateSet {
public:
    explicit RateSet(std::vector<double> rates);

    std::size_t size() const noexcept { return rates_.size(); }
    double operator[](std::size_t i) const { return rates_[i]; }
    double max() const noexcept { return rates_.back(); }
    const std::vector<double>& values() const noexcept { return rates_; }

    /// Rate for a level in 0..size(); level 0 is 0.0.
    double rate_of_level(std::size_t level) const;
    /// Level of a value in R ∪ {0}, or nullopt if the value is not a member.
    std::optional<std::size_t> level_of(double rate) const;
    bool contains(double rate) const { return rate != 0.0 && level_of(rate).has_value(); }

    bool operator==(const RateSet&) const = default;

private:
    std::vector<double> rates_;
};

/// Per-carrier rate vector; entry 0 means the link is silent on that carrier.
struct Schedule {
    std::size_t carrier = 0;
    std::vector<double> rates;

    bool idle() const;
    std::size_t active_count() const;
    bool operator==(const Schedule&) const = default;
};

/// Base-(|R|+1) encoding of a schedule's rate levels; link 0 is the least
/// significant digit. Unique per carrier.
using ScheduleCode = std::uint64_t;

ScheduleCode encode(const Schedule& s, const RateSet& rates);
Schedule decode(ScheduleCode code, std::size_t num_links, std::size_t carrier, const RateSet& rates);

/// Compact label: "0h2l4l" for two-rate sets (l = low, h = high), "0r1-3r2"
/// level tags otherwise, "idle" for the all-zero schedule.
std::string schedule_label(const Schedule& s, const RateSet& rates);
Schedule parse_schedule_label(std::string_view label, std::size_t num_links, std::size_t carrier,
                              const RateSet& rates);

/// A finite set of schedules for one carrier that always contains the idle
/// schedule. Construction rejects duplicates and shape mismatches.
class FeasibleScheduleSet {
public:
    FeasibleScheduleSet(std::size_t carrier, std::size_t num_links, const RateSet& rates,
                        std::vector<Schedule> schedules);

    std::size_t carrier() const noexcept { return carrier_; }
    std::size_t num_links() const noexcept { return num_links_; }
    std::size_t size() const noexcept { return schedules_.size(); }
    const Schedule& operator[](std::size_t i) const { return schedules_[i]; }
    const std::vector<Schedule>& schedules() const noexcept { return schedules_; }
    const RateSet& rates() const noexcept { return rates_; }

    bool contains(const Schedule& s) const;
    std::optional<std::size_t> index_of(const Schedule& s) const;
    /// True iff zeroing any single entry of a member yields another member.
    bool is_downward_closed() const;

    auto begin() const { return schedules_.begin(); }
    auto end() const { return schedules_.end(); }

private:
    std::size_t carrier_;
    std::size_t num_links_;
    RateSet rates_;
    std::vector<Schedule> schedules_;  // sorted by code
    std::unordered_map<ScheduleCode, std::size_t> index_;
};

/// U(x) = log(eps + x). The only family needed here; eps keeps the inverse
/// derivative bounded near zero throughput.
class Utility {
public:
    static Utility logarithmic(double epsilon = 1e-3);

    double epsilon() const noexcept { return epsilon_; }
    double value(double x) const;
    double derivative(double x) const;
    /// U'^{-1}(y) restricted to x >= 0, i.e. max(0, 1/y - eps).
    double inverse_derivative(double y) const;

private:
    explicit Utility(double epsilon) : epsilon_(epsilon) {}
    double epsilon_;
};

double utility_value(const Utility& u, double x);
double utility_inv_derivative(const Utility& u, double y);

/// Link-by-carrier matrix of normalized rates.
class ThroughputVector {
public:
    ThroughputVector() = default;
    ThroughputVector(std::size_t num_links, std::size_t num_carriers)
        : links_(num_links), carriers_(num_carriers), values_(num_links * num_carriers, 0.0) {}

    std::size_t num_links() const noexcept { return links_; }
    std::size_t num_carriers() const noexcept { return carriers_; }
    double& at(std::size_t link, std::size_t carrier) { return values_[link * carriers_ + carrier]; }
    double at(std::size_t link, std::size_t carrier) const { return values_[link * carriers_ + carrier]; }
    double link_total(std::size_t link) const;
    std::vector<double> link_totals() const;

private:
    std::size_t links_ = 0;
    std::size_t carriers_ = 0;
    std::vector<double> values_;
};

/// Answers whether a schedule is realizable. Implementations must be
/// referentially transparent for a fixed scenario snapshot.
class FeasibilityOracle {
public:
    virtual ~FeasibilityOracle() = default;

    virtual std::size_t num_links() const = 0;
    virtual std::size_t num_carriers() const = 0;
    virtual const RateSet& rates() const = 0;

    /// Membership in N_c for the schedule's carrier. Callers guarantee shape.
    virtual bool is_feasible(const Schedule& s) const = 0;

    /// Joint check of one schedule per carrier. The default treats carriers
    /// as independent; backends with shared budgets override it.
    virtual bool is_jointly_feasible(std::span<const Schedule> per_carrier) const;
};

/// Throws Error(structural) unless `s` fits the oracle's links, carriers and rates.
void validate_schedule(const FeasibilityOracle& oracle, const Schedule& s);

/// Validated membership test.
bool is_feasible(const FeasibilityOracle& oracle, const Schedule& s);

/// Exhaustive enumeration of N_c. Refuses with Error(resource) when the
/// (|R|+1)^L candidate count exceeds `candidate_cap`, and with
/// Error(structural) if the backend turns out not to be downward closed.
FeasibleScheduleSet enumerate_feasible(const FeasibilityOracle& oracle, std::size_t carrier,
                                       std::uint64_t candidate_cap = 10'000'000);

/// Oracle backed by a predicate; handy for conflict-graph style instances.
class PredicateOracle : public FeasibilityOracle {
public:
    using Predicate = std::function<bool(const Schedule&)>;

    PredicateOracle(std::size_t num_links, std::size_t num_carriers, RateSet rates, Predicate pred)
        : links_(num_links), carriers_(num_carriers), rates_(std::move(rates)), pred_(std::move(pred)) {}

    std::size_t num_links() const override { return links_; }
    std::size_t num_carriers() const override { return carriers_; }
    const RateSet& rates() const override { return rates_; }
    bool is_feasible(const Schedule& s) const override { return pred_(s); }

private:
    std::size_t links_;
    std::size_t carriers_;
    RateSet rates_;
    Predicate pred_;
};

/// Oracle backed by explicit per-carrier schedule sets.
class TableOracle : public FeasibilityOracle {
public:
    explicit TableOracle(std::vector<FeasibleScheduleSet> per_carrier);

    std::size_t num_links() const override { return sets_.front().num_links(); }
    std::size_t num_carriers() const override { return sets_.size(); }
    const RateSet& rates() const override { return sets_.front().rates(); }
    bool is_feasible(const Schedule& s) const override { return sets_[s.carrier].contains(s); }

private:
    std::vector<FeasibleScheduleSet> sets_;
};

/// Pairwise conflict model: a schedule is feasible iff no two active links
/// conflict. Rates do not matter.
PredicateOracle conflict_graph_oracle(std::size_t num_links, std::size_t num_carriers, RateSet rates,
                                      std::vector<std::pair<std::size_t, std::size_t>> conflicts);

} // namespace hetcsma
