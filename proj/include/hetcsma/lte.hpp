#pragma once

#include "hetcsma/core.hpp"

#include <cstddef>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hetcsma {

enum class CellClass { macro, femto };

double dbm_to_watts(double dbm);

struct Basestation {
    std::size_t id = 0;
    double x = 0.0;
    double y = 0.0;
    CellClass cell = CellClass::macro;
    double power_dbm = 0.0;
    /// Closed subscriber group; absent means open access.
    std::optional<std::vector<std::size_t>> csg;

    double max_power() const { return dbm_to_watts(power_dbm); }
    bool admits(std::size_t user) const;
    bool operator==(const Basestation&) const = default;
};

struct User {
    std::size_t id = 0;
    double x = 0.0;
    double y = 0.0;
    bool operator==(const User&) const = default;
};

/// Radio constants shared by every resource block.
struct PhysicalLayer {
    double bandwidth_hz = 5e6;
    std::size_t num_rbs = 3;
    double noise_dbm_per_hz = -165.0;
    double pathloss_k = 0.525;
    double pathloss_alpha = 3.523;
    /// Physical spectral efficiencies in bits/s/Hz, strictly increasing.
    std::vector<double> rates_bps_per_hz{8.0, 16.0};

    double rb_bandwidth() const { return bandwidth_hz / static_cast<double>(num_rbs); }
    /// Noise power per resource block in watts.
    double noise_power() const;
    double gain(double distance) const;

    /// Rates as multiples of the lowest physical rate.
    RateSet normalized_rates() const;
    double to_normalized(double bps_per_hz) const;
    double to_physical(double normalized) const;
    /// Throughput in bits/s of a normalized rate on one resource block.
    double bits_per_second(double normalized) const { return to_physical(normalized) * rb_bandwidth(); }

    /// Minimum SINR for a normalized rate: 2^{physical} - 1.
    double sinr_threshold(double normalized) const;
    /// Largest normalized rate whose threshold is met, or 0.
    double rate_for_sinr(double sinr) const;

    bool operator==(const PhysicalLayer&) const = default;
};

/// Replaces the distance-based gain of one (basestation, user, carrier).
struct GainOverride {
    std::size_t basestation = 0;
    std::size_t user = 0;
    std::size_t carrier = 0;
    double gain = 0.0;
    bool operator==(const GainOverride&) const = default;
};

struct Scenario {
    PhysicalLayer phy;
    std::vector<Basestation> basestations;
    std::vector<User> users;
    std::vector<GainOverride> gain_overrides;

    /// Throws Error(configuration) naming the offending entry.
    void validate() const;
    bool operator==(const Scenario&) const = default;
};

/// k d^{-alpha}. Throws Error(domain) for d <= 0.
double pathloss(double distance, double k = 0.525, double alpha = 3.523);

/// Serving basestation per user: strongest p_i g among admissible cells,
/// ties to the lowest id. Throws Error(configuration) if a user has none.
std::vector<std::size_t> associate(std::span<const User> users, std::span<const Basestation> basestations,
                                   const PhysicalLayer& phy);

/// g / (noise + sum of interfering p g).
double cqi(double serving_gain, double noise, std::span<const double> interferer_powers,
           std::span<const double> interferer_gains);

/// Normalized rate reached with power p at the given CQI.
double rate_from_power(double power, double cqi_value, const PhysicalLayer& phy);

/// Smallest power whose SINR meets the threshold of rate r. Throws
/// Error(domain) if r is not a member of the rate set.
double power_for_rate(double rate, double cqi_value, const PhysicalLayer& phy);

/// Per-(basestation, carrier) transmit power, each powering at most one user.
struct PowerAllocation {
    std::size_t num_basestations = 0;
    std::size_t num_carriers = 0;
    std::vector<double> power;  // bs-major
    /// Served link per (basestation, carrier), or npos.
    std::vector<std::size_t> user;

    static constexpr std::size_t none = static_cast<std::size_t>(-1);

    PowerAllocation() = default;
    PowerAllocation(std::size_t bs, std::size_t carriers)
        : num_basestations(bs), num_carriers(carriers), power(bs * carriers, 0.0), user(bs * carriers, none) {}

    double& at(std::size_t bs, std::size_t c) { return power[bs * num_carriers + c]; }
    double at(std::size_t bs, std::size_t c) const { return power[bs * num_carriers + c]; }
    std::size_t& served(std::size_t bs, std::size_t c) { return user[bs * num_carriers + c]; }
    std::size_t served(std::size_t bs, std::size_t c) const { return user[bs * num_carriers + c]; }
    double total(std::size_t bs) const;
    bool operator==(const PowerAllocation&) const = default;
};

enum class FeasibilityVerdict { feasible, same_cell_conflict, non_convergent, over_budget };

const char* to_string(FeasibilityVerdict v);

struct CarrierPower {
    FeasibilityVerdict verdict = FeasibilityVerdict::feasible;
    std::vector<double> power;  // per basestation
    std::size_t iterations = 0;
};

struct FeasibilityCheck {
    FeasibilityVerdict verdict = FeasibilityVerdict::feasible;
    std::optional<PowerAllocation> witness;

    bool feasible() const { return verdict == FeasibilityVerdict::feasible; }
};

/// Scenario with association, gains and cell membership precomputed. Links
/// are users; link l is served by basestation serving(l).
class LteModel {
public:
    explicit LteModel(Scenario scenario);

    const Scenario& scenario() const noexcept { return scenario_; }
    const PhysicalLayer& phy() const noexcept { return scenario_.phy; }
    const RateSet& rates() const noexcept { return rates_; }
    std::size_t num_links() const noexcept { return scenario_.users.size(); }
    std::size_t num_carriers() const noexcept { return scenario_.phy.num_rbs; }
    std::size_t num_basestations() const noexcept { return scenario_.basestations.size(); }
    double noise() const noexcept { return noise_; }

    std::size_t serving(std::size_t link) const { return serving_[link]; }
    const std::vector<std::size_t>& cell_links(std::size_t bs) const { return cells_[bs]; }
    double gain(std::size_t bs, std::size_t user, std::size_t carrier) const {
        return gains_[(bs * num_links() + user) * num_carriers() + carrier];
    }

    /// CQI of a link on a carrier given every basestation's power there;
    /// the serving cell's own entry is ignored.
    double link_cqi(std::size_t link, std::size_t carrier, std::span<const double> bs_power) const;

    /// Power iteration for one carrier's targets, starting from zero. The
    /// per-carrier budget is the basestation's full power.
    CarrierPower solve_carrier(const Schedule& targets, std::size_t max_iters = 10'000, double rel_tol = 1e-9) const;

    /// Full check of one schedule per carrier including the cross-carrier
    /// budget; on success the witness meets every target SINR exactly or
    /// above.
    FeasibilityCheck check(std::span<const Schedule> per_carrier) const;

private:
    Scenario scenario_;
    RateSet rates_;
    double noise_;
    std::vector<std::size_t> serving_;
    std::vector<std::vector<std::size_t>> cells_;
    std::vector<double> gains_;
};

/// lte_feasibility_check on a full cross-carrier target matrix.
FeasibilityCheck lte_feasibility_check(const LteModel& model, std::span<const Schedule> per_carrier);

/// Feasibility backend over an LteModel. Per-carrier power solutions are
/// memoized; the memo is guarded so the oracle can be shared across threads.
class LteOracle : public FeasibilityOracle {
public:
    explicit LteOracle(const LteModel& model) : model_(model) {}

    std::size_t num_links() const override { return model_.num_links(); }
    std::size_t num_carriers() const override { return model_.num_carriers(); }
    const RateSet& rates() const override { return model_.rates(); }
    bool is_feasible(const Schedule& s) const override;
    bool is_jointly_feasible(std::span<const Schedule> per_carrier) const override;

    /// Cached per-carrier solve.
    CarrierPower carrier_power(const Schedule& s) const;
    const LteModel& model() const noexcept { return model_; }

private:
    const LteModel& model_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::uint64_t, CarrierPower> memo_;
};

struct PfState {
    std::vector<double> average;
    double beta = 0.05;
    double floor = 1e-6;

    static PfState initial(std::size_t num_links, double beta = 0.05, double start = 1.0, double floor = 1e-6);
};

/// argmax over candidates of achievable / average, ties to the lowest link id.
/// `achievable[i]` belongs to `candidates[i]`.
std::size_t pf_select(const PfState& state, std::span<const std::size_t> candidates,
                      std::span<const double> achievable);

/// Same, with the achievable rate of each candidate computed as if the full
/// available power went to it under the given basestation powers.
std::size_t pf_select(const LteModel& model, const PfState& state, std::span<const std::size_t> candidates,
                      double available_power, std::size_t carrier, std::span<const double> bs_power);

/// R <- (1 - beta) R + beta served, floored.
PfState pf_update(const PfState& state, std::span<const double> served);

/// Canonical toy layout: one macro and two closed femtos on a line, six
/// users. Each femto pair is mirror-symmetric about that line.
Scenario toy_scenario();

/// Stanza format with `[physical]`, `[basestation]`, `[user]` and `[gain]`
/// sections of `key = value` lines. Errors name the line and field.
Scenario parse_scenario(std::string_view text);
std::string serialize_scenario(const Scenario& scenario);
Scenario load_scenario(const std::string& path);

} // namespace hetcsma
