#pragma once

#include "hetcsma/core.hpp"
#include "hetcsma/randacc.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace hetcsma {

/// Per-link controller state, always inside [q_min, q_max].
class VirtualQueueVector {
public:
    VirtualQueueVector() = default;
    VirtualQueueVector(std::vector<double> values, double q_min, double q_max);

    std::size_t size() const noexcept { return q_.size(); }
    double operator[](std::size_t l) const { return q_[l]; }
    const std::vector<double>& values() const noexcept { return q_; }
    double q_min() const noexcept { return lo_; }
    double q_max() const noexcept { return hi_; }

    bool operator==(const VirtualQueueVector&) const = default;

private:
    std::vector<double> q_;
    double lo_ = 0.0;
    double hi_ = 0.0;
};

/// b[f] = b0 / (1 + f)^alpha, or b0 for every frame in constant mode.
/// Constant steps do not satisfy the summability conditions and are meant
/// for tracking experiments only.
struct StepSchedule {
    enum class Family { diminishing, constant };

    Family family = Family::diminishing;
    double b0 = 0.5;
    double alpha = 0.6;

    double at(std::uint64_t frame) const;
    /// Sum b = inf and sum b^2 < inf.
    bool summable_squares() const;
};

enum class SimMode { continuous, slotted };

struct MmuoConfig {
    double V = 10.0;
    double q_min = 0.05;
    double q_max = 30.0;
    StepSchedule step;
    SimMode mode = SimMode::continuous;
    double frame_length = 200.0;
    std::uint64_t slots_per_frame = 500;
    double lambda0 = 0.1;
    Utility utility = Utility::logarithmic();
    /// Keep transmissions that are running at a frame boundary; their
    /// remaining durations are redrawn from the new parameters. When false,
    /// every frame starts idle.
    bool carry_over = true;
    /// Fraction of leading frames excluded from the long-run throughput.
    double burn_in = 0.5;
    /// Freeze the queues (b = 0) while keeping everything else.
    bool frozen = false;

    static MmuoConfig slotted_defaults();
    /// Throws Error(configuration) on invalid combinations.
    void validate() const;
};

/// q' = clip(q + b (U'^{-1}(q / V) - S), q_min, q_max) per link.
VirtualQueueVector update_virtual_queue(const VirtualQueueVector& q, const ServiceVector& service, double step,
                                        const MmuoConfig& cfg);

/// lambda = lambda0 and lambda * mu = exp(r q_l) for every triple; the product
/// is stored exactly. Throws Error(configuration) if r q_l > 700.
AccessParams derive_access_params(const VirtualQueueVector& q, const RateSet& rates, std::size_t num_carriers,
                                  double lambda0);

/// Default starting point: every link at V * U'(r_max / 2).
VirtualQueueVector default_initial_queues(std::size_t num_links, const RateSet& rates, const MmuoConfig& cfg);

/// Runs one frame for the given parameters. `initial` is the carried-over
/// active set (empty for an idle start). The reported `service` drives the
/// queue update; `delivered`, when set, is what the run reports as throughput.
using FrameRunner = std::function<FrameResult(const AccessParams& params, const VirtualQueueVector& q,
                                              const std::vector<Schedule>& initial, Rng& rng)>;

struct MmuoRunResult {
    /// q[f] used during frame f.
    std::vector<VirtualQueueVector> queue_history;
    std::vector<ServiceVector> service_history;
    /// Reported per-(link, carrier) throughput of every frame.
    std::vector<ThroughputVector> throughput_history;
    VirtualQueueVector final_queues;
    /// Time average of the reported throughput after burn-in.
    ThroughputVector long_run;
    /// Per carrier: fraction of post-burn-in time spent in each schedule.
    std::vector<std::unordered_map<ScheduleCode, double>> schedule_frequency;
    std::size_t averaged_from = 0;
    std::uint64_t collisions = 0;
};

MmuoRunResult run_mmuo(const FeasibilityOracle& oracle, const MmuoConfig& cfg, std::uint64_t frames,
                       const VirtualQueueVector& q0, std::uint64_t seed);

/// Same loop with a caller-supplied frame simulator.
MmuoRunResult run_mmuo(const FeasibilityOracle& oracle, const MmuoConfig& cfg, std::uint64_t frames,
                       const VirtualQueueVector& q0, std::uint64_t seed, const FrameRunner& runner);

/// Mean queue vector over the last `fraction` of frames.
std::vector<double> tail_mean_queues(const MmuoRunResult& run, double fraction);

inline constexpr const char* kHistoryCsvVersion = "# hetcsma history v1";

/// frame,link,q,S,throughput_to_date then one throughput_to_date_c<k> column
/// per carrier; throughput to date is the running mean up to that frame.
void write_history_csv(std::ostream& out, const MmuoRunResult& run);

} // namespace hetcsma
