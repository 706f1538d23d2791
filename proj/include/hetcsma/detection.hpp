#pragma once

#include "hetcsma/lte.hpp"
#include "hetcsma/mmuo.hpp"
#include "hetcsma/randacc.hpp"
#include "hetcsma/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hetcsma {

/// A transmission <link, rate, carrier> reported active in a slot.
struct ActivityIndicator {
    std::size_t link = 0;
    double rate = 0.0;
    std::size_t carrier = 0;
    /// Serving basestation of the link.
    std::size_t basestation = 0;
    bool value = true;
    std::uint64_t slot = 0;

    bool operator==(const ActivityIndicator&) const = default;
};

enum class SafetyStatus { safe, vulnerable, outage };

const char* to_string(SafetyStatus s);

struct SafetyReport {
    ActivityIndicator indicator;
    double margin = 0.0;
    SafetyStatus status = SafetyStatus::safe;

    bool operator==(const SafetyReport&) const = default;
};

/// margin = achievable / rate; safe above upsilon, outage below 1, and
/// vulnerable in between with both ends included.
SafetyReport compute_safety(const ActivityIndicator& indicator, double achievable, double upsilon);

enum class DetectionMethod { oracle, m1, m2, m3, m4, m5, m6 };

const char* to_string(DetectionMethod m);
DetectionMethod parse_detection_method(std::string_view name);

struct DetectionConfig {
    DetectionMethod method = DetectionMethod::oracle;
    double upsilon = 1.25;
    /// Lower upsilon by `adaptive_factor` after every quiet window, reset on outage.
    bool adaptive_upsilon = false;
    double adaptive_factor = 0.95;
    std::uint64_t adaptive_window = 500;
    /// Overhearing radius in meters around the listening basestation; unset
    /// means every report is heard.
    std::optional<double> overhear_radius;
    /// Slots between a report and its arrival at neighbours (methods 4-6).
    std::uint64_t message_delay = 1;
    std::uint64_t probe_slots = 1;
    bool rb_prioritization = false;

    bool messaged() const;
    /// 1, 2 or 3 for the six methods; 0 for the oracle.
    int base_method() const;
    void validate() const;
};

/// Attempt by `link` (served by `basestation`) to use `rate` on `carrier`.
struct Attempt {
    std::size_t link = 0;
    double rate = 0.0;
    std::size_t carrier = 0;
    std::size_t basestation = 0;
};

/// Blocked by any heard indicator on the same carrier.
bool method1_feasible(const Attempt& attempt, std::span<const ActivityIndicator> heard);
/// Like method 1 but safe foreign reports do not block. Own-cell reports on
/// the carrier always block.
bool method2_feasible(const Attempt& attempt, std::span<const SafetyReport> heard);

/// Macros need own-cell activity on every lower carrier, femtos on every
/// higher one. `own_active[c]` tells whether the cell transmits on c.
bool rb_priority_feasible(const Attempt& attempt, CellClass cell, std::span<const bool> own_active);

struct ActiveTransmission {
    std::size_t link = 0;
    double rate = 0.0;
    std::size_t carrier = 0;

    bool operator==(const ActiveTransmission&) const = default;
};

/// Powers and active transmissions of every cell. Each (basestation, carrier)
/// powers at most one link.
class RadioState {
public:
    explicit RadioState(const LteModel& model);

    const LteModel& model() const noexcept { return *model_; }
    const PowerAllocation& powers() const noexcept { return alloc_; }
    double power(std::size_t bs, std::size_t carrier) const { return alloc_.at(bs, carrier); }
    void set_power(std::size_t bs, std::size_t carrier, double p) { alloc_.at(bs, carrier) = p; }
    std::vector<double> carrier_powers(std::size_t carrier) const;

    /// Transmission on (bs, carrier), if any.
    std::optional<ActiveTransmission> active(std::size_t bs, std::size_t carrier) const;
    std::vector<ActiveTransmission> active_all() const;
    void start(const ActiveTransmission& t, double power);
    void stop(std::size_t bs, std::size_t carrier);
    bool busy(std::size_t bs, std::size_t carrier) const { return alloc_.served(bs, carrier) != PowerAllocation::none; }

    double link_cqi(std::size_t link, std::size_t carrier) const;
    /// Continuous normalized rate log2(1 + SINR) / lowest physical rate that
    /// `link` would get with power p on the carrier.
    double achievable(std::size_t link, std::size_t carrier, double power) const;
    /// One report per active transmission, ordered by basestation then carrier.
    std::vector<SafetyReport> reports(double upsilon, std::uint64_t slot) const;
    /// Per-carrier schedule of the active targets.
    std::vector<Schedule> schedules() const;

    bool operator==(const RadioState& o) const { return alloc_ == o.alloc_ && rates_ == o.rates_; }

private:
    const LteModel* model_;
    PowerAllocation alloc_;
    std::vector<double> rates_;  // per (bs, carrier)
};

struct ProbeOutcome {
    bool feasible = true;
    /// Links whose reports fell into outage under the probe.
    std::vector<std::size_t> disrupted;
};

/// Applies the attempt's power on its carrier and checks every other active
/// transmission against the resulting interference. On failure the power is
/// restored to its previous value and the attempt is infeasible; on success
/// the power stays set.
ProbeOutcome method3_probe(RadioState& state, const Attempt& attempt, double probe_power);

/// Rolling report history for delivery with delay.
class ReportLog {
public:
    explicit ReportLog(std::uint64_t keep = 64) : keep_(keep) {}

    void record(std::uint64_t slot, std::vector<SafetyReport> reports);
    /// Reports stamped with `slot`, or empty if none were kept.
    std::span<const SafetyReport> at(std::uint64_t slot) const;

private:
    std::uint64_t keep_;
    std::deque<std::pair<std::uint64_t, std::vector<SafetyReport>>> slots_;
};

/// Reports visible to `receiver` when deciding in `slot`. Overheard delivery
/// shows that slot's reports from links within the overhearing radius;
/// messaged delivery shows the receiver's own cell immediately and every
/// other cell `message_delay` slots late. Sorted by sender, then link.
std::vector<SafetyReport> deliver(const ReportLog& log, const LteModel& model, std::size_t receiver,
                                  std::uint64_t slot, const DetectionConfig& cfg);

/// Local estimate of the safety threshold.
class AdaptiveUpsilon {
public:
    AdaptiveUpsilon(double initial, double factor, std::uint64_t window, double floor = 1.0 + 1e-6);

    double value() const noexcept { return value_; }
    /// Call once per slot with whether any outage was observed.
    void observe(bool outage);

private:
    double initial_;
    double factor_;
    std::uint64_t window_;
    double floor_;
    double value_;
    std::uint64_t quiet_ = 0;
};

enum class Decision { accept, reject, collision, outage };

const char* to_string(Decision d);

struct DetectionLogEntry {
    std::uint64_t slot = 0;
    DetectionMethod method = DetectionMethod::oracle;
    std::size_t link = 0;
    double rate = 0.0;
    std::size_t carrier = 0;
    Decision decision = Decision::accept;
    /// Empty for accepted attempts.
    std::string blocking_reason;

    bool operator==(const DetectionLogEntry&) const = default;
};

inline constexpr const char* kDetectionCsvVersion = "# hetcsma detection v1";
inline constexpr const char* kDetectionCsvHeader = "slot,method,link,rate,carrier,decision,blocking_reason";

void write_detection_csv(std::ostream& out, std::span<const DetectionLogEntry> entries);

struct LteSimConfig {
    DetectionConfig detection;
    /// Let proportional fair pick the served user for the power MMUO sets.
    bool proportional_fair = false;
    double pf_beta = 0.05;
    double pf_floor = 1e-6;
    std::uint64_t slots_per_frame = 500;
    bool record_log = false;
};

struct LteSimStats {
    std::uint64_t slots = 0;
    std::uint64_t attempts = 0;
    std::uint64_t accepted = 0;
    std::uint64_t collisions = 0;
    /// Slot-link pairs where an active link could not carry its rate.
    std::uint64_t outage_slots = 0;
    std::uint64_t failed_probes = 0;
    /// Per (basestation, carrier): slots with a transmission.
    std::vector<std::uint64_t> busy_slots;
};

/// Slotted LTE downlink driven by access parameters from MMUO. Attempts
/// follow geometric backoff and holding times; admission goes through the
/// exact feasibility check or one of the detection methods. Powers follow
/// the witness allocation under the exact check and are fixed at start
/// otherwise. State carries across frames.
class LteSlotSimulator {
public:
    LteSlotSimulator(const LteModel& model, LteSimConfig cfg);

    FrameResult run_frame(const AccessParams& params, const std::vector<Schedule>& initial, Rng& rng);
    /// Adapter for run_mmuo.
    FrameRunner runner();

    const RadioState& radio() const noexcept { return radio_; }
    RadioState& radio() noexcept { return radio_; }
    const LteSimStats& stats() const noexcept { return stats_; }
    const std::vector<DetectionLogEntry>& log() const noexcept { return log_; }
    const PfState& pf() const noexcept { return pf_; }
    double upsilon() const noexcept { return upsilon_.value(); }
    const LteOracle& oracle() const noexcept { return oracle_; }

private:
    struct Pending {
        Attempt attempt;
        double power = 0.0;
    };

    void sync_initial(const std::vector<Schedule>& initial);
    void apply_witness();
    bool decide(const Attempt& a, std::uint64_t slot, Pending& out, std::string& reason);
    void record(std::uint64_t slot, const Attempt& a, Decision d, std::string reason);

    const LteModel& model_;
    LteSimConfig cfg_;
    LteOracle oracle_;
    RadioState radio_;
    ReportLog reports_;
    AdaptiveUpsilon upsilon_;
    PfState pf_;
    LteSimStats stats_;
    std::vector<DetectionLogEntry> log_;
    std::vector<std::uint64_t> remaining_;  // per (bs, carrier) holding slots left
    std::vector<std::uint8_t> in_outage_;   // per (bs, carrier)
    std::vector<std::uint64_t> disrupted_;  // per (bs, carrier) slots left in a failed probe
    std::uint64_t slot_ = 0;
};

} // namespace hetcsma
