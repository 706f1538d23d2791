#pragma once

#include "hetcsma/core.hpp"
#include "hetcsma/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <vector>

namespace hetcsma {

/// Per-(link, rate, carrier) access rate and mean holding time. The product
/// is stored as given so that the exp(r q) contract can be checked exactly.
class AccessParams {
public:
    AccessParams() = default;
    AccessParams(std::size_t num_links, std::size_t num_rates, std::size_t num_carriers);

    std::size_t num_links() const noexcept { return links_; }
    std::size_t num_rates() const noexcept { return rates_; }
    std::size_t num_carriers() const noexcept { return carriers_; }

    /// `rate_index` is 0-based into the RateSet.
    double lambda(std::size_t link, std::size_t rate_index, std::size_t carrier) const {
        return entries_[index(link, rate_index, carrier)].lambda;
    }
    double mu(std::size_t link, std::size_t rate_index, std::size_t carrier) const {
        return entries_[index(link, rate_index, carrier)].mu;
    }
    double product(std::size_t link, std::size_t rate_index, std::size_t carrier) const {
        return entries_[index(link, rate_index, carrier)].product;
    }

    /// Sets lambda and mu; the stored product is lambda * mu.
    void set(std::size_t link, std::size_t rate_index, std::size_t carrier, double lambda, double mu);
    /// Sets lambda and the product; mu is derived as product / lambda.
    void set_product(std::size_t link, std::size_t rate_index, std::size_t carrier, double lambda, double product);

    /// Uniform parameters for every triple.
    static AccessParams uniform(std::size_t num_links, std::size_t num_rates, std::size_t num_carriers,
                                double lambda, double mu);

private:
    struct Entry {
        double lambda = 1.0;
        double mu = 1.0;
        double product = 1.0;
    };
    std::size_t index(std::size_t link, std::size_t rate_index, std::size_t carrier) const {
        return (link * rates_ + rate_index) * carriers_ + carrier;
    }

    std::size_t links_ = 0;
    std::size_t rates_ = 0;
    std::size_t carriers_ = 0;
    std::vector<Entry> entries_;
};

enum class EventKind { attempt, start, end, collision };

const char* to_string(EventKind kind);

struct TraceEvent {
    double time = 0.0;
    EventKind kind = EventKind::attempt;
    std::size_t link = 0;
    double rate = 0.0;
    std::size_t carrier = 0;
    /// Second party of a collision; equals `link` otherwise.
    std::size_t peer = 0;

    bool operator==(const TraceEvent&) const = default;
};

struct EventTrace {
    std::size_t num_links = 0;
    std::size_t num_carriers = 0;
    double frame_length = 0.0;
    std::vector<TraceEvent> events;

    bool operator==(const EventTrace&) const = default;
};

/// Per-link S_l: served rate x duration summed over carriers, over frame length.
struct ServiceVector {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t l) const { return values[l]; }
    bool operator==(const ServiceVector&) const = default;
};

struct FrameOptions {
    bool record_trace = false;
    /// Attempts are frequent; they are only logged when this is set as well.
    bool record_attempts = false;
    bool record_occupancy = false;
    /// Transmissions active at frame start, one schedule per carrier; empty
    /// means idle. Holding times are redrawn from the new parameters.
    std::vector<Schedule> initial_state;
};

struct FrameResult {
    EventTrace trace;
    ServiceVector service;
    /// Same accounting split by carrier (link x carrier).
    ThroughputVector per_carrier;
    /// Per carrier: fraction of the frame spent in each schedule.
    std::vector<std::unordered_map<ScheduleCode, double>> occupancy;
    /// Active set at frame end, one schedule per carrier.
    std::vector<Schedule> final_state;
    std::uint64_t collisions = 0;
    /// Set by simulators whose delivered throughput differs from the service
    /// that drives the controller (local schedulers on top of random access).
    std::optional<ThroughputVector> delivered;
};

/// Continuous-time random access over one frame. Every triple <l, r, c> runs
/// an independent Exp(lambda) attempt clock; an attempt that keeps the joint
/// schedule feasible starts a transmission lasting Exp(1/mu). Transmissions
/// still running at the frame end are truncated there.
FrameResult run_continuous_frame(const FeasibilityOracle& oracle, const AccessParams& params,
                                 double frame_length, Rng& rng, const FrameOptions& options = {});
FrameResult run_continuous_frame(const FeasibilityOracle& oracle, const AccessParams& params,
                                 double frame_length, std::uint64_t seed, const FrameOptions& options = {});

/// Slotted variant: geometric backoff (mean 1/lambda slots) and geometric
/// holding (mean mu slots). Attempts landing in the same slot are admitted
/// jointly; if together they break feasibility every one of them is dropped
/// and a collision is logged per conflicting pair.
FrameResult run_slotted_frame(const FeasibilityOracle& oracle, const AccessParams& params,
                              std::uint64_t slots, Rng& rng, const FrameOptions& options = {});
FrameResult run_slotted_frame(const FeasibilityOracle& oracle, const AccessParams& params,
                              std::uint64_t slots, std::uint64_t seed, const FrameOptions& options = {});

/// Recomputes S_l from start/end pairs. Throws Error(structural) on
/// unmatched starts or ends.
ServiceVector service_from_trace(const EventTrace& trace);

/// Re-scans a trace and returns false if any carrier's active set leaves N_c.
bool trace_respects_feasibility(const EventTrace& trace, const FeasibilityOracle& oracle);

/// CSV: versioned comment line, then time,event_kind,link,rate,carrier,peer.
void write_trace_csv(std::ostream& out, const EventTrace& trace);

inline constexpr const char* kTraceCsvVersion = "# hetcsma trace v1";
inline constexpr const char* kTraceCsvHeader = "time,event_kind,link,rate,carrier,peer";

} // namespace hetcsma
