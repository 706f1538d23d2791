#include "hetcsma/randacc.hpp"

#include "hetcsma/error.hpp"
#include "hetcsma/format.hpp"

#include <cmath>
#include <ostream>
#include <queue>

namespace hetcsma {

AccessParams::AccessParams(std::size_t num_links, std::size_t num_rates, std::size_t num_carriers)
    : links_(num_links), rates_(num_rates), carriers_(num_carriers),
      entries_(num_links * num_rates * num_carriers) {}

void AccessParams::set(std::size_t link, std::size_t rate_index, std::size_t carrier, double lambda, double mu) {
    if (!(lambda > 0.0) || !(mu > 0.0) || !std::isfinite(lambda) || !std::isfinite(mu))
        throw Error(ErrorKind::configuration, "access rate and holding time must be positive and finite");
    auto& e = entries_.at(index(link, rate_index, carrier));
    e.lambda = lambda;
    e.mu = mu;
    e.product = lambda * mu;
}

void AccessParams::set_product(std::size_t link, std::size_t rate_index, std::size_t carrier, double lambda,
                               double product) {
    if (!(lambda > 0.0) || !(product > 0.0) || !std::isfinite(lambda) || !std::isfinite(product))
        throw Error(ErrorKind::configuration, "access rate and product must be positive and finite");
    auto& e = entries_.at(index(link, rate_index, carrier));
    e.lambda = lambda;
    e.mu = product / lambda;
    e.product = product;
}

AccessParams AccessParams::uniform(std::size_t num_links, std::size_t num_rates, std::size_t num_carriers,
                                   double lambda, double mu) {
    AccessParams p(num_links, num_rates, num_carriers);
    for (std::size_t l = 0; l < num_links; ++l)
        for (std::size_t k = 0; k < num_rates; ++k)
            for (std::size_t c = 0; c < num_carriers; ++c) p.set(l, k, c, lambda, mu);
    return p;
}

const char* to_string(EventKind kind) {
    switch (kind) {
    case EventKind::attempt: return "attempt";
    case EventKind::start: return "start";
    case EventKind::end: return "end";
    case EventKind::collision: return "collision";
    }
    return "?";
}

namespace {

struct Triple {
    std::size_t link;
    std::size_t rate_index;
    std::size_t carrier;
};

// Shared bookkeeping for both simulators: active set, service accumulation,
// occupancy and trace.
class FrameState {
public:
    FrameState(const FeasibilityOracle& oracle, const AccessParams& params, double length,
               const FrameOptions& options, bool continuous)
        : oracle_(oracle), opts_(options), continuous_(continuous), L_(oracle.num_links()), R_(oracle.rates().size()),
          C_(oracle.num_carriers()), length_(length), acc_(L_, C_), last_change_(C_, 0.0),
          occupancy_(options.record_occupancy ? C_ : 0) {
        if (params.num_links() != L_ || params.num_rates() != R_ || params.num_carriers() != C_)
            throw Error(ErrorKind::structural, "access parameters do not match the oracle's dimensions");
        for (std::size_t c = 0; c < C_; ++c) active_.push_back(Schedule{c, std::vector<double>(L_, 0.0)});
        if (!options.initial_state.empty()) {
            if (options.initial_state.size() != C_)
                throw Error(ErrorKind::structural, "initial state needs one schedule per carrier");
            for (std::size_t c = 0; c < C_; ++c) {
                const auto& s = options.initial_state[c];
                if (s.carrier != c) throw Error(ErrorKind::structural, "initial state carriers out of order");
                validate_schedule(oracle, s);
                active_[c] = s;
            }
            if (!oracle.is_jointly_feasible(active_))
                throw Error(ErrorKind::structural, "initial state is not feasible");
        }
        trace_.num_links = L_;
        trace_.num_carriers = C_;
        trace_.frame_length = length;
    }

    std::size_t triples() const { return L_ * R_ * C_; }
    Triple triple(std::size_t i) const { return {i / (R_ * C_), (i / C_) % R_, i % C_}; }
    double rate(const Triple& t) const { return oracle_.rates()[t.rate_index]; }

    bool initially_active(const Triple& t) const { return active_[t.carrier].rates[t.link] == rate(t); }
    bool link_busy(const Triple& t) const { return active_[t.carrier].rates[t.link] != 0.0; }

    // Tentatively adds the transmissions and reports joint feasibility; the
    // state is left unchanged.
    bool admissible(std::span<const Triple> ts) {
        for (std::size_t i = 0; i < ts.size(); ++i)
            for (std::size_t j = i + 1; j < ts.size(); ++j)
                if (ts[i].link == ts[j].link && ts[i].carrier == ts[j].carrier) return false;
        for (const auto& t : ts)
            if (link_busy(t)) return false;
        for (const auto& t : ts) active_[t.carrier].rates[t.link] = rate(t);
        const bool ok = oracle_.is_jointly_feasible(active_);
        for (const auto& t : ts) active_[t.carrier].rates[t.link] = 0.0;
        return ok;
    }

    void start(const Triple& t, double time) {
        touch(t.carrier, time);
        active_[t.carrier].rates[t.link] = rate(t);
        log(time, EventKind::start, t, t.link);
    }

    void end(const Triple& t, double started, double time) {
        touch(t.carrier, time);
        active_[t.carrier].rates[t.link] = 0.0;
        acc_.at(t.link, t.carrier) += rate(t) * (time - started);
        log(time, EventKind::end, t, t.link);
    }

    void attempt(const Triple& t, double time) {
        if (opts_.record_trace && opts_.record_attempts) log(time, EventKind::attempt, t, t.link);
    }

    void collision(const Triple& a, const Triple& b, double time) {
        ++collisions_;
        log(time, EventKind::collision, a, b.link);
    }

    // Slotted occupancy: one slot in the current schedule of every carrier.
    void count_slot() {
        for (std::size_t c = 0; c < occupancy_.size(); ++c)
            occupancy_[c][encode(active_[c], oracle_.rates())] += 1.0;
    }

    // Truncates running transmissions at the frame end. Both spans are
    // indexed like triple().
    FrameResult finish(std::span<const char> transmitting, std::span<const double> started) {
        if (continuous_)
            for (std::size_t c = 0; c < C_; ++c) touch(c, length_);
        std::vector<Schedule> final_state = active_;
        for (std::size_t i = 0; i < transmitting.size(); ++i)
            if (transmitting[i]) end(triple(i), started[i], length_);
        FrameResult out;
        out.service.values.assign(L_, 0.0);
        for (std::size_t l = 0; l < L_; ++l) {
            double total = 0.0;
            for (std::size_t c = 0; c < C_; ++c) total += acc_.at(l, c);
            out.service.values[l] = total / length_;
        }
        out.per_carrier = ThroughputVector(L_, C_);
        for (std::size_t l = 0; l < L_; ++l)
            for (std::size_t c = 0; c < C_; ++c) out.per_carrier.at(l, c) = acc_.at(l, c) / length_;
        for (auto& occ : occupancy_)
            for (auto& [code, v] : occ) v /= length_;
        out.occupancy = std::move(occupancy_);
        out.final_state = std::move(final_state);
        out.trace = std::move(trace_);
        out.collisions = collisions_;
        return out;
    }

    const std::vector<Schedule>& active() const { return active_; }

private:
    void touch(std::size_t c, double time) {
        if (occupancy_.empty() || !continuous_) return;
        if (time > last_change_[c]) {
            occupancy_[c][encode(active_[c], oracle_.rates())] += time - last_change_[c];
            last_change_[c] = time;
        }
    }

    void log(double time, EventKind kind, const Triple& t, std::size_t peer) {
        if (!opts_.record_trace) return;
        trace_.events.push_back(TraceEvent{time, kind, t.link, rate(t), t.carrier, peer});
    }

    const FeasibilityOracle& oracle_;
    const FrameOptions& opts_;
    bool continuous_;
    std::size_t L_, R_, C_;
    double length_;
    std::vector<Schedule> active_;
    ThroughputVector acc_;
    std::vector<double> last_change_;
    std::vector<std::unordered_map<ScheduleCode, double>> occupancy_;
    EventTrace trace_;
    std::uint64_t collisions_ = 0;
};

} // namespace

FrameResult run_continuous_frame(const FeasibilityOracle& oracle, const AccessParams& params, double frame_length,
                                 Rng& rng, const FrameOptions& options) {
    if (!(frame_length > 0.0) || !std::isfinite(frame_length))
        throw Error(ErrorKind::configuration, "frame length must be positive and finite");
    FrameState st(oracle, params, frame_length, options, true);

    const std::size_t n = st.triples();
    std::vector<char> transmitting(n, 0);
    std::vector<double> started(n, 0.0);

    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (std::size_t i = 0; i < n; ++i) {
        const Triple t = st.triple(i);
        if (st.initially_active(t)) {
            transmitting[i] = 1;
            st.start(t, 0.0);
            heap.emplace(rng.exponential(1.0 / params.mu(t.link, t.rate_index, t.carrier)), i);
        } else {
            heap.emplace(rng.exponential(params.lambda(t.link, t.rate_index, t.carrier)), i);
        }
    }
    // start() above re-set the same rates, so the active set equals the
    // initial state again.

    double last_time = -1.0;
    while (!heap.empty() && heap.top().first < frame_length) {
        const auto [time, i] = heap.top();
        heap.pop();
        const Triple t = st.triple(i);
        const double lambda = params.lambda(t.link, t.rate_index, t.carrier);
        if (transmitting[i]) {
            st.end(t, started[i], time);
            transmitting[i] = 0;
            heap.emplace(time + rng.exponential(lambda), i);
        } else if (time == last_time) {
            // exact tie with the previous event: redraw the attempt
            heap.emplace(time + rng.exponential(lambda), i);
            continue;
        } else {
            st.attempt(t, time);
            if (st.admissible(std::span<const Triple>(&t, 1))) {
                st.start(t, time);
                transmitting[i] = 1;
                started[i] = time;
                heap.emplace(time + rng.exponential(1.0 / params.mu(t.link, t.rate_index, t.carrier)), i);
            } else {
                heap.emplace(time + rng.exponential(lambda), i);
            }
        }
        last_time = time;
    }
    return st.finish(transmitting, started);
}

FrameResult run_continuous_frame(const FeasibilityOracle& oracle, const AccessParams& params, double frame_length,
                                 std::uint64_t seed, const FrameOptions& options) {
    Rng rng(seed);
    return run_continuous_frame(oracle, params, frame_length, rng, options);
}

FrameResult run_slotted_frame(const FeasibilityOracle& oracle, const AccessParams& params, std::uint64_t slots,
                              Rng& rng, const FrameOptions& options) {
    if (slots == 0) throw Error(ErrorKind::configuration, "slotted frame needs at least one slot");
    FrameState st(oracle, params, static_cast<double>(slots), options, false);

    const std::size_t n = st.triples();
    for (std::size_t i = 0; i < n; ++i) {
        const Triple t = st.triple(i);
        if (params.lambda(t.link, t.rate_index, t.carrier) > 1.0)
            throw Error(ErrorKind::configuration, "slotted mode needs a mean backoff of at least one slot");
        if (params.mu(t.link, t.rate_index, t.carrier) < 1.0)
            throw Error(ErrorKind::configuration, "slotted mode needs a mean holding time of at least one slot");
    }

    std::vector<char> transmitting(n, 0);
    std::vector<double> started(n, 0.0);
    std::vector<std::uint64_t> end_slot(n, 0), next_attempt(n, 0);
    auto backoff = [&](std::size_t i) {
        const Triple t = st.triple(i);
        return rng.geometric(params.lambda(t.link, t.rate_index, t.carrier));
    };
    auto holding = [&](std::size_t i) {
        const Triple t = st.triple(i);
        return rng.geometric(1.0 / params.mu(t.link, t.rate_index, t.carrier));
    };
    // Residual clocks at the frame start may already be due in slot 0.
    for (std::size_t i = 0; i < n; ++i) {
        const Triple t = st.triple(i);
        if (st.initially_active(t)) {
            transmitting[i] = 1;
            st.start(t, 0.0);
            end_slot[i] = holding(i) - 1;
        } else {
            next_attempt[i] = backoff(i) - 1;
        }
    }

    const std::size_t C = oracle.num_carriers();
    std::vector<std::vector<std::size_t>> attempts(C);
    std::vector<Triple> group;
    for (std::uint64_t slot = 0; slot < slots; ++slot) {
        const double now = static_cast<double>(slot);
        for (std::size_t i = 0; i < n; ++i) {
            if (transmitting[i] && end_slot[i] == slot) {
                st.end(st.triple(i), started[i], now);
                transmitting[i] = 0;
                next_attempt[i] = slot + backoff(i);
            }
        }
        for (auto& a : attempts) a.clear();
        for (std::size_t i = 0; i < n; ++i)
            if (!transmitting[i] && next_attempt[i] == slot) attempts[st.triple(i).carrier].push_back(i);

        for (std::size_t c = 0; c < C; ++c) {
            std::vector<std::size_t> fit;
            for (std::size_t i : attempts[c]) {
                const Triple t = st.triple(i);
                st.attempt(t, now);
                if (st.admissible(std::span<const Triple>(&t, 1)))
                    fit.push_back(i);
                else
                    next_attempt[i] = slot + backoff(i);
            }
            group.clear();
            for (std::size_t i : fit) group.push_back(st.triple(i));
            if (fit.size() >= 2 && !st.admissible(group)) {
                bool logged = false;
                for (std::size_t a = 0; a < group.size(); ++a) {
                    for (std::size_t b = a + 1; b < group.size(); ++b) {
                        const Triple pair[2] = {group[a], group[b]};
                        if (!st.admissible(pair)) {
                            st.collision(group[a], group[b], now);
                            logged = true;
                        }
                    }
                }
                if (!logged) // conflict only among three or more
                    for (std::size_t a = 0; a < group.size(); ++a)
                        for (std::size_t b = a + 1; b < group.size(); ++b) st.collision(group[a], group[b], now);
                for (std::size_t i : fit) next_attempt[i] = slot + backoff(i);
                continue;
            }
            for (std::size_t i : fit) {
                st.start(st.triple(i), now);
                transmitting[i] = 1;
                started[i] = now;
                end_slot[i] = slot + holding(i);
            }
        }
        st.count_slot();
    }
    return st.finish(transmitting, started);
}

FrameResult run_slotted_frame(const FeasibilityOracle& oracle, const AccessParams& params, std::uint64_t slots,
                              std::uint64_t seed, const FrameOptions& options) {
    Rng rng(seed);
    return run_slotted_frame(oracle, params, slots, rng, options);
}

ServiceVector service_from_trace(const EventTrace& trace) {
    if (!(trace.frame_length > 0.0)) throw Error(ErrorKind::structural, "trace has no frame length");
    const std::size_t L = trace.num_links, C = trace.num_carriers;
    std::vector<double> acc(L * C, 0.0), open_time(L * C, 0.0), open_rate(L * C, 0.0);
    std::vector<char> open(L * C, 0);
    for (const auto& e : trace.events) {
        if (e.kind != EventKind::start && e.kind != EventKind::end) continue;
        if (e.link >= L || e.carrier >= C) throw Error(ErrorKind::structural, "trace event out of range");
        const std::size_t k = e.link * C + e.carrier;
        if (e.kind == EventKind::start) {
            if (open[k]) throw Error(ErrorKind::structural, "start while link already transmitting on carrier");
            open[k] = 1;
            open_time[k] = e.time;
            open_rate[k] = e.rate;
        } else {
            if (!open[k] || open_rate[k] != e.rate || e.time < open_time[k])
                throw Error(ErrorKind::structural, "end without a matching start");
            open[k] = 0;
            acc[k] += e.rate * (e.time - open_time[k]);
        }
    }
    for (char o : open)
        if (o) throw Error(ErrorKind::structural, "start without a matching end");
    ServiceVector out;
    out.values.assign(L, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) total += acc[l * C + c];
        out.values[l] = total / trace.frame_length;
    }
    return out;
}

bool trace_respects_feasibility(const EventTrace& trace, const FeasibilityOracle& oracle) {
    std::vector<Schedule> active;
    for (std::size_t c = 0; c < trace.num_carriers; ++c)
        active.push_back(Schedule{c, std::vector<double>(trace.num_links, 0.0)});
    for (const auto& e : trace.events) {
        if (e.kind == EventKind::start) {
            active[e.carrier].rates[e.link] = e.rate;
            if (!oracle.is_jointly_feasible(active)) return false;
        } else if (e.kind == EventKind::end) {
            active[e.carrier].rates[e.link] = 0.0;
        }
    }
    return true;
}

void write_trace_csv(std::ostream& out, const EventTrace& trace) {
    out << kTraceCsvVersion << '\n' << kTraceCsvHeader << '\n';
    for (const auto& e : trace.events) {
        out << fmt(e.time) << ',' << to_string(e.kind) << ',' << e.link << ',' << fmt(e.rate) << ',' << e.carrier
            << ',';
        if (e.kind == EventKind::collision) out << e.peer;
        out << '\n';
    }
}

} // namespace hetcsma
