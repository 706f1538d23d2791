#include "hetcsma/mmuo.hpp"

#include "hetcsma/error.hpp"
#include "hetcsma/format.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace hetcsma {

VirtualQueueVector::VirtualQueueVector(std::vector<double> values, double q_min, double q_max)
    : q_(std::move(values)), lo_(q_min), hi_(q_max) {
    if (!(q_min > 0.0) || !(q_min < q_max))
        throw Error(ErrorKind::configuration, "queue bounds need 0 < q_min < q_max");
    for (double v : q_)
        if (!(v >= q_min && v <= q_max)) throw Error(ErrorKind::domain, "virtual queue outside [q_min, q_max]");
}

double StepSchedule::at(std::uint64_t frame) const {
    if (family == Family::constant) return b0;
    return b0 / std::pow(1.0 + static_cast<double>(frame), alpha);
}

bool StepSchedule::summable_squares() const { return family == Family::diminishing && alpha > 0.5 && alpha <= 1.0; }

MmuoConfig MmuoConfig::slotted_defaults() {
    MmuoConfig cfg;
    cfg.mode = SimMode::slotted;
    cfg.lambda0 = 0.05;
    return cfg;
}

void MmuoConfig::validate() const {
    auto bad = [](const char* what) { return Error(ErrorKind::configuration, what); };
    if (!(V > 0.0) || !std::isfinite(V)) throw bad("V must be positive");
    if (!(q_min > 0.0) || !(q_min < q_max) || !std::isfinite(q_max)) throw bad("queue bounds need 0 < q_min < q_max");
    if (!(step.b0 > 0.0)) throw bad("step size must be positive");
    if (step.family == StepSchedule::Family::diminishing && !step.summable_squares())
        throw bad("diminishing steps need alpha in (0.5, 1]");
    if (!(lambda0 > 0.0)) throw bad("lambda0 must be positive");
    if (mode == SimMode::continuous && !(frame_length > 0.0)) throw bad("frame length must be positive");
    if (mode == SimMode::slotted && slots_per_frame == 0) throw bad("slots per frame must be positive");
    if (mode == SimMode::slotted && lambda0 > 1.0) throw bad("slotted mode needs lambda0 <= 1");
    if (!(burn_in >= 0.0 && burn_in < 1.0)) throw bad("burn-in fraction must be in [0, 1)");
}

VirtualQueueVector update_virtual_queue(const VirtualQueueVector& q, const ServiceVector& service, double step,
                                        const MmuoConfig& cfg) {
    if (service.size() != q.size()) throw Error(ErrorKind::structural, "service and queue sizes differ");
    std::vector<double> next(q.size());
    for (std::size_t l = 0; l < q.size(); ++l) {
        const double target = cfg.utility.inverse_derivative(q[l] / cfg.V);
        next[l] = std::clamp(q[l] + step * (target - service[l]), cfg.q_min, cfg.q_max);
    }
    return VirtualQueueVector(std::move(next), cfg.q_min, cfg.q_max);
}

AccessParams derive_access_params(const VirtualQueueVector& q, const RateSet& rates, std::size_t num_carriers,
                                  double lambda0) {
    AccessParams params(q.size(), rates.size(), num_carriers);
    for (std::size_t l = 0; l < q.size(); ++l) {
        for (std::size_t k = 0; k < rates.size(); ++k) {
            const double exponent = rates[k] * q[l];
            if (exponent > 700.0)
                throw Error(ErrorKind::configuration,
                            "r * q = " + fmt(exponent) + " overflows the access product; lower q_max");
            const double product = std::exp(exponent);
            for (std::size_t c = 0; c < num_carriers; ++c) params.set_product(l, k, c, lambda0, product);
        }
    }
    return params;
}

VirtualQueueVector default_initial_queues(std::size_t num_links, const RateSet& rates, const MmuoConfig& cfg) {
    const double q = std::clamp(cfg.V * cfg.utility.derivative(rates.max() / 2.0), cfg.q_min, cfg.q_max);
    return VirtualQueueVector(std::vector<double>(num_links, q), cfg.q_min, cfg.q_max);
}

MmuoRunResult run_mmuo(const FeasibilityOracle& oracle, const MmuoConfig& cfg, std::uint64_t frames,
                       const VirtualQueueVector& q0, std::uint64_t seed) {
    FrameRunner runner = [&](const AccessParams& params, const VirtualQueueVector&,
                             const std::vector<Schedule>& initial, Rng& rng) {
        FrameOptions opts;
        opts.record_occupancy = true;
        opts.initial_state = initial;
        if (cfg.mode == SimMode::continuous) return run_continuous_frame(oracle, params, cfg.frame_length, rng, opts);
        return run_slotted_frame(oracle, params, cfg.slots_per_frame, rng, opts);
    };
    return run_mmuo(oracle, cfg, frames, q0, seed, runner);
}

MmuoRunResult run_mmuo(const FeasibilityOracle& oracle, const MmuoConfig& cfg, std::uint64_t frames,
                       const VirtualQueueVector& q0, std::uint64_t seed, const FrameRunner& runner) {
    cfg.validate();
    const std::size_t L = oracle.num_links(), C = oracle.num_carriers();
    if (q0.size() != L) throw Error(ErrorKind::structural, "initial queue vector has the wrong length");
    VirtualQueueVector q(q0.values(), cfg.q_min, cfg.q_max);

    MmuoRunResult out;
    out.queue_history.reserve(frames);
    out.service_history.reserve(frames);
    out.throughput_history.reserve(frames);
    out.long_run = ThroughputVector(L, C);
    out.schedule_frequency.resize(C);
    out.averaged_from = static_cast<std::size_t>(std::floor(cfg.burn_in * static_cast<double>(frames)));

    Rng rng(seed);
    std::vector<Schedule> carried;
    for (std::uint64_t f = 0; f < frames; ++f) {
        const AccessParams params = derive_access_params(q, oracle.rates(), C, cfg.lambda0);
        FrameResult frame = runner(params, q, carried, rng);
        if (frame.service.size() != L) throw Error(ErrorKind::structural, "frame service has the wrong length");
        if (cfg.carry_over) carried = frame.final_state;

        out.queue_history.push_back(q);
        out.service_history.push_back(frame.service);
        out.throughput_history.push_back(frame.delivered ? *frame.delivered : frame.per_carrier);
        out.collisions += frame.collisions;
        if (f >= out.averaged_from) {
            for (std::size_t c = 0; c < frame.occupancy.size() && c < C; ++c)
                for (const auto& [code, share] : frame.occupancy[c]) out.schedule_frequency[c][code] += share;
        }
        if (!cfg.frozen) q = update_virtual_queue(q, frame.service, cfg.step.at(f), cfg);
    }
    out.final_queues = q;

    const std::size_t counted = frames - out.averaged_from;
    if (counted > 0) {
        for (std::size_t f = out.averaged_from; f < frames; ++f)
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t c = 0; c < C; ++c) out.long_run.at(l, c) += out.throughput_history[f].at(l, c);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t c = 0; c < C; ++c) out.long_run.at(l, c) /= static_cast<double>(counted);
        for (auto& freq : out.schedule_frequency)
            for (auto& [code, v] : freq) v /= static_cast<double>(counted);
    }
    return out;
}

std::vector<double> tail_mean_queues(const MmuoRunResult& run, double fraction) {
    const std::size_t n = run.queue_history.size();
    if (n == 0) return {};
    const std::size_t count = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * n)));
    std::vector<double> mean(run.queue_history.front().size(), 0.0);
    for (std::size_t f = n - count; f < n; ++f)
        for (std::size_t l = 0; l < mean.size(); ++l) mean[l] += run.queue_history[f][l];
    for (double& m : mean) m /= static_cast<double>(count);
    return mean;
}

void write_history_csv(std::ostream& out, const MmuoRunResult& run) {
    const std::size_t C = run.long_run.num_carriers();
    out << kHistoryCsvVersion << '\n' << "frame,link,q,S,throughput_to_date";
    for (std::size_t c = 0; c < C; ++c) out << ",throughput_to_date_c" << c;
    out << '\n';
    if (run.queue_history.empty()) return;
    const std::size_t L = run.queue_history.front().size();
    std::vector<double> sum(L * C, 0.0);
    for (std::size_t f = 0; f < run.queue_history.size(); ++f) {
        const double n = static_cast<double>(f + 1);
        for (std::size_t l = 0; l < L; ++l) {
            double total = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                sum[l * C + c] += run.throughput_history[f].at(l, c);
                total += sum[l * C + c];
            }
            out << f << ',' << l << ',' << fmt(run.queue_history[f][l]) << ',' << fmt(run.service_history[f][l])
                << ',' << fmt(total / n);
            for (std::size_t c = 0; c < C; ++c) out << ',' << fmt(sum[l * C + c] / n);
            out << '\n';
        }
    }
}

} // namespace hetcsma
