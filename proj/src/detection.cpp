#include "hetcsma/detection.hpp"

#include "hetcsma/error.hpp"
#include "hetcsma/format.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>

namespace hetcsma {

const char* to_string(SafetyStatus s) {
    switch (s) {
    case SafetyStatus::safe: return "safe";
    case SafetyStatus::vulnerable: return "vulnerable";
    case SafetyStatus::outage: return "outage";
    }
    return "unknown";
}

SafetyReport compute_safety(const ActivityIndicator& indicator, double achievable, double upsilon) {
    if (!(indicator.rate > 0.0)) throw Error(ErrorKind::domain, "safety margin needs a positive rate");
    SafetyReport r;
    r.indicator = indicator;
    r.margin = achievable / indicator.rate;
    if (r.margin > upsilon) r.status = SafetyStatus::safe;
    else if (r.margin < 1.0) r.status = SafetyStatus::outage;
    else r.status = SafetyStatus::vulnerable;
    return r;
}

const char* to_string(DetectionMethod m) {
    switch (m) {
    case DetectionMethod::oracle: return "oracle";
    case DetectionMethod::m1: return "m1";
    case DetectionMethod::m2: return "m2";
    case DetectionMethod::m3: return "m3";
    case DetectionMethod::m4: return "m4";
    case DetectionMethod::m5: return "m5";
    case DetectionMethod::m6: return "m6";
    }
    return "unknown";
}

DetectionMethod parse_detection_method(std::string_view name) {
    for (auto m : {DetectionMethod::oracle, DetectionMethod::m1, DetectionMethod::m2, DetectionMethod::m3,
                   DetectionMethod::m4, DetectionMethod::m5, DetectionMethod::m6})
        if (name == to_string(m)) return m;
    throw Error(ErrorKind::configuration, "unknown detection method '" + std::string(name) + "'");
}

bool DetectionConfig::messaged() const {
    return method == DetectionMethod::m4 || method == DetectionMethod::m5 || method == DetectionMethod::m6;
}

int DetectionConfig::base_method() const {
    switch (method) {
    case DetectionMethod::oracle: return 0;
    case DetectionMethod::m1:
    case DetectionMethod::m4: return 1;
    case DetectionMethod::m2:
    case DetectionMethod::m5: return 2;
    case DetectionMethod::m3:
    case DetectionMethod::m6: return 3;
    }
    return 0;
}

void DetectionConfig::validate() const {
    if (!(upsilon > 1.0)) throw Error(ErrorKind::configuration, "upsilon must exceed 1");
    if (probe_slots < 1) throw Error(ErrorKind::configuration, "probe duration must be at least one slot");
    if (!(adaptive_factor > 0.0 && adaptive_factor < 1.0))
        throw Error(ErrorKind::configuration, "adaptive factor must lie in (0, 1)");
    if (adaptive_window < 1) throw Error(ErrorKind::configuration, "adaptive window must be at least one slot");
    if (overhear_radius && !(*overhear_radius >= 0.0))
        throw Error(ErrorKind::configuration, "overhearing radius must be non-negative");
}

bool method1_feasible(const Attempt& attempt, std::span<const ActivityIndicator> heard) {
    for (const auto& h : heard)
        if (h.value && h.carrier == attempt.carrier) return false;
    return true;
}

bool method2_feasible(const Attempt& attempt, std::span<const SafetyReport> heard) {
    for (const auto& h : heard) {
        if (!h.indicator.value || h.indicator.carrier != attempt.carrier) continue;
        if (h.indicator.basestation == attempt.basestation) return false;
        if (h.status != SafetyStatus::safe) return false;
    }
    return true;
}

bool rb_priority_feasible(const Attempt& attempt, CellClass cell, std::span<const bool> own_active) {
    if (attempt.carrier >= own_active.size()) throw Error(ErrorKind::structural, "carrier out of range");
    if (cell == CellClass::macro) {
        for (std::size_t c = 0; c < attempt.carrier; ++c)
            if (!own_active[c]) return false;
    } else {
        for (std::size_t c = attempt.carrier + 1; c < own_active.size(); ++c)
            if (!own_active[c]) return false;
    }
    return true;
}

// ---- radio state ----

RadioState::RadioState(const LteModel& model)
    : model_(&model), alloc_(model.num_basestations(), model.num_carriers()),
      rates_(model.num_basestations() * model.num_carriers(), 0.0) {}

std::vector<double> RadioState::carrier_powers(std::size_t carrier) const {
    std::vector<double> p(model_->num_basestations());
    for (std::size_t b = 0; b < p.size(); ++b) p[b] = alloc_.at(b, carrier);
    return p;
}

std::optional<ActiveTransmission> RadioState::active(std::size_t bs, std::size_t carrier) const {
    const std::size_t l = alloc_.served(bs, carrier);
    if (l == PowerAllocation::none) return std::nullopt;
    return ActiveTransmission{l, rates_[bs * model_->num_carriers() + carrier], carrier};
}

std::vector<ActiveTransmission> RadioState::active_all() const {
    std::vector<ActiveTransmission> out;
    for (std::size_t b = 0; b < model_->num_basestations(); ++b)
        for (std::size_t c = 0; c < model_->num_carriers(); ++c)
            if (auto t = active(b, c)) out.push_back(*t);
    return out;
}

void RadioState::start(const ActiveTransmission& t, double power) {
    const std::size_t b = model_->serving(t.link);
    if (busy(b, t.carrier)) throw Error(ErrorKind::structural, "resource block already in use");
    alloc_.served(b, t.carrier) = t.link;
    alloc_.at(b, t.carrier) = power;
    rates_[b * model_->num_carriers() + t.carrier] = t.rate;
}

void RadioState::stop(std::size_t bs, std::size_t carrier) {
    alloc_.served(bs, carrier) = PowerAllocation::none;
    alloc_.at(bs, carrier) = 0.0;
    rates_[bs * model_->num_carriers() + carrier] = 0.0;
}

double RadioState::link_cqi(std::size_t link, std::size_t carrier) const {
    return model_->link_cqi(link, carrier, carrier_powers(carrier));
}

double RadioState::achievable(std::size_t link, std::size_t carrier, double power) const {
    return std::log2(1.0 + power * link_cqi(link, carrier)) / model_->phy().rates_bps_per_hz.front();
}

std::vector<SafetyReport> RadioState::reports(double upsilon, std::uint64_t slot) const {
    std::vector<SafetyReport> out;
    for (std::size_t b = 0; b < model_->num_basestations(); ++b)
        for (std::size_t c = 0; c < model_->num_carriers(); ++c) {
            auto t = active(b, c);
            if (!t) continue;
            ActivityIndicator ind{t->link, t->rate, c, b, true, slot};
            out.push_back(compute_safety(ind, achievable(t->link, c, alloc_.at(b, c)), upsilon));
        }
    return out;
}

std::vector<Schedule> RadioState::schedules() const {
    std::vector<Schedule> out;
    for (std::size_t c = 0; c < model_->num_carriers(); ++c)
        out.push_back(Schedule{c, std::vector<double>(model_->num_links(), 0.0)});
    for (const auto& t : active_all()) out[t.carrier].rates[t.link] = t.rate;
    return out;
}

ProbeOutcome method3_probe(RadioState& state, const Attempt& attempt, double probe_power) {
    // upsilon does not affect the outage test
    const auto before = state.reports(2.0, 0);
    const double saved = state.power(attempt.basestation, attempt.carrier);
    state.set_power(attempt.basestation, attempt.carrier, probe_power);
    const auto after = state.reports(2.0, 0);

    ProbeOutcome out;
    for (std::size_t i = 0; i < after.size(); ++i) {
        const auto& a = after[i];
        if (a.indicator.carrier != attempt.carrier || a.indicator.basestation == attempt.basestation) continue;
        if (a.status == SafetyStatus::outage && before[i].status != SafetyStatus::outage)
            out.disrupted.push_back(a.indicator.link);
    }
    if (!out.disrupted.empty()) {
        out.feasible = false;
        state.set_power(attempt.basestation, attempt.carrier, saved);
    }
    return out;
}

void ReportLog::record(std::uint64_t slot, std::vector<SafetyReport> reports) {
    slots_.emplace_back(slot, std::move(reports));
    while (slots_.size() > keep_) slots_.pop_front();
}

std::span<const SafetyReport> ReportLog::at(std::uint64_t slot) const {
    for (auto it = slots_.rbegin(); it != slots_.rend(); ++it)
        if (it->first == slot) return it->second;
    return {};
}

std::vector<SafetyReport> deliver(const ReportLog& log, const LteModel& model, std::size_t receiver,
                                  std::uint64_t slot, const DetectionConfig& cfg) {
    std::vector<SafetyReport> out;
    const auto& rx = model.scenario().basestations[receiver];
    if (cfg.messaged()) {
        for (const auto& r : log.at(slot))
            if (r.indicator.basestation == receiver) out.push_back(r);
        if (slot >= cfg.message_delay)
            for (const auto& r : log.at(slot - cfg.message_delay))
                if (r.indicator.basestation != receiver) out.push_back(r);
    } else {
        for (const auto& r : log.at(slot)) {
            bool heard = r.indicator.basestation == receiver || !cfg.overhear_radius;
            if (!heard) {
                const auto& u = model.scenario().users[r.indicator.link];
                heard = std::hypot(u.x - rx.x, u.y - rx.y) <= *cfg.overhear_radius;
            }
            if (heard) out.push_back(r);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const SafetyReport& a, const SafetyReport& b) {
        if (a.indicator.basestation != b.indicator.basestation)
            return a.indicator.basestation < b.indicator.basestation;
        if (a.indicator.link != b.indicator.link) return a.indicator.link < b.indicator.link;
        return a.indicator.carrier < b.indicator.carrier;
    });
    return out;
}

AdaptiveUpsilon::AdaptiveUpsilon(double initial, double factor, std::uint64_t window, double floor)
    : initial_(initial), factor_(factor), window_(window), floor_(floor), value_(initial) {}

void AdaptiveUpsilon::observe(bool outage) {
    if (outage) {
        value_ = initial_;
        quiet_ = 0;
        return;
    }
    if (++quiet_ >= window_) {
        value_ = std::max(floor_, value_ * factor_);
        quiet_ = 0;
    }
}

const char* to_string(Decision d) {
    switch (d) {
    case Decision::accept: return "accept";
    case Decision::reject: return "reject";
    case Decision::collision: return "collision";
    case Decision::outage: return "outage";
    }
    return "unknown";
}

void write_detection_csv(std::ostream& out, std::span<const DetectionLogEntry> entries) {
    out << kDetectionCsvVersion << '\n' << kDetectionCsvHeader << '\n';
    for (const auto& e : entries)
        out << e.slot << ',' << to_string(e.method) << ',' << e.link << ',' << fmt(e.rate) << ',' << e.carrier << ','
            << to_string(e.decision) << ',' << e.blocking_reason << '\n';
}

// ---- slotted simulator ----

LteSlotSimulator::LteSlotSimulator(const LteModel& model, LteSimConfig cfg)
    : model_(model), cfg_(std::move(cfg)), oracle_(model), radio_(model),
      reports_(cfg_.detection.message_delay + 2),
      upsilon_(cfg_.detection.upsilon, cfg_.detection.adaptive_factor, cfg_.detection.adaptive_window),
      pf_(PfState::initial(model.num_links(), cfg_.pf_beta, 1.0, cfg_.pf_floor)),
      remaining_(model.num_basestations() * model.num_carriers(), 0),
      in_outage_(model.num_basestations() * model.num_carriers(), 0),
      disrupted_(model.num_basestations() * model.num_carriers(), 0) {
    cfg_.detection.validate();
    if (cfg_.slots_per_frame == 0) throw Error(ErrorKind::configuration, "frames need at least one slot");
    if (!(cfg_.pf_beta > 0.0 && cfg_.pf_beta <= 1.0)) throw Error(ErrorKind::configuration, "pf beta must lie in (0, 1]");
    stats_.busy_slots.assign(model.num_basestations() * model.num_carriers(), 0);
}

FrameRunner LteSlotSimulator::runner() {
    return [this](const AccessParams& params, const VirtualQueueVector&, const std::vector<Schedule>& initial,
                  Rng& rng) { return run_frame(params, initial, rng); };
}

void LteSlotSimulator::apply_witness() {
    for (std::size_t c = 0; c < model_.num_carriers(); ++c) {
        Schedule s{c, std::vector<double>(model_.num_links(), 0.0)};
        for (std::size_t b = 0; b < model_.num_basestations(); ++b)
            if (auto t = radio_.active(b, c)) s.rates[t->link] = t->rate;
        auto cp = oracle_.carrier_power(s);
        if (cp.verdict != FeasibilityVerdict::feasible)
            throw Error(ErrorKind::structural, "admitted schedule lost feasibility");
        for (std::size_t b = 0; b < model_.num_basestations(); ++b)
            radio_.set_power(b, c, radio_.busy(b, c) ? cp.power[b] : 0.0);
    }
}

void LteSlotSimulator::sync_initial(const std::vector<Schedule>& initial) {
    if (initial.empty()) {
        for (std::size_t b = 0; b < model_.num_basestations(); ++b)
            for (std::size_t c = 0; c < model_.num_carriers(); ++c) radio_.stop(b, c);
        return;
    }
    if (initial == radio_.schedules()) return;
    // Foreign starting state: rebuild powers from scratch.
    for (std::size_t b = 0; b < model_.num_basestations(); ++b)
        for (std::size_t c = 0; c < model_.num_carriers(); ++c) radio_.stop(b, c);
    for (const auto& s : initial) {
        auto cp = model_.solve_carrier(s);
        for (std::size_t l = 0; l < model_.num_links(); ++l) {
            if (s.rates[l] == 0.0) continue;
            const std::size_t b = model_.serving(l);
            if (radio_.busy(b, s.carrier)) throw Error(ErrorKind::structural, "initial state puts two links on one block");
            const double p = cp.verdict == FeasibilityVerdict::feasible
                                 ? cp.power[b]
                                 : std::min(power_for_rate(s.rates[l], model_.link_cqi(l, s.carrier,
                                                                                     std::vector<double>(model_.num_basestations(), 0.0)),
                                                           model_.phy()),
                                            model_.scenario().basestations[b].max_power());
            radio_.start({l, s.rates[l], s.carrier}, p);
        }
    }
}

void LteSlotSimulator::record(std::uint64_t slot, const Attempt& a, Decision d, std::string reason) {
    if (!cfg_.record_log) return;
    log_.push_back({slot, cfg_.detection.method, a.link, a.rate, a.carrier, d, std::move(reason)});
}

bool LteSlotSimulator::decide(const Attempt& a, std::uint64_t slot, Pending& out, std::string& reason) {
    out.attempt = a;
    out.power = 0.0;
    if (radio_.busy(a.basestation, a.carrier)) {
        reason = "busy";
        return false;
    }
    const auto& bs = model_.scenario().basestations[a.basestation];
    if (cfg_.detection.rb_prioritization) {
        auto own = std::make_unique<bool[]>(model_.num_carriers());
        for (std::size_t c = 0; c < model_.num_carriers(); ++c) own[c] = radio_.busy(a.basestation, c);
        const bool ok = rb_priority_feasible(a, bs.cell, std::span<const bool>(own.get(), model_.num_carriers()));
        if (!ok) {
            reason = "rb_priority";
            return false;
        }
    }

    const int base = cfg_.detection.base_method();
    if (base == 0) {
        auto targets = radio_.schedules();
        targets[a.carrier].rates[a.link] = a.rate;
        if (!oracle_.is_jointly_feasible(targets)) {
            reason = "infeasible";
            return false;
        }
        return true;
    }

    const double p = power_for_rate(a.rate, radio_.link_cqi(a.link, a.carrier), model_.phy());
    if (radio_.powers().total(a.basestation) + p > bs.max_power()) {
        reason = "budget";
        return false;
    }
    out.power = p;

    auto detection = cfg_.detection;
    detection.upsilon = upsilon_.value();
    if (base == 1 || base == 2) {
        const auto heard = deliver(reports_, model_, a.basestation, slot, detection);
        if (base == 1) {
            std::vector<ActivityIndicator> ind;
            ind.reserve(heard.size());
            for (const auto& h : heard) ind.push_back(h.indicator);
            if (!method1_feasible(a, ind)) {
                reason = "indicator";
                return false;
            }
        } else if (!method2_feasible(a, heard)) {
            reason = "unsafe";
            return false;
        }
        return true;
    }

    // Probing. The prober learns about victims it can hear; messaged replies
    // keep the probe on air for the message delay.
    auto outcome = method3_probe(radio_, a, p);
    if (outcome.feasible) return true;
    const auto& rx = model_.scenario().basestations[a.basestation];
    bool noticed = detection.messaged() || !detection.overhear_radius;
    if (!noticed)
        for (std::size_t v : outcome.disrupted) {
            const auto& u = model_.scenario().users[v];
            noticed = noticed || model_.serving(v) == a.basestation ||
                      std::hypot(u.x - rx.x, u.y - rx.y) <= *detection.overhear_radius;
        }
    const std::uint64_t window =
        detection.messaged() ? std::max(detection.probe_slots, detection.message_delay) : detection.probe_slots;
    for (std::size_t v : outcome.disrupted) {
        auto& d = disrupted_[model_.serving(v) * model_.num_carriers() + a.carrier];
        d = std::max(d, window);
    }
    if (!noticed) {
        radio_.set_power(a.basestation, a.carrier, p);
        return true;
    }
    ++stats_.failed_probes;
    reason = "probe_outage";
    return false;
}

FrameResult LteSlotSimulator::run_frame(const AccessParams& params, const std::vector<Schedule>& initial, Rng& rng) {
    const std::size_t L = model_.num_links(), C = model_.num_carriers(), B = model_.num_basestations();
    const RateSet& rates = model_.rates();
    const std::size_t K = rates.size();
    if (params.num_links() != L || params.num_rates() != K || params.num_carriers() != C)
        throw Error(ErrorKind::structural, "access parameters do not match the scenario");
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < C; ++c) {
                if (params.lambda(l, k, c) > 1.0)
                    throw Error(ErrorKind::configuration, "slotted mode needs a mean backoff of at least one slot");
                if (params.mu(l, k, c) < 1.0)
                    throw Error(ErrorKind::configuration, "slotted mode needs a mean holding time of at least one slot");
            }

    sync_initial(initial);
    const bool exact = cfg_.detection.base_method() == 0;
    if (exact) apply_witness();

    auto level_index = [&](double r) { return *rates.level_of(r) - 1; };
    // Carried transmissions get fresh residual holding times from the new
    // parameters; the residual may be zero, ending them at the frame start.
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            if (auto t = radio_.active(b, c))
                remaining_[b * C + c] = rng.geometric(1.0 / params.mu(t->link, level_index(t->rate), c)) - 1;

    const std::uint64_t start = slot_;
    std::vector<std::uint64_t> next(L * K * C);
    for (std::size_t i = 0; i < next.size(); ++i) {
        const std::size_t l = i / (K * C), k = (i / C) % K, c = i % C;
        next[i] = start + rng.geometric(params.lambda(l, k, c)) - 1;
    }

    FrameResult out;
    out.service.values.assign(L, 0.0);
    out.per_carrier = ThroughputVector(L, C);
    ThroughputVector delivered(L, C);
    out.occupancy.resize(C);

    const std::uint64_t end = start + cfg_.slots_per_frame;
    std::vector<Pending> pending;
    std::vector<double> served(L);
    for (std::uint64_t t = start; t < end; ++t) {
        // Expired transmissions leave first.
        bool ended = false;
        for (std::size_t i = 0; i < B * C; ++i)
            if (radio_.busy(i / C, i % C) && remaining_[i] == 0) {
                radio_.stop(i / C, i % C);
                in_outage_[i] = 0;
                ended = true;
            }
        if (ended && exact) apply_witness();

        const double upsilon = upsilon_.value();
        if (!exact) reports_.record(t, radio_.reports(upsilon, t));

        pending.clear();
        for (std::size_t i = 0; i < next.size(); ++i) {
            if (next[i] != t) continue;
            const std::size_t l = i / (K * C), k = (i / C) % K, c = i % C;
            next[i] = t + rng.geometric(params.lambda(l, k, c));
            Attempt a{l, rates[k], c, model_.serving(l)};
            ++stats_.attempts;
            Pending p;
            std::string reason;
            if (decide(a, t, p, reason)) pending.push_back(p);
            else record(t, a, Decision::reject, std::move(reason));
        }

        // Same-slot conflicts: two admissions on one block, a broken joint
        // schedule, or a cell budget overrun drop every admission involved.
        if (!pending.empty()) {
            std::vector<std::uint8_t> drop(pending.size(), 0);
            for (std::size_t i = 0; i < pending.size(); ++i)
                for (std::size_t j = i + 1; j < pending.size(); ++j)
                    if (pending[i].attempt.basestation == pending[j].attempt.basestation &&
                        pending[i].attempt.carrier == pending[j].attempt.carrier)
                        drop[i] = drop[j] = 1;
            if (exact) {
                auto targets = radio_.schedules();
                for (std::size_t i = 0; i < pending.size(); ++i)
                    if (!drop[i]) targets[pending[i].attempt.carrier].rates[pending[i].attempt.link] = pending[i].attempt.rate;
                if (!oracle_.is_jointly_feasible(targets)) std::fill(drop.begin(), drop.end(), 1);
            } else {
                for (std::size_t b = 0; b < B; ++b) {
                    double total = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        if (radio_.busy(b, c)) total += radio_.power(b, c);
                    bool any = false;
                    for (std::size_t i = 0; i < pending.size(); ++i)
                        if (!drop[i] && pending[i].attempt.basestation == b) {
                            total += pending[i].power;
                            any = true;
                        }
                    if (any && total > model_.scenario().basestations[b].max_power())
                        for (std::size_t i = 0; i < pending.size(); ++i)
                            if (pending[i].attempt.basestation == b) drop[i] = 1;
                }
            }
            for (std::size_t i = 0; i < pending.size(); ++i) {
                const auto& a = pending[i].attempt;
                if (drop[i]) {
                    ++stats_.collisions;
                    ++out.collisions;
                    if (!radio_.busy(a.basestation, a.carrier)) radio_.set_power(a.basestation, a.carrier, 0.0);
                    record(t, a, Decision::collision, "same_slot");
                    continue;
                }
                radio_.start({a.link, a.rate, a.carrier}, pending[i].power);
                remaining_[a.basestation * C + a.carrier] =
                    rng.geometric(1.0 / params.mu(a.link, level_index(a.rate), a.carrier));
                ++stats_.accepted;
                record(t, a, Decision::accept, "");
            }
            if (exact) apply_witness();
        }

        // Slot accounting.
        bool outage_seen = false;
        for (std::size_t c = 0; c < C; ++c) {
            Schedule s{c, std::vector<double>(L, 0.0)};
            for (std::size_t b = 0; b < B; ++b) {
                auto tx = radio_.active(b, c);
                if (!tx) continue;
                s.rates[tx->link] = tx->rate;
                ++stats_.busy_slots[b * C + c];
                const double margin = radio_.achievable(tx->link, c, radio_.power(b, c)) / tx->rate;
                const bool out_now = margin < 1.0 || disrupted_[b * C + c] > 0;
                if (out_now) {
                    ++stats_.outage_slots;
                    outage_seen = true;
                    if (!in_outage_[b * C + c])
                        record(t, Attempt{tx->link, tx->rate, c, b}, Decision::outage, margin < 1.0 ? "interference" : "probe");
                } else {
                    out.service.values[tx->link] += tx->rate;
                    out.per_carrier.at(tx->link, c) += tx->rate;
                }
                in_outage_[b * C + c] = out_now;
            }
            out.occupancy[c][encode(s, rates)] += 1.0;
        }
        for (auto& d : disrupted_)
            if (d > 0) --d;
        upsilon_.observe(outage_seen);

        if (cfg_.proportional_fair) {
            std::fill(served.begin(), served.end(), 0.0);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    if (!radio_.busy(b, c)) continue;
                    const auto& cell = model_.cell_links(b);
                    const auto powers = radio_.carrier_powers(c);
                    const std::size_t j = pf_select(model_, pf_, cell, radio_.power(b, c), c, powers);
                    const double r = rate_from_power(radio_.power(b, c), model_.link_cqi(j, c, powers), model_.phy());
                    served[j] += r;
                    delivered.at(j, c) += r;
                }
            pf_ = pf_update(pf_, served);
        }

        for (std::size_t i = 0; i < B * C; ++i)
            if (radio_.busy(i / C, i % C) && remaining_[i] > 0) --remaining_[i];
        ++stats_.slots;
    }
    slot_ = end;

    const double n = static_cast<double>(cfg_.slots_per_frame);
    for (double& v : out.service.values) v /= n;
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t c = 0; c < C; ++c) {
            out.per_carrier.at(l, c) /= n;
            delivered.at(l, c) /= n;
        }
    for (auto& occ : out.occupancy)
        for (auto& [code, v] : occ) v /= n;
    if (cfg_.proportional_fair) out.delivered = delivered;
    out.final_state = radio_.schedules();
    return out;
}

} // namespace hetcsma
