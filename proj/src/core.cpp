#include "hetcsma/core.hpp"

#include "hetcsma/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

namespace hetcsma {

RateSet::RateSet(std::vector<double> rates) : rates_(std::move(rates)) {
    if (rates_.empty()) throw Error(ErrorKind::domain, "rate set must be nonempty");
    for (std::size_t i = 0; i < rates_.size(); ++i) {
        if (!(rates_[i] > 0.0) || !std::isfinite(rates_[i]))
            throw Error(ErrorKind::domain, "rates must be finite and strictly positive");
        if (i > 0 && !(rates_[i] > rates_[i - 1]))
            throw Error(ErrorKind::domain, "rates must be strictly increasing");
    }
}

double RateSet::rate_of_level(std::size_t level) const {
    if (level == 0) return 0.0;
    if (level > rates_.size()) throw Error(ErrorKind::domain, "rate level out of range");
    return rates_[level - 1];
}

std::optional<std::size_t> RateSet::level_of(double rate) const {
    if (rate == 0.0) return 0;
    auto it = std::lower_bound(rates_.begin(), rates_.end(), rate);
    if (it == rates_.end() || *it != rate) return std::nullopt;
    return static_cast<std::size_t>(it - rates_.begin()) + 1;
}

bool Schedule::idle() const {
    return std::all_of(rates.begin(), rates.end(), [](double r) { return r == 0.0; });
}

std::size_t Schedule::active_count() const {
    return static_cast<std::size_t>(std::count_if(rates.begin(), rates.end(), [](double r) { return r != 0.0; }));
}

ScheduleCode encode(const Schedule& s, const RateSet& rates) {
    const ScheduleCode base = rates.size() + 1;
    ScheduleCode code = 0;
    for (std::size_t i = s.rates.size(); i-- > 0;) {
        auto level = rates.level_of(s.rates[i]);
        if (!level) throw Error(ErrorKind::structural, "schedule entry is not in R ∪ {0}");
        code = code * base + *level;
    }
    return code;
}

Schedule decode(ScheduleCode code, std::size_t num_links, std::size_t carrier, const RateSet& rates) {
    const ScheduleCode base = rates.size() + 1;
    Schedule s{carrier, std::vector<double>(num_links, 0.0)};
    for (std::size_t i = 0; i < num_links; ++i) {
        s.rates[i] = rates.rate_of_level(static_cast<std::size_t>(code % base));
        code /= base;
    }
    return s;
}

std::string schedule_label(const Schedule& s, const RateSet& rates) {
    std::ostringstream out;
    for (std::size_t l = 0; l < s.rates.size(); ++l) {
        if (s.rates[l] == 0.0) continue;
        auto level = rates.level_of(s.rates[l]);
        if (!level) throw Error(ErrorKind::structural, "schedule entry is not in R ∪ {0}");
        if (rates.size() == 2) {
            out << l << (*level == 1 ? 'l' : 'h');
        } else {
            if (out.tellp() > 0) out << '-';
            out << l << 'r' << *level;
        }
    }
    std::string label = out.str();
    return label.empty() ? "idle" : label;
}

Schedule parse_schedule_label(std::string_view label, std::size_t num_links, std::size_t carrier,
                              const RateSet& rates) {
    Schedule s{carrier, std::vector<double>(num_links, 0.0)};
    if (label == "idle") return s;
    auto fail = [&] { return Error(ErrorKind::structural, "bad schedule label '" + std::string(label) + "'"); };
    std::size_t pos = 0;
    while (pos < label.size()) {
        std::size_t link = 0;
        std::size_t start = pos;
        while (pos < label.size() && std::isdigit(static_cast<unsigned char>(label[pos])))
            link = link * 10 + static_cast<std::size_t>(label[pos++] - '0');
        if (pos == start || pos >= label.size() || link >= num_links) throw fail();
        std::size_t level = 0;
        const char tag = label[pos++];
        if (tag == 'l' && rates.size() == 2) {
            level = 1;
        } else if (tag == 'h' && rates.size() == 2) {
            level = 2;
        } else if (tag == 'r') {
            start = pos;
            while (pos < label.size() && std::isdigit(static_cast<unsigned char>(label[pos])))
                level = level * 10 + static_cast<std::size_t>(label[pos++] - '0');
            if (pos == start) throw fail();
            if (pos < label.size() && label[pos] == '-') ++pos;
        } else {
            throw fail();
        }
        if (level == 0 || level > rates.size() || s.rates[link] != 0.0) throw fail();
        s.rates[link] = rates.rate_of_level(level);
    }
    return s;
}

FeasibleScheduleSet::FeasibleScheduleSet(std::size_t carrier, std::size_t num_links, const RateSet& rates,
                                         std::vector<Schedule> schedules)
    : carrier_(carrier), num_links_(num_links), rates_(rates), schedules_(std::move(schedules)) {
    std::vector<std::pair<ScheduleCode, std::size_t>> codes;
    codes.reserve(schedules_.size());
    for (std::size_t i = 0; i < schedules_.size(); ++i) {
        const auto& s = schedules_[i];
        if (s.carrier != carrier_ || s.rates.size() != num_links_)
            throw Error(ErrorKind::structural, "schedule does not match the set's carrier or link count");
        codes.emplace_back(encode(s, rates_), i);
    }
    std::sort(codes.begin(), codes.end());
    std::vector<Schedule> sorted;
    sorted.reserve(codes.size());
    for (std::size_t k = 0; k < codes.size(); ++k) {
        if (k > 0 && codes[k].first == codes[k - 1].first)
            throw Error(ErrorKind::structural, "duplicate schedule in feasible set");
        index_.emplace(codes[k].first, k);
        sorted.push_back(std::move(schedules_[codes[k].second]));
    }
    schedules_ = std::move(sorted);
    if (!index_.count(0)) throw Error(ErrorKind::structural, "feasible set must contain the idle schedule");
}

bool FeasibleScheduleSet::contains(const Schedule& s) const { return index_of(s).has_value(); }

std::optional<std::size_t> FeasibleScheduleSet::index_of(const Schedule& s) const {
    if (s.carrier != carrier_ || s.rates.size() != num_links_) return std::nullopt;
    for (double r : s.rates)
        if (!rates_.level_of(r)) return std::nullopt;
    auto it = index_.find(encode(s, rates_));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

bool FeasibleScheduleSet::is_downward_closed() const {
    for (const auto& s : schedules_) {
        for (std::size_t l = 0; l < num_links_; ++l) {
            if (s.rates[l] == 0.0) continue;
            Schedule reduced = s;
            reduced.rates[l] = 0.0;
            if (!contains(reduced)) return false;
        }
    }
    return true;
}

Utility Utility::logarithmic(double epsilon) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
        throw Error(ErrorKind::domain, "utility epsilon must be finite and nonnegative");
    return Utility(epsilon);
}

double Utility::value(double x) const {
    if (!(x >= 0.0)) throw Error(ErrorKind::domain, "utility argument must be nonnegative");
    return std::log(epsilon_ + x);
}

double Utility::derivative(double x) const {
    if (!(x >= 0.0)) throw Error(ErrorKind::domain, "utility argument must be nonnegative");
    return 1.0 / (epsilon_ + x);
}

double Utility::inverse_derivative(double y) const {
    if (!(y > 0.0)) throw Error(ErrorKind::domain, "inverse derivative argument must be positive");
    return std::max(0.0, 1.0 / y - epsilon_);
}

double utility_value(const Utility& u, double x) { return u.value(x); }
double utility_inv_derivative(const Utility& u, double y) { return u.inverse_derivative(y); }

double ThroughputVector::link_total(std::size_t link) const {
    double total = 0.0;
    for (std::size_t c = 0; c < carriers_; ++c) total += at(link, c);
    return total;
}

std::vector<double> ThroughputVector::link_totals() const {
    std::vector<double> out(links_);
    for (std::size_t l = 0; l < links_; ++l) out[l] = link_total(l);
    return out;
}

bool FeasibilityOracle::is_jointly_feasible(std::span<const Schedule> per_carrier) const {
    return std::all_of(per_carrier.begin(), per_carrier.end(), [this](const Schedule& s) { return is_feasible(s); });
}

void validate_schedule(const FeasibilityOracle& oracle, const Schedule& s) {
    if (s.carrier >= oracle.num_carriers())
        throw Error(ErrorKind::structural, "schedule carrier index out of range");
    if (s.rates.size() != oracle.num_links())
        throw Error(ErrorKind::structural, "schedule length does not match the number of links");
    for (double r : s.rates)
        if (!oracle.rates().level_of(r)) throw Error(ErrorKind::structural, "schedule entry is not in R ∪ {0}");
}

bool is_feasible(const FeasibilityOracle& oracle, const Schedule& s) {
    validate_schedule(oracle, s);
    return oracle.is_feasible(s);
}

FeasibleScheduleSet enumerate_feasible(const FeasibilityOracle& oracle, std::size_t carrier,
                                       std::uint64_t candidate_cap) {
    if (carrier >= oracle.num_carriers()) throw Error(ErrorKind::structural, "carrier index out of range");
    const std::uint64_t base = oracle.rates().size() + 1;
    std::uint64_t candidates = 1;
    for (std::size_t l = 0; l < oracle.num_links(); ++l) {
        if (candidates > candidate_cap / base) {
            throw Error(ErrorKind::resource,
                        "enumeration needs " + std::to_string(base) + "^" + std::to_string(oracle.num_links()) +
                            " candidates, above the cap of " + std::to_string(candidate_cap));
        }
        candidates *= base;
    }
    std::vector<Schedule> feasible;
    for (ScheduleCode code = 0; code < candidates; ++code) {
        Schedule s = decode(code, oracle.num_links(), carrier, oracle.rates());
        if (code == 0 || oracle.is_feasible(s)) feasible.push_back(std::move(s));
    }
    FeasibleScheduleSet set(carrier, oracle.num_links(), oracle.rates(), std::move(feasible));
    if (!set.is_downward_closed())
        throw Error(ErrorKind::structural, "feasibility backend is not downward closed on carrier " +
                                               std::to_string(carrier));
    return set;
}

TableOracle::TableOracle(std::vector<FeasibleScheduleSet> per_carrier) : sets_(std::move(per_carrier)) {
    if (sets_.empty()) throw Error(ErrorKind::structural, "table oracle needs at least one carrier");
    for (std::size_t c = 0; c < sets_.size(); ++c) {
        if (sets_[c].carrier() != c || sets_[c].num_links() != sets_[0].num_links() ||
            !(sets_[c].rates() == sets_[0].rates()))
            throw Error(ErrorKind::structural, "table oracle sets must be indexed by carrier with equal shapes");
    }
}

PredicateOracle conflict_graph_oracle(std::size_t num_links, std::size_t num_carriers, RateSet rates,
                                      std::vector<std::pair<std::size_t, std::size_t>> conflicts) {
    return PredicateOracle(num_links, num_carriers, std::move(rates), [conflicts](const Schedule& s) {
        for (auto [a, b] : conflicts)
            if (s.rates[a] != 0.0 && s.rates[b] != 0.0) return false;
        return true;
    });
}

} // namespace hetcsma
