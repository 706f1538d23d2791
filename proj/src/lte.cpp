#include "hetcsma/lte.hpp"

#include "hetcsma/error.hpp"
#include "hetcsma/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace hetcsma {

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

bool Basestation::admits(std::size_t user) const {
    if (!csg) return true;
    return std::find(csg->begin(), csg->end(), user) != csg->end();
}

double PhysicalLayer::noise_power() const { return dbm_to_watts(noise_dbm_per_hz) * rb_bandwidth(); }

double PhysicalLayer::gain(double distance) const { return pathloss(distance, pathloss_k, pathloss_alpha); }

RateSet PhysicalLayer::normalized_rates() const {
    if (rates_bps_per_hz.empty()) throw Error(ErrorKind::configuration, "physical rate list is empty");
    std::vector<double> r;
    r.reserve(rates_bps_per_hz.size());
    for (double v : rates_bps_per_hz) r.push_back(v / rates_bps_per_hz.front());
    return RateSet(std::move(r));
}

double PhysicalLayer::to_normalized(double bps_per_hz) const {
    for (std::size_t i = 0; i < rates_bps_per_hz.size(); ++i)
        if (rates_bps_per_hz[i] == bps_per_hz) return rates_bps_per_hz[i] / rates_bps_per_hz.front();
    if (bps_per_hz == 0.0) return 0.0;
    throw Error(ErrorKind::domain, "physical rate " + fmt(bps_per_hz) + " is not in the rate set");
}

double PhysicalLayer::to_physical(double normalized) const {
    if (normalized == 0.0) return 0.0;
    // Look the level up so the round trip is exact.
    for (std::size_t i = 0; i < rates_bps_per_hz.size(); ++i)
        if (rates_bps_per_hz[i] / rates_bps_per_hz.front() == normalized) return rates_bps_per_hz[i];
    throw Error(ErrorKind::domain, "normalized rate " + fmt(normalized) + " is not in the rate set");
}

double PhysicalLayer::sinr_threshold(double normalized) const { return std::exp2(to_physical(normalized)) - 1.0; }

double PhysicalLayer::rate_for_sinr(double sinr) const {
    double best = 0.0;
    for (double phys : rates_bps_per_hz)
        if (std::exp2(phys) - 1.0 <= sinr) best = phys / rates_bps_per_hz.front();
    return best;
}

void Scenario::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::configuration, what); };
    if (!(phy.bandwidth_hz > 0.0) || !std::isfinite(phy.bandwidth_hz)) fail("bandwidth_hz must be positive");
    if (phy.num_rbs == 0) fail("num_rbs must be at least 1");
    if (!std::isfinite(phy.noise_dbm_per_hz)) fail("noise_dbm_per_hz must be finite");
    if (!(phy.pathloss_k > 0.0) || !std::isfinite(phy.pathloss_k)) fail("pathloss_k must be positive");
    if (!(phy.pathloss_alpha > 0.0) || !std::isfinite(phy.pathloss_alpha)) fail("pathloss_alpha must be positive");
    if (phy.rates_bps_per_hz.empty()) fail("rates_bps_per_hz is empty");
    for (std::size_t i = 0; i < phy.rates_bps_per_hz.size(); ++i) {
        const double r = phy.rates_bps_per_hz[i];
        if (!(r > 0.0) || !std::isfinite(r)) fail("rates_bps_per_hz entries must be positive");
        if (i > 0 && !(r > phy.rates_bps_per_hz[i - 1])) fail("rates_bps_per_hz must be strictly increasing");
    }
    if (basestations.empty()) fail("scenario has no basestations");
    for (std::size_t i = 0; i < basestations.size(); ++i) {
        const auto& b = basestations[i];
        if (b.id != i) fail("basestation ids must be 0.." + std::to_string(basestations.size() - 1) + " in order");
        if (!std::isfinite(b.x) || !std::isfinite(b.y)) fail("basestation " + std::to_string(i) + " position");
        if (!std::isfinite(b.power_dbm)) fail("basestation " + std::to_string(i) + " power_dbm must be finite");
        if (b.csg && b.cell == CellClass::macro) fail("basestation " + std::to_string(i) + " is a macro with a csg");
        if (b.csg && b.csg->empty()) fail("basestation " + std::to_string(i) + " has an empty csg");
        if (b.csg)
            for (std::size_t u : *b.csg)
                if (u >= users.size())
                    fail("basestation " + std::to_string(i) + " csg names unknown user " + std::to_string(u));
    }
    for (std::size_t i = 0; i < users.size(); ++i) {
        if (users[i].id != i) fail("user ids must be 0.." + std::to_string(users.size() - 1) + " in order");
        if (!std::isfinite(users[i].x) || !std::isfinite(users[i].y)) fail("user " + std::to_string(i) + " position");
        for (const auto& b : basestations)
            if (b.x == users[i].x && b.y == users[i].y)
                fail("user " + std::to_string(i) + " sits on basestation " + std::to_string(b.id));
    }
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
    for (const auto& g : gain_overrides) {
        if (g.basestation >= basestations.size()) fail("gain override names unknown basestation");
        if (g.user >= users.size()) fail("gain override names unknown user");
        if (g.carrier >= phy.num_rbs) fail("gain override names unknown carrier");
        if (!(g.gain > 0.0) || !std::isfinite(g.gain)) fail("gain override value must be positive");
        if (!seen.insert({g.basestation, g.user, g.carrier}).second) fail("duplicate gain override");
    }
}

double pathloss(double distance, double k, double alpha) {
    if (!(distance > 0.0)) throw Error(ErrorKind::domain, "pathloss needs a positive distance, got " + fmt(distance));
    return k * std::pow(distance, -alpha);
}

namespace {

double distance(const Basestation& b, const User& u) { return std::hypot(b.x - u.x, b.y - u.y); }

} // namespace

std::vector<std::size_t> associate(std::span<const User> users, std::span<const Basestation> basestations,
                                   const PhysicalLayer& phy) {
    std::vector<std::size_t> out;
    out.reserve(users.size());
    for (const auto& u : users) {
        std::size_t best = basestations.size();
        double best_rx = -1.0;
        for (const auto& b : basestations) {
            if (!b.admits(u.id)) continue;
            const double rx = b.max_power() * phy.gain(distance(b, u));
            if (rx > best_rx || (rx == best_rx && b.id < basestations[best].id)) {
                best_rx = rx;
                best = static_cast<std::size_t>(&b - basestations.data());
            }
        }
        if (best == basestations.size())
            throw Error(ErrorKind::configuration, "user " + std::to_string(u.id) + " has no admissible basestation");
        out.push_back(basestations[best].id);
    }
    return out;
}

double cqi(double serving_gain, double noise, std::span<const double> interferer_powers,
           std::span<const double> interferer_gains) {
    if (interferer_powers.size() != interferer_gains.size())
        throw Error(ErrorKind::structural, "interferer powers and gains differ in length");
    double denom = noise;
    for (std::size_t i = 0; i < interferer_powers.size(); ++i) denom += interferer_powers[i] * interferer_gains[i];
    return serving_gain / denom;
}

double rate_from_power(double power, double cqi_value, const PhysicalLayer& phy) {
    return phy.rate_for_sinr(power * cqi_value);
}

double power_for_rate(double rate, double cqi_value, const PhysicalLayer& phy) {
    if (rate == 0.0) return 0.0;
    if (!(cqi_value > 0.0)) throw Error(ErrorKind::domain, "cqi must be positive");
    const double threshold = phy.sinr_threshold(rate);
    double p = threshold / cqi_value;
    while (p * cqi_value < threshold) p = std::nextafter(p, INFINITY);
    return p;
}

double PowerAllocation::total(std::size_t bs) const {
    double s = 0.0;
    for (std::size_t c = 0; c < num_carriers; ++c) s += at(bs, c);
    return s;
}

const char* to_string(FeasibilityVerdict v) {
    switch (v) {
    case FeasibilityVerdict::feasible: return "feasible";
    case FeasibilityVerdict::same_cell_conflict: return "same_cell_conflict";
    case FeasibilityVerdict::non_convergent: return "non_convergent";
    case FeasibilityVerdict::over_budget: return "over_budget";
    }
    return "unknown";
}

LteModel::LteModel(Scenario scenario)
    : scenario_(std::move(scenario)), rates_(scenario_.phy.normalized_rates()), noise_(scenario_.phy.noise_power()) {
    scenario_.validate();
    serving_ = associate(scenario_.users, scenario_.basestations, scenario_.phy);
    cells_.assign(num_basestations(), {});
    for (std::size_t l = 0; l < num_links(); ++l) cells_[serving_[l]].push_back(l);

    gains_.assign(num_basestations() * num_links() * num_carriers(), 0.0);
    for (std::size_t b = 0; b < num_basestations(); ++b)
        for (std::size_t u = 0; u < num_links(); ++u) {
            const double g = scenario_.phy.gain(distance(scenario_.basestations[b], scenario_.users[u]));
            for (std::size_t c = 0; c < num_carriers(); ++c) gains_[(b * num_links() + u) * num_carriers() + c] = g;
        }
    for (const auto& o : scenario_.gain_overrides)
        gains_[(o.basestation * num_links() + o.user) * num_carriers() + o.carrier] = o.gain;
}

double LteModel::link_cqi(std::size_t link, std::size_t carrier, std::span<const double> bs_power) const {
    const std::size_t own = serving_[link];
    double denom = noise_;
    for (std::size_t b = 0; b < num_basestations(); ++b)
        if (b != own) denom += bs_power[b] * gain(b, link, carrier);
    return gain(own, link, carrier) / denom;
}

CarrierPower LteModel::solve_carrier(const Schedule& targets, std::size_t max_iters, double rel_tol) const {
    CarrierPower out;
    out.power.assign(num_basestations(), 0.0);
    const std::size_t c = targets.carrier;

    std::vector<std::size_t> link_of(num_basestations(), PowerAllocation::none);
    std::vector<double> threshold(num_basestations(), 0.0);
    for (std::size_t l = 0; l < num_links(); ++l) {
        if (targets.rates[l] == 0.0) continue;
        const std::size_t b = serving_[l];
        if (link_of[b] != PowerAllocation::none) {
            out.verdict = FeasibilityVerdict::same_cell_conflict;
            return out;
        }
        link_of[b] = l;
        threshold[b] = scenario_.phy.sinr_threshold(targets.rates[l]);
    }

    // Iterates rise monotonically from zero, so crossing a budget is final.
    std::vector<double> next(num_basestations(), 0.0);
    bool converged = false;
    for (std::size_t it = 0; it < max_iters; ++it) {
        out.iterations = it + 1;
        double change = 0.0;
        for (std::size_t b = 0; b < num_basestations(); ++b) {
            if (link_of[b] == PowerAllocation::none) continue;
            next[b] = threshold[b] / link_cqi(link_of[b], c, out.power);
            if (next[b] > scenario_.basestations[b].max_power()) {
                out.verdict = FeasibilityVerdict::over_budget;
                return out;
            }
            change = std::max(change, std::abs(next[b] - out.power[b]) / next[b]);
        }
        out.power = next;
        if (change <= rel_tol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        out.verdict = FeasibilityVerdict::non_convergent;
        return out;
    }

    // Lift slightly above the fixed point so every SINR clears its threshold
    // in floating point. Scaling all powers up raises every SINR.
    auto meets = [&] {
        for (std::size_t b = 0; b < num_basestations(); ++b) {
            if (link_of[b] == PowerAllocation::none) continue;
            if (out.power[b] * link_cqi(link_of[b], c, out.power) < threshold[b]) return false;
        }
        return true;
    };
    double lift = 1e-9;
    while (!meets()) {
        for (double& p : out.power) p *= 1.0 + lift;
        lift *= 2.0;
        if (lift > 1.0) {
            out.verdict = FeasibilityVerdict::non_convergent;
            return out;
        }
    }
    for (std::size_t b = 0; b < num_basestations(); ++b)
        if (out.power[b] > scenario_.basestations[b].max_power()) {
            out.verdict = FeasibilityVerdict::over_budget;
            return out;
        }
    return out;
}

namespace {

FeasibilityCheck combine(const LteModel& model, std::span<const Schedule> per_carrier,
                         const std::function<CarrierPower(const Schedule&)>& solve) {
    if (per_carrier.size() != model.num_carriers())
        throw Error(ErrorKind::structural, "expected one schedule per carrier");
    FeasibilityCheck out;
    PowerAllocation alloc(model.num_basestations(), model.num_carriers());
    for (const auto& s : per_carrier) {
        if (s.carrier >= model.num_carriers() || s.rates.size() != model.num_links())
            throw Error(ErrorKind::structural, "schedule shape does not match the scenario");
        auto cp = solve(s);
        if (cp.verdict != FeasibilityVerdict::feasible) {
            out.verdict = cp.verdict;
            return out;
        }
        for (std::size_t b = 0; b < model.num_basestations(); ++b) alloc.at(b, s.carrier) = cp.power[b];
        for (std::size_t l = 0; l < model.num_links(); ++l)
            if (s.rates[l] != 0.0) alloc.served(model.serving(l), s.carrier) = l;
    }
    for (std::size_t b = 0; b < model.num_basestations(); ++b)
        if (alloc.total(b) > model.scenario().basestations[b].max_power()) {
            out.verdict = FeasibilityVerdict::over_budget;
            return out;
        }
    out.witness = std::move(alloc);
    return out;
}

} // namespace

FeasibilityCheck LteModel::check(std::span<const Schedule> per_carrier) const {
    return combine(*this, per_carrier, [this](const Schedule& s) { return solve_carrier(s); });
}

FeasibilityCheck lte_feasibility_check(const LteModel& model, std::span<const Schedule> per_carrier) {
    return model.check(per_carrier);
}

CarrierPower LteOracle::carrier_power(const Schedule& s) const {
    const std::uint64_t key = encode(s, model_.rates()) * model_.num_carriers() + s.carrier;
    {
        std::lock_guard lock(mutex_);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
    }
    auto cp = model_.solve_carrier(s);
    std::lock_guard lock(mutex_);
    return memo_.emplace(key, std::move(cp)).first->second;
}

bool LteOracle::is_feasible(const Schedule& s) const {
    return carrier_power(s).verdict == FeasibilityVerdict::feasible;
}

bool LteOracle::is_jointly_feasible(std::span<const Schedule> per_carrier) const {
    return combine(model_, per_carrier, [this](const Schedule& s) { return carrier_power(s); }).feasible();
}

PfState PfState::initial(std::size_t num_links, double beta, double start, double floor) {
    PfState s;
    s.average.assign(num_links, start);
    s.beta = beta;
    s.floor = floor;
    return s;
}

std::size_t pf_select(const PfState& state, std::span<const std::size_t> candidates,
                      std::span<const double> achievable) {
    if (candidates.empty()) throw Error(ErrorKind::domain, "pf_select needs at least one candidate");
    if (candidates.size() != achievable.size())
        throw Error(ErrorKind::structural, "candidates and achievable rates differ in length");
    std::size_t best = candidates[0];
    double best_metric = -1.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const std::size_t l = candidates[i];
        const double metric = achievable[i] / std::max(state.average.at(l), state.floor);
        if (metric > best_metric || (metric == best_metric && l < best)) {
            best_metric = metric;
            best = l;
        }
    }
    return best;
}

std::size_t pf_select(const LteModel& model, const PfState& state, std::span<const std::size_t> candidates,
                      double available_power, std::size_t carrier, std::span<const double> bs_power) {
    std::vector<double> achievable;
    achievable.reserve(candidates.size());
    for (std::size_t l : candidates)
        achievable.push_back(rate_from_power(available_power, model.link_cqi(l, carrier, bs_power), model.phy()));
    return pf_select(state, candidates, achievable);
}

PfState pf_update(const PfState& state, std::span<const double> served) {
    if (served.size() != state.average.size()) throw Error(ErrorKind::structural, "served vector length mismatch");
    PfState next = state;
    for (std::size_t l = 0; l < served.size(); ++l)
        next.average[l] = std::max(state.floor, (1.0 - state.beta) * state.average[l] + state.beta * served[l]);
    return next;
}

Scenario toy_scenario() {
    Scenario s;
    s.basestations = {
        {0, 0.0, 0.0, CellClass::macro, 46.0, std::nullopt},
        {1, 790.0, 0.0, CellClass::femto, 8.0, std::vector<std::size_t>{2, 3}},
        {2, -500.0, 0.0, CellClass::femto, 8.0, std::vector<std::size_t>{4, 5}},
    };
    s.users = {
        {0, 100.0, 0.0}, {1, 780.0, 0.0}, {2, 790.0, 10.0}, {3, 790.0, -10.0}, {4, -500.0, 10.0}, {5, -500.0, -10.0},
    };
    return s;
}

// ---- scenario files ----

namespace {

constexpr const char* kScenarioVersion = "# hetcsma scenario v1";

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& field, const std::string& what) {
    std::string msg = "scenario line " + std::to_string(line);
    if (!field.empty()) msg += ": field '" + field + "'";
    throw Error(ErrorKind::configuration, msg + ": " + what);
}

struct Field {
    std::string value;
    std::size_t line;
};

struct Stanza {
    std::string name;
    std::size_t line;
    std::map<std::string, Field> fields;

    bool has(const std::string& key) const { return fields.count(key) != 0; }

    const Field& need(const std::string& key) const {
        auto it = fields.find(key);
        if (it == fields.end()) parse_fail(line, key, "missing in [" + name + "]");
        return it->second;
    }

    double number(const std::string& key) const { return to_number(need(key), key); }
    std::size_t index(const std::string& key) const { return to_index(need(key), key); }

    static double to_number(const Field& f, const std::string& key) {
        double v = 0.0;
        const char* b = f.value.data();
        const char* e = b + f.value.size();
        auto [ptr, ec] = std::from_chars(b, e, v);
        if (ec != std::errc{} || ptr != e || !std::isfinite(v))
            parse_fail(f.line, key, "expected a number, got '" + f.value + "'");
        return v;
    }

    static std::size_t to_index(const Field& f, const std::string& key) {
        std::size_t v = 0;
        const char* b = f.value.data();
        const char* e = b + f.value.size();
        auto [ptr, ec] = std::from_chars(b, e, v);
        if (ec != std::errc{} || ptr != e || f.value.empty())
            parse_fail(f.line, key, "expected a non-negative integer, got '" + f.value + "'");
        return v;
    }

    template <class T, class Conv>
    std::vector<T> list(const std::string& key, Conv conv) const {
        const Field& f = need(key);
        std::vector<T> out;
        std::istringstream in(f.value);
        std::string tok;
        while (in >> tok) out.push_back(conv(Field{tok, f.line}, key));
        return out;
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (const auto& [k, f] : fields)
            if (std::find_if(keys.begin(), keys.end(), [&](const char* a) { return k == a; }) == keys.end())
                parse_fail(f.line, k, "unknown in [" + name + "]");
    }
};

std::vector<Stanza> split_stanzas(std::string_view text) {
    std::vector<Stanza> out;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view raw = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        auto line = trim(raw);
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') parse_fail(lineno, "", "unterminated section header");
            out.push_back(Stanza{std::string(trim(line.substr(1, line.size() - 2))), lineno, {}});
            const auto& n = out.back().name;
            if (n != "physical" && n != "basestation" && n != "user" && n != "gain")
                parse_fail(lineno, "", "unknown section [" + n + "]");
        } else {
            auto eq = line.find('=');
            if (eq == std::string_view::npos) parse_fail(lineno, "", "expected 'key = value'");
            std::string key(trim(line.substr(0, eq)));
            std::string value(trim(line.substr(eq + 1)));
            if (out.empty()) parse_fail(lineno, key, "appears before any section");
            if (!out.back().fields.emplace(key, Field{value, lineno}).second)
                parse_fail(lineno, key, "given twice");
        }
        if (end == text.size()) break;
    }
    return out;
}

} // namespace

Scenario parse_scenario(std::string_view text) {
    Scenario s;
    bool have_physical = false;
    // Line of each csg list, for error messages once the user count is known.
    std::vector<std::size_t> csg_line;
    std::vector<std::size_t> gain_line;
    for (const auto& st : split_stanzas(text)) {
        if (st.name == "physical") {
            if (have_physical) parse_fail(st.line, "", "second [physical] section");
            have_physical = true;
            st.allow({"bandwidth_hz", "num_rbs", "noise_dbm_per_hz", "pathloss_k", "pathloss_alpha",
                      "rates_bps_per_hz"});
            auto& p = s.phy;
            if (st.has("bandwidth_hz")) p.bandwidth_hz = st.number("bandwidth_hz");
            if (st.has("num_rbs")) p.num_rbs = st.index("num_rbs");
            if (st.has("noise_dbm_per_hz")) p.noise_dbm_per_hz = st.number("noise_dbm_per_hz");
            if (st.has("pathloss_k")) p.pathloss_k = st.number("pathloss_k");
            if (st.has("pathloss_alpha")) p.pathloss_alpha = st.number("pathloss_alpha");
            if (st.has("rates_bps_per_hz")) p.rates_bps_per_hz = st.list<double>("rates_bps_per_hz", Stanza::to_number);
            if (st.has("num_rbs") && p.num_rbs == 0) parse_fail(st.need("num_rbs").line, "num_rbs", "must be at least 1");
        } else if (st.name == "basestation") {
            st.allow({"id", "class", "x", "y", "power_dbm", "csg"});
            Basestation b;
            b.id = st.index("id");
            const auto& cls = st.need("class");
            if (cls.value == "macro") b.cell = CellClass::macro;
            else if (cls.value == "femto") b.cell = CellClass::femto;
            else parse_fail(cls.line, "class", "expected macro or femto, got '" + cls.value + "'");
            b.x = st.number("x");
            b.y = st.number("y");
            b.power_dbm = st.number("power_dbm");
            if (st.has("csg")) {
                b.csg = st.list<std::size_t>("csg", Stanza::to_index);
                csg_line.push_back(st.need("csg").line);
            } else {
                csg_line.push_back(0);
            }
            if (b.id != s.basestations.size())
                parse_fail(st.need("id").line, "id", "expected " + std::to_string(s.basestations.size()));
            s.basestations.push_back(std::move(b));
        } else if (st.name == "user") {
            st.allow({"id", "x", "y"});
            User u{st.index("id"), st.number("x"), st.number("y")};
            if (u.id != s.users.size()) parse_fail(st.need("id").line, "id", "expected " + std::to_string(s.users.size()));
            s.users.push_back(u);
        } else {
            st.allow({"basestation", "user", "carrier", "value"});
            s.gain_overrides.push_back({st.index("basestation"), st.index("user"), st.index("carrier"),
                                        st.number("value")});
            gain_line.push_back(st.line);
        }
    }
    for (std::size_t i = 0; i < s.basestations.size(); ++i)
        if (s.basestations[i].csg)
            for (std::size_t u : *s.basestations[i].csg)
                if (u >= s.users.size()) parse_fail(csg_line[i], "csg", "unknown user " + std::to_string(u));
    for (std::size_t i = 0; i < s.gain_overrides.size(); ++i) {
        const auto& g = s.gain_overrides[i];
        if (g.basestation >= s.basestations.size())
            parse_fail(gain_line[i], "basestation", "unknown basestation " + std::to_string(g.basestation));
        if (g.user >= s.users.size()) parse_fail(gain_line[i], "user", "unknown user " + std::to_string(g.user));
        if (g.carrier >= s.phy.num_rbs)
            parse_fail(gain_line[i], "carrier", "unknown carrier " + std::to_string(g.carrier));
        if (!(g.gain > 0.0)) parse_fail(gain_line[i], "value", "must be positive");
    }
    s.validate();
    return s;
}

std::string serialize_scenario(const Scenario& s) {
    std::ostringstream out;
    out << kScenarioVersion << "\n\n[physical]\n";
    out << "bandwidth_hz = " << fmt(s.phy.bandwidth_hz) << "\n";
    out << "num_rbs = " << s.phy.num_rbs << "\n";
    out << "noise_dbm_per_hz = " << fmt(s.phy.noise_dbm_per_hz) << "\n";
    out << "pathloss_k = " << fmt(s.phy.pathloss_k) << "\n";
    out << "pathloss_alpha = " << fmt(s.phy.pathloss_alpha) << "\n";
    out << "rates_bps_per_hz =";
    for (double r : s.phy.rates_bps_per_hz) out << ' ' << fmt(r);
    out << "\n";
    for (const auto& b : s.basestations) {
        out << "\n[basestation]\nid = " << b.id << "\nclass = " << (b.cell == CellClass::macro ? "macro" : "femto")
            << "\nx = " << fmt(b.x) << "\ny = " << fmt(b.y) << "\npower_dbm = " << fmt(b.power_dbm) << "\n";
        if (b.csg) {
            out << "csg =";
            for (std::size_t u : *b.csg) out << ' ' << u;
            out << "\n";
        }
    }
    for (const auto& u : s.users) out << "\n[user]\nid = " << u.id << "\nx = " << fmt(u.x) << "\ny = " << fmt(u.y) << "\n";
    for (const auto& g : s.gain_overrides)
        out << "\n[gain]\nbasestation = " << g.basestation << "\nuser = " << g.user << "\ncarrier = " << g.carrier
            << "\nvalue = " << fmt(g.gain) << "\n";
    return out.str();
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open scenario file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario(buf.str());
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

} // namespace hetcsma
