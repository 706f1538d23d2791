#include "doctest.h"

#include "hetcsma/error.hpp"
#include "hetcsma/lte.hpp"
#include "hetcsma/rng.hpp"

#include <cmath>
#include <thread>

using namespace hetcsma;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::io;
}

Schedule targets(std::size_t carrier, std::vector<double> rates) { return Schedule{carrier, std::move(rates)}; }

std::vector<Schedule> idle_except(const LteModel& m, const Schedule& s) {
    std::vector<Schedule> out;
    for (std::size_t c = 0; c < m.num_carriers(); ++c)
        out.push_back(c == s.carrier ? s : Schedule{c, std::vector<double>(m.num_links(), 0.0)});
    return out;
}

// One femto serving one user whose gain is tuned so that the high rate needs
// `fraction` of the femto's budget on a single carrier.
Scenario budget_probe(double fraction) {
    Scenario s;
    s.phy.num_rbs = 2;
    s.basestations = {{0, 0.0, 0.0, CellClass::femto, 8.0, std::nullopt}};
    s.users = {{0, 5.0, 0.0}};
    const double g = s.phy.sinr_threshold(2.0) * s.phy.noise_power() / (fraction * dbm_to_watts(8.0));
    s.gain_overrides = {{0, 0, 0, g}, {0, 0, 1, g}};
    return s;
}

} // namespace

TEST_CASE("path loss") {
    CHECK(pathloss(1.0) == 0.525);
    CHECK(pathloss(10.0) == doctest::Approx(1.574560322468516e-4).epsilon(1e-13));
    CHECK(pathloss(100.0) == doctest::Approx(4.7223623030326826e-08).epsilon(1e-13));
    CHECK(kind_of([] { pathloss(0.0); }) == ErrorKind::domain);
    CHECK(kind_of([] { pathloss(-3.0); }) == ErrorKind::domain);
}

TEST_CASE("physical layer constants") {
    PhysicalLayer phy;
    CHECK(dbm_to_watts(30.0) == doctest::Approx(1.0));
    CHECK(dbm_to_watts(46.0) == doctest::Approx(39.810717055).epsilon(1e-9));
    CHECK(phy.noise_power() == doctest::Approx(5.2704627669472984e-14).epsilon(1e-13));
    CHECK(phy.normalized_rates() == RateSet({1.0, 2.0}));
    CHECK(phy.sinr_threshold(1.0) == 255.0);
    CHECK(phy.sinr_threshold(2.0) == 65535.0);
    CHECK(phy.bits_per_second(2.0) == doctest::Approx(16.0 * 5e6 / 3.0));
    for (double r : phy.rates_bps_per_hz) CHECK(phy.to_physical(phy.to_normalized(r)) == r);

    PhysicalLayer odd;
    odd.rates_bps_per_hz = {3.1, 5.3, 7.7};
    for (double r : odd.rates_bps_per_hz) CHECK(odd.to_physical(odd.to_normalized(r)) == r);
    CHECK(kind_of([&] { odd.to_physical(1.5); }) == ErrorKind::domain);
}

TEST_CASE("association") {
    auto toy = toy_scenario();
    CHECK(associate(toy.users, toy.basestations, toy.phy) == std::vector<std::size_t>{0, 0, 1, 1, 2, 2});

    // Open femto 10 m away beats the macro 780 m away.
    std::vector<Basestation> bss{{0, 0.0, 0.0, CellClass::macro, 46.0, std::nullopt},
                                 {1, 790.0, 0.0, CellClass::femto, 8.0, std::nullopt}};
    std::vector<User> near{{0, 780.0, 0.0}};
    const double femto_rx = dbm_to_watts(8.0) * pathloss(10.0);
    const double macro_rx = dbm_to_watts(46.0) * pathloss(780.0);
    REQUIRE(femto_rx > macro_rx);
    CHECK(associate(near, bss, PhysicalLayer{})[0] == 1);

    std::vector<Basestation> twins{{0, 0.0, 0.0, CellClass::femto, 8.0, std::nullopt},
                                   {1, 20.0, 0.0, CellClass::femto, 8.0, std::nullopt}};
    std::vector<User> mid{{0, 10.0, 0.0}};
    CHECK(associate(mid, twins, PhysicalLayer{})[0] == 0);

    std::vector<Basestation> closed{{0, 0.0, 0.0, CellClass::femto, 8.0, std::vector<std::size_t>{1}}};
    std::vector<User> two{{0, 5.0, 0.0}, {1, 6.0, 0.0}};
    CHECK(kind_of([&] { associate(two, closed, PhysicalLayer{}); }) == ErrorKind::configuration);
}

TEST_CASE("cqi and power inversion") {
    LteModel toy(toy_scenario());
    std::vector<double> off(3, 0.0);
    const double c0 = toy.link_cqi(0, 0, off);
    CHECK(c0 == doctest::Approx(896005.2488460931).epsilon(1e-12));
    CHECK(c0 == doctest::Approx(pathloss(100.0) / toy.noise()));
    CHECK(power_for_rate(2.0, c0, toy.phy()) == doctest::Approx(0.07314131260324454).epsilon(1e-12));

    std::vector<double> loud{0.0, 1e-3, 0.0};
    CHECK(toy.link_cqi(0, 0, loud) < c0);
    loud[1] = 2e-3;
    CHECK(toy.link_cqi(0, 0, loud) < toy.link_cqi(0, 0, std::vector<double>{0.0, 1e-3, 0.0}));
    std::vector<double> own{10.0, 0.0, 0.0};
    CHECK(toy.link_cqi(0, 0, own) == c0);

    std::vector<double> none;
    CHECK(cqi(2.0, 0.5, none, none) == 4.0);
    std::vector<double> pw{1.0}, gn{0.5};
    CHECK(cqi(2.0, 0.5, pw, gn) == 2.0);

    const PhysicalLayer phy;
    CHECK(rate_from_power(0.0, 1e6, phy) == 0.0);
    CHECK(rate_from_power(255.0, 1.0, phy) == 1.0);
    CHECK(rate_from_power(254.0, 1.0, phy) == 0.0);
    CHECK(rate_from_power(65535.0, 1.0, phy) == 2.0);
    CHECK(kind_of([&] { power_for_rate(1.5, 1.0, phy); }) == ErrorKind::domain);
    CHECK(power_for_rate(1.0, 2.0, phy) == doctest::Approx(power_for_rate(1.0, 1.0, phy) / 2.0));
}

TEST_CASE("power inversion round trips") {
    const PhysicalLayer phy;
    const RateSet rates = phy.normalized_rates();
    Rng rng(17);
    for (int i = 0; i < 1000; ++i) {
        const double q = std::exp(30.0 * rng.uniform() - 5.0);
        for (double r : rates.values()) {
            const double p = power_for_rate(r, q, phy);
            REQUIRE(rate_from_power(p, q, phy) == r);
            REQUIRE(rate_from_power(p * (1.0 + rng.uniform()), q, phy) >= r);
        }
    }
}

TEST_CASE("toy feasibility") {
    LteModel toy(toy_scenario());
    LteOracle oracle(toy);
    auto zero = lte_feasibility_check(toy, idle_except(toy, targets(0, {0, 0, 0, 0, 0, 0})));
    REQUIRE(zero.feasible());
    for (double p : zero.witness->power) CHECK(p == 0.0);

    CHECK(toy.solve_carrier(targets(0, {1, 1, 0, 0, 0, 0})).verdict == FeasibilityVerdict::same_cell_conflict);
    CHECK(toy.solve_carrier(targets(0, {0, 0, 1, 1, 0, 0})).verdict == FeasibilityVerdict::same_cell_conflict);
    CHECK(toy.solve_carrier(targets(0, {0, 2, 0, 0, 0, 0})).verdict == FeasibilityVerdict::over_budget);
    CHECK(toy.solve_carrier(targets(0, {0, 1, 0, 0, 1, 0})).verdict == FeasibilityVerdict::feasible);
    CHECK(toy.solve_carrier(targets(0, {0, 1, 1, 0, 1, 0})).verdict != FeasibilityVerdict::feasible);

    for (std::size_t c = 0; c < 3; ++c) {
        auto set = enumerate_feasible(oracle, c);
        CHECK(set.size() == 62);
        CHECK(set.is_downward_closed());
    }
}

TEST_CASE("witness reproduces every target") {
    LteModel toy(toy_scenario());
    LteOracle oracle(toy);
    auto set = enumerate_feasible(oracle, 0);
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Schedule> pick;
        for (std::size_t c = 0; c < 3; ++c) {
            Schedule s = set[static_cast<std::size_t>(rng.uniform() * static_cast<double>(set.size()))];
            s.carrier = c;
            pick.push_back(s);
        }
        auto res = lte_feasibility_check(toy, pick);
        REQUIRE(res.feasible() == oracle.is_jointly_feasible(pick));
        if (!res.feasible()) continue;
        const auto& w = *res.witness;
        for (std::size_t b = 0; b < 3; ++b) REQUIRE(w.total(b) <= toy.scenario().basestations[b].max_power());
        for (const auto& s : pick) {
            std::vector<double> powers(3);
            for (std::size_t b = 0; b < 3; ++b) powers[b] = w.at(b, s.carrier);
            for (std::size_t l = 0; l < 6; ++l) {
                const std::size_t b = toy.serving(l);
                const double p = w.served(b, s.carrier) == l ? w.at(b, s.carrier) : 0.0;
                REQUIRE(rate_from_power(p, toy.link_cqi(l, s.carrier, powers), toy.phy()) >= s.rates[l]);
                if (s.rates[l] != 0.0)
                    REQUIRE(rate_from_power(p, toy.link_cqi(l, s.carrier, powers), toy.phy()) == s.rates[l]);
            }
        }
    }
}

TEST_CASE("raising a target keeps infeasible vectors infeasible") {
    LteModel toy(toy_scenario());
    Rng rng(23);
    int checked = 0;
    while (checked < 1000) {
        std::vector<double> r(6);
        for (double& v : r) v = static_cast<double>(static_cast<int>(rng.uniform() * 3.0));
        Schedule s = targets(1, r);
        if (toy.solve_carrier(s).verdict == FeasibilityVerdict::feasible) continue;
        const auto l = static_cast<std::size_t>(rng.uniform() * 6.0);
        if (s.rates[l] == 2.0) continue;
        s.rates[l] += 1.0;
        REQUIRE(toy.solve_carrier(s).verdict != FeasibilityVerdict::feasible);
        ++checked;
    }
}

TEST_CASE("cross-carrier budget") {
    LteModel model(budget_probe(0.6));
    LteOracle oracle(model);
    Schedule high0 = targets(0, {2.0}), high1 = targets(1, {2.0}), idle1 = targets(1, {0.0});
    CHECK(oracle.is_feasible(high0));
    CHECK(oracle.is_feasible(high1));
    std::vector<Schedule> one{high0, idle1}, both{high0, high1};
    CHECK(oracle.is_jointly_feasible(one));
    CHECK_FALSE(oracle.is_jointly_feasible(both));
    CHECK(lte_feasibility_check(model, both).verdict == FeasibilityVerdict::over_budget);

    LteModel roomy(budget_probe(0.4));
    CHECK(lte_feasibility_check(roomy, both).feasible());
}

TEST_CASE("oracle memo is shared across threads") {
    LteModel toy(toy_scenario());
    LteOracle shared(toy);
    std::vector<int> counts(4, 0);
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t)
        pool.emplace_back([&, t] { counts[t] = static_cast<int>(enumerate_feasible(shared, 2).size()); });
    for (auto& th : pool) th.join();
    for (int n : counts) CHECK(n == 62);
}

TEST_CASE("proportional fair") {
    PfState st = PfState::initial(2);
    std::vector<std::size_t> cand{0, 1};
    CHECK(pf_select(st, cand, std::vector<double>{1.0, 2.0}) == 1);
    CHECK(pf_select(st, cand, std::vector<double>{2.0, 2.0}) == 0);
    st.average = {1.0, 4.0};
    CHECK(pf_select(st, cand, std::vector<double>{1.0, 2.0}) == 0);
    for (double& r : st.average) r *= 7.5;
    CHECK(pf_select(st, cand, std::vector<double>{1.0, 2.0}) == 0);
    std::vector<std::size_t> rev{1, 0};
    st.average = {1.0, 1.0};
    CHECK(pf_select(st, rev, std::vector<double>{1.0, 1.0}) == 0);

    PfState one = PfState::initial(1, 0.1, 2.0);
    CHECK(pf_update(one, std::vector<double>{0.0}).average[0] == doctest::Approx(1.8).epsilon(1e-15));
    CHECK(pf_update(one, std::vector<double>{2.0}).average[0] == 2.0);
    PfState full = PfState::initial(2, 1.0);
    auto next = pf_update(full, std::vector<double>{3.0, 0.0});
    CHECK(next.average[0] == 3.0);
    CHECK(next.average[1] == full.floor);

    LteModel toy(toy_scenario());
    std::vector<double> off(3, 0.0);
    std::vector<std::size_t> macro_links{0, 1};
    PfState fresh = PfState::initial(6);
    // With the whole macro budget user 0 reaches the high rate and user 1 the low one.
    CHECK(pf_select(toy, fresh, macro_links, dbm_to_watts(46.0), 0, off) == 0);
    fresh.average[0] = 4.0;
    CHECK(pf_select(toy, fresh, macro_links, dbm_to_watts(46.0), 0, off) == 1);
}

TEST_CASE("scenario files") {
    const auto toy = toy_scenario();
    const auto text = serialize_scenario(toy);
    CHECK(parse_scenario(text) == toy);
    CHECK(serialize_scenario(parse_scenario(text)) == text);

    auto shipped = load_scenario(HETCSMA_SOURCE_DIR "/scenarios/toy.scn");
    CHECK(shipped == toy);
    CHECK(shipped.basestations.size() == 3);
    CHECK(shipped.users.size() == 6);
    CHECK(shipped.phy.num_rbs == 3);

    auto with_gain = toy;
    with_gain.gain_overrides.push_back({1, 2, 2, 3.25e-5});
    auto back = parse_scenario(serialize_scenario(with_gain));
    CHECK(back == with_gain);
    LteModel m(back);
    CHECK(m.gain(1, 2, 2) == 3.25e-5);
    CHECK(m.gain(1, 2, 1) == pathloss(10.0));

    auto message = [](std::string_view src) {
        try {
            parse_scenario(src);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::configuration);
            return std::string(e.what());
        }
        FAIL("expected a parse error");
        return std::string();
    };
    CHECK(message("[user]\nid = 0\nx = abc\ny = 1\n[basestation]\nid=0\nclass=macro\nx=0\ny=0\npower_dbm=46\n") ==
          "scenario line 3: field 'x': expected a number, got 'abc'");
    CHECK(message("[basestation]\nid = 0\nclass = femto\nx = 0\ny = 0\npower_dbm = 8\ncsg = 7\n[user]\nid = 0\nx = 1\n"
                  "y = 1\n") == "scenario line 7: field 'csg': unknown user 7");
    CHECK(message("[user]\nid = 0\nx = 1\ny = 1\ncolour = red\n") == "scenario line 5: field 'colour': unknown in [user]");
    CHECK(message("id = 0\n").find("line 1") != std::string::npos);
    CHECK(message("[antenna]\n").find("unknown section") != std::string::npos);
    CHECK(message("[user]\nid = 0\nx = 1\n").find("field 'y': missing") != std::string::npos);
    CHECK(message("[basestation]\nid = 0\nclass = pico\nx = 0\ny = 0\npower_dbm = 8\n").find("field 'class'") !=
          std::string::npos);

    CHECK(kind_of([] { load_scenario("/nonexistent/toy.scn"); }) == ErrorKind::io);
}
