#include "hetcsma/harness.hpp"

#include "hetcsma/error.hpp"
#include "hetcsma/format.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

namespace hetcsma {

namespace fs = std::filesystem;

const char* to_string(Algorithm a) {
    return a == Algorithm::mmuo ? "mmuo" : "mmuo-pf";
}

Algorithm parse_algorithm(std::string_view name) {
    if (name == "mmuo") return Algorithm::mmuo;
    if (name == "mmuo-pf") return Algorithm::mmuo_pf;
    throw Error(ErrorKind::configuration, "unknown algorithm '" + std::string(name) + "' (expected mmuo or mmuo-pf)");
}

ExperimentOutputs ExperimentOutputs::in_directory(const fs::path& dir) {
    ExperimentOutputs out;
    out.history = dir / "history.csv";
    out.frequencies = dir / "frequencies.csv";
    out.summary = dir / "summary.csv";
    return out;
}

bool ExperimentSpec::needs_slotted() const {
    return algorithm == Algorithm::mmuo_pf || detection.base_method() != 0;
}

void ExperimentSpec::validate() const {
    mmuo.validate();
    detection.validate();
    if (needs_slotted() && mmuo.mode != SimMode::slotted)
        throw Error(ErrorKind::configuration,
                    std::string(to_string(algorithm)) + " with detection " + to_string(detection.method) +
                        " needs the slotted simulator");
    if (outputs.detection_log && mmuo.mode != SimMode::slotted)
        throw Error(ErrorKind::configuration, "a detection log needs the slotted simulator");
    if (!scenario.empty() && !fs::is_regular_file(scenario))
        throw Error(ErrorKind::io, "scenario file " + scenario.string() + " does not exist");
}

Scenario load_experiment_scenario(const ExperimentSpec& spec) {
    return spec.scenario.empty() ? toy_scenario() : load_scenario(spec.scenario);
}

namespace {

std::ofstream open_output(const fs::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    return out;
}

template <typename Write>
void write_file(const std::optional<fs::path>& path, Write&& write) {
    if (!path) return;
    auto out = open_output(*path);
    write(out);
    out.flush();
    if (!out) throw Error(ErrorKind::io, "write to " + path->string() + " failed");
}

} // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentResult res;
    try {
        res.scenario = load_experiment_scenario(spec);
    } catch (const Error& e) {
        throw Error(e.kind(), "loading scenario: " + std::string(e.what()));
    }
    const LteModel model(res.scenario);
    const LteOracle oracle(model);
    const std::size_t L = model.num_links(), C = model.num_carriers();

    for (std::size_t c = 0; c < C; ++c) res.sets.push_back(enumerate_feasible(oracle, c));
    try {
        res.oracle = subgradient_solve(res.sets, spec.mmuo.utility, spec.mmuo.V, spec.mmuo.q_min, spec.mmuo.q_max);
    } catch (const ConvergenceError& e) {
        throw ConvergenceError("oracle at V=" + fmt(spec.mmuo.V) + ": " + e.what(), e.final_drift());
    }

    VirtualQueueVector q0 = default_initial_queues(L, model.rates(), spec.mmuo);
    if (spec.initial_queues) {
        if (spec.initial_queues->size() != L)
            throw Error(ErrorKind::configuration, "initial queues list " + std::to_string(spec.initial_queues->size()) +
                                                      " values for " + std::to_string(L) + " links");
        q0 = VirtualQueueVector(*spec.initial_queues, spec.mmuo.q_min, spec.mmuo.q_max);
    }

    std::vector<DetectionLogEntry> log;
    if (spec.mmuo.mode == SimMode::slotted) {
        LteSimConfig cfg;
        cfg.detection = spec.detection;
        cfg.proportional_fair = spec.algorithm == Algorithm::mmuo_pf;
        cfg.slots_per_frame = spec.mmuo.slots_per_frame;
        cfg.record_log = spec.outputs.detection_log.has_value();
        LteSlotSimulator sim(model, cfg);
        res.run = run_mmuo(oracle, spec.mmuo, spec.frames, q0, spec.seed, sim.runner());
        res.sim_stats = sim.stats();
        log = sim.log();
    } else {
        res.run = run_mmuo(oracle, spec.mmuo, spec.frames, q0, spec.seed);
    }

    const auto report = compare(res.run, res.oracle, res.sets, spec.mmuo.utility, spec.mmuo.V);
    write_file(spec.outputs.history, [&](std::ostream& o) { write_history_csv(o, res.run); });
    write_file(spec.outputs.frequencies, [&](std::ostream& o) { write_frequency_csv(o, res.run, model.rates(), L); });
    write_file(spec.outputs.summary, [&](std::ostream& o) { write_summary_csv(o, report); });
    write_file(spec.outputs.detection_log, [&](std::ostream& o) { write_detection_csv(o, log); });
    return res;
}

double ComparisonReport::max_rel_err() const {
    double m = 0.0;
    for (const auto& l : links) m = std::max(m, l.rel_err);
    return m;
}

bool ComparisonReport::any_flagged() const {
    return std::any_of(links.begin(), links.end(), [](const LinkComparison& l) { return l.flagged; });
}

double ComparisonReport::empirical_mass(std::size_t carrier) const {
    double sum = 0.0;
    for (const auto& s : schedules)
        if (s.carrier == carrier) sum += s.empirical;
    return sum;
}

ComparisonReport compare(const MmuoRunResult& run, const OracleSolution& sol, std::span<const FeasibleScheduleSet> sets,
                         const Utility& u, double V, double threshold) {
    const std::size_t L = run.long_run.num_links(), C = run.long_run.num_carriers();
    if (sol.gamma_star.num_links() != L || sol.gamma_star.num_carriers() != C)
        throw Error(ErrorKind::structural, "run has " + std::to_string(L) + " links on " + std::to_string(C) +
                                               " carriers, oracle has " + std::to_string(sol.gamma_star.num_links()) +
                                               " on " + std::to_string(sol.gamma_star.num_carriers()));
    if (sets.size() != C || sol.pi_star.size() != C || run.schedule_frequency.size() != C)
        throw Error(ErrorKind::structural, "schedule sets do not match the carrier count");
    if (!(threshold > 0.0)) throw Error(ErrorKind::configuration, "comparison threshold must be positive");

    ComparisonReport rep;
    rep.threshold = threshold;
    for (std::size_t l = 0; l < L; ++l) {
        LinkComparison lc;
        lc.link = l;
        lc.gamma_sim = run.long_run.link_total(l);
        lc.gamma_oracle = sol.gamma_star.link_total(l);
        const double diff = std::abs(lc.gamma_sim - lc.gamma_oracle);
        lc.rel_err = lc.gamma_oracle > 0.0 ? diff / lc.gamma_oracle : diff;
        lc.flagged = lc.rel_err > threshold;
        rep.links.push_back(lc);
    }

    for (std::size_t c = 0; c < C; ++c) {
        if (sets[c].num_links() != L || sol.pi_star[c].size() != sets[c].size())
            throw Error(ErrorKind::structural, "carrier " + std::to_string(c) + " distribution does not match its set");
        const RateSet& rates = sets[c].rates();
        std::map<ScheduleCode, ScheduleComparison> rows;
        for (std::size_t i = 0; i < sets[c].size(); ++i) {
            const ScheduleCode code = encode(sets[c][i], rates);
            rows[code] = {c, code, schedule_label(sets[c][i], rates), 0.0, sol.pi_star[c][i]};
        }
        for (const auto& [code, freq] : run.schedule_frequency[c]) {
            auto it = rows.find(code);
            if (it == rows.end())
                it = rows.emplace(code, ScheduleComparison{c, code, schedule_label(decode(code, L, c, rates), rates), 0.0, 0.0})
                         .first;
            it->second.empirical = freq;
        }
        for (auto& [code, row] : rows) rep.schedules.push_back(std::move(row));
    }

    rep.f1_sim = objective_f1(run.long_run, u);
    rep.f1_oracle = objective_f1(sol.gamma_star, u);
    rep.gap_bound = gap_bound(V, sets);
    return rep;
}

void write_frequency_csv(std::ostream& out, const MmuoRunResult& run, const RateSet& rates, std::size_t num_links) {
    out << kFrequencyCsvVersion << '\n' << kFrequencyCsvHeader << '\n';
    for (std::size_t c = 0; c < run.schedule_frequency.size(); ++c) {
        const std::map<ScheduleCode, double> sorted(run.schedule_frequency[c].begin(), run.schedule_frequency[c].end());
        for (const auto& [code, freq] : sorted)
            out << c << ',' << schedule_label(decode(code, num_links, c, rates), rates) << ',' << fmt(freq) << '\n';
    }
}

void write_frequency_csv(std::ostream& out, const OracleSolution& sol, std::span<const FeasibleScheduleSet> sets) {
    out << kFrequencyCsvVersion << '\n' << kFrequencyCsvHeader << '\n';
    for (std::size_t c = 0; c < sets.size() && c < sol.pi_star.size(); ++c) {
        std::map<ScheduleCode, std::size_t> order;
        for (std::size_t i = 0; i < sets[c].size(); ++i) order[encode(sets[c][i], sets[c].rates())] = i;
        for (const auto& [code, i] : order)
            if (sol.pi_star[c][i] > 0.0)
                out << c << ',' << schedule_label(sets[c][i], sets[c].rates()) << ',' << fmt(sol.pi_star[c][i]) << '\n';
    }
}

void write_summary_csv(std::ostream& out, const ComparisonReport& report) {
    out << kSummaryCsvVersion << '\n' << kSummaryCsvHeader << '\n';
    for (const auto& l : report.links)
        out << l.link << ',' << fmt(l.gamma_sim) << ',' << fmt(l.gamma_oracle) << ',' << fmt(l.rel_err) << '\n';
}

void write_comparison(std::ostream& out, const ComparisonReport& report) {
    out << "link  gamma_sim     gamma_oracle  rel_err\n";
    for (const auto& l : report.links) {
        char line[128];
        std::snprintf(line, sizeof line, "%-5zu %-13.6g %-13.6g %.4f%s\n", l.link, l.gamma_sim, l.gamma_oracle, l.rel_err,
                      l.flagged ? "  > threshold" : "");
        out << line;
    }
    out << "\ncarrier  schedule        empirical  oracle\n";
    for (const auto& s : report.schedules) {
        if (s.empirical < 1e-4 && s.oracle < 1e-4) continue;
        char line[160];
        std::snprintf(line, sizeof line, "%-8zu %-15s %-10.4f %.4f\n", s.carrier, s.label.c_str(), s.empirical, s.oracle);
        out << line;
    }
    out << "\nf1 simulated " << fmt(report.f1_sim) << ", oracle " << fmt(report.f1_oracle) << ", gap bound "
        << fmt(report.gap_bound) << '\n';
    out << "max relative error " << fmt(report.max_rel_err()) << " (threshold " << fmt(report.threshold) << ")\n";
}

int exit_code(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::convergence: return 2;
    case ErrorKind::io: return 3;
    default: return 1;
    }
}

} // namespace hetcsma
