#include "hetcsma/error.hpp"
#include "hetcsma/format.hpp"
#include "hetcsma/harness.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

using namespace hetcsma;
namespace fs = std::filesystem;

namespace {

struct RunFlags {
    std::string scenario;
    std::uint64_t frames = 2000;
    std::uint64_t seed = 1;
    double v = MmuoConfig{}.V;
    std::string method = "mmuo";
    std::string detection = "oracle";
    std::string mode = "auto";
    double frame_length = MmuoConfig{}.frame_length;
    std::uint64_t slots = MmuoConfig{}.slots_per_frame;
    std::optional<double> lambda0;
    double q_min = MmuoConfig{}.q_min;
    double q_max = MmuoConfig{}.q_max;
    double burn_in = MmuoConfig{}.burn_in;
    double upsilon = DetectionConfig{}.upsilon;
    bool adaptive = false;
    std::uint64_t delay = DetectionConfig{}.message_delay;
    std::optional<double> radius;
    std::uint64_t probe_slots = DetectionConfig{}.probe_slots;
    bool rb_priority = false;
    std::string out_dir;
    bool log = false;
    std::string format = "csv";
};

void add_scenario_flags(CLI::App* app, RunFlags& f) {
    app->add_option("--scenario", f.scenario, "Scenario file (default: built-in toy)");
    app->add_option("--v", f.v, "Utility weight V")->check(CLI::PositiveNumber);
    app->add_option("--q-min", f.q_min, "Lower virtual queue bound");
    app->add_option("--q-max", f.q_max, "Upper virtual queue bound");
    app->add_option("--out-dir", f.out_dir, "Directory for CSV outputs");
    app->add_option("--format", f.format, "Output format")->check(CLI::IsMember({"csv"}));
}

void add_run_flags(CLI::App* app, RunFlags& f) {
    add_scenario_flags(app, f);
    app->add_option("--frames", f.frames, "Number of MMUO frames");
    app->add_option("--seed", f.seed, "Random seed");
    app->add_option("--method", f.method, "mmuo or mmuo-pf")->check(CLI::IsMember({"mmuo", "mmuo-pf"}));
    app->add_option("--detection", f.detection, "oracle or m1..m6")
        ->check(CLI::IsMember({"oracle", "m1", "m2", "m3", "m4", "m5", "m6"}));
    app->add_option("--mode", f.mode, "auto, continuous or slotted")
        ->check(CLI::IsMember({"auto", "continuous", "slotted"}));
    app->add_option("--frame-length", f.frame_length, "Continuous frame length");
    app->add_option("--slots", f.slots, "Slots per frame in slotted mode");
    app->add_option("--lambda0", f.lambda0, "Attempt rate (default 0.1 continuous, 0.05 slotted)");
    app->add_option("--burn-in", f.burn_in, "Fraction of frames left out of long-run averages");
    app->add_option("--upsilon", f.upsilon, "Safety threshold");
    app->add_flag("--adaptive-upsilon", f.adaptive, "Adapt the safety threshold locally");
    app->add_option("--delay", f.delay, "Message delay in slots (methods m4-m6)");
    app->add_option("--radius", f.radius, "Overhearing radius in meters");
    app->add_option("--probe-slots", f.probe_slots, "Probe duration in slots");
    app->add_flag("--rb-priority", f.rb_priority, "Prioritize resource blocks by cell class");
    app->add_flag("--log", f.log, "Write detection.csv with every attempt (slotted only)");
}

ExperimentSpec make_spec(const RunFlags& f) {
    ExperimentSpec spec;
    spec.scenario = f.scenario;
    spec.algorithm = parse_algorithm(f.method);
    spec.detection.method = parse_detection_method(f.detection);
    spec.detection.upsilon = f.upsilon;
    spec.detection.adaptive_upsilon = f.adaptive;
    spec.detection.message_delay = f.delay;
    spec.detection.overhear_radius = f.radius;
    spec.detection.probe_slots = f.probe_slots;
    spec.detection.rb_prioritization = f.rb_priority;

    const bool slotted = f.mode == "slotted" || (f.mode == "auto" && spec.needs_slotted());
    spec.mmuo = slotted ? MmuoConfig::slotted_defaults() : MmuoConfig{};
    spec.mmuo.mode = slotted ? SimMode::slotted : SimMode::continuous;
    spec.mmuo.V = f.v;
    spec.mmuo.q_min = f.q_min;
    spec.mmuo.q_max = f.q_max;
    spec.mmuo.burn_in = f.burn_in;
    spec.mmuo.frame_length = f.frame_length;
    spec.mmuo.slots_per_frame = f.slots;
    if (f.lambda0) spec.mmuo.lambda0 = *f.lambda0;
    spec.frames = f.frames;
    spec.seed = f.seed;
    if (!f.out_dir.empty()) {
        spec.outputs = ExperimentOutputs::in_directory(f.out_dir);
        if (f.log) spec.outputs.detection_log = fs::path(f.out_dir) / "detection.csv";
    }
    return spec;
}

void write_text(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (ec || !out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << text;
    if (!out.flush()) throw Error(ErrorKind::io, "write to " + path.string() + " failed");
}

int cmd_oracle(const RunFlags& f) {
    ExperimentSpec spec;
    spec.scenario = f.scenario;
    spec.validate();
    const Scenario sc = load_experiment_scenario(spec);
    const LteModel model(sc);
    const LteOracle oracle(model);
    std::vector<FeasibleScheduleSet> sets;
    for (std::size_t c = 0; c < model.num_carriers(); ++c) sets.push_back(enumerate_feasible(oracle, c));
    const auto sol = subgradient_solve(sets, Utility::logarithmic(), f.v, f.q_min, f.q_max);
    write_oracle_report(std::cout, sol, sets, f.v);
    if (!sol.warning.empty()) std::cerr << "warning: " << sol.warning << '\n';
    if (!f.out_dir.empty()) {
        std::ostringstream freq, report;
        write_frequency_csv(freq, sol, sets);
        write_oracle_report(report, sol, sets, f.v);
        write_text(fs::path(f.out_dir) / "oracle_frequencies.csv", freq.str());
        write_text(fs::path(f.out_dir) / "oracle_report.txt", report.str());
    }
    return 0;
}

int cmd_run(const RunFlags& f, bool full_report, double threshold) {
    const auto spec = make_spec(f);
    const auto res = run_experiment(spec);
    const auto rep = compare(res.run, res.oracle, res.sets, spec.mmuo.utility, spec.mmuo.V, threshold);
    if (full_report) {
        write_comparison(std::cout, rep);
        if (!f.out_dir.empty()) {
            std::ostringstream rows;
            rows << "# hetcsma comparison v1\ncarrier,schedule_label,empirical,oracle\n";
            for (const auto& s : rep.schedules)
                rows << s.carrier << ',' << s.label << ',' << fmt(s.empirical) << ',' << fmt(s.oracle) << '\n';
            write_text(fs::path(f.out_dir) / "comparison.csv", rows.str());
        }
    } else {
        write_summary_csv(std::cout, rep);
    }
    if (res.sim_stats)
        std::cerr << "slots " << res.sim_stats->slots << ", attempts " << res.sim_stats->attempts << ", accepted "
                  << res.sim_stats->accepted << ", collisions " << res.sim_stats->collisions << ", outage slots "
                  << res.sim_stats->outage_slots << '\n';
    if (!res.oracle.warning.empty()) std::cerr << "warning: " << res.oracle.warning << '\n';
    return 0;
}

int cmd_sweep(const RunFlags& base, const std::string& param, const std::vector<double>& values, unsigned jobs) {
    if (values.empty()) throw Error(ErrorKind::configuration, "sweep needs at least one value");
    std::vector<ExperimentSpec> specs;
    for (double v : values) {
        RunFlags f = base;
        if (param == "v") f.v = v;
        else f.upsilon = v;
        if (!base.out_dir.empty()) f.out_dir = (fs::path(base.out_dir) / (param + "_" + fmt(v))).string();
        specs.push_back(make_spec(f));
    }
    for (const auto& s : specs) s.validate();

    std::vector<std::optional<ComparisonReport>> reports(specs.size());
    std::vector<std::optional<Error>> errors(specs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < specs.size();) {
            try {
                const auto res = run_experiment(specs[i]);
                reports[i] = compare(res.run, res.oracle, res.sets, specs[i].mmuo.utility, specs[i].mmuo.V);
            } catch (const Error& e) {
                errors[i] = e;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(specs.size()))); ++t)
        pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::ostringstream table;
    table << "# hetcsma sweep v1\nparam,value,link,gamma_sim,gamma_oracle,rel_err\n";
    int code = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (errors[i]) {
            std::cerr << param << "=" << fmt(values[i]) << ": " << errors[i]->what() << '\n';
            if (code == 0) code = exit_code(*errors[i]);
            continue;
        }
        for (const auto& l : reports[i]->links)
            table << param << ',' << fmt(values[i]) << ',' << l.link << ',' << fmt(l.gamma_sim) << ','
                  << fmt(l.gamma_oracle) << ',' << fmt(l.rel_err) << '\n';
    }
    std::cout << table.str();
    if (!base.out_dir.empty()) write_text(fs::path(base.out_dir) / "sweep.csv", table.str());
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-carrier CSMA scheduling for heterogeneous cellular networks"};
    app.require_subcommand(1);

    RunFlags oracle_flags, run_flags, compare_flags, sweep_flags;
    double threshold = 0.05;
    std::string sweep_param = "v";
    std::vector<double> sweep_values;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

    auto* oracle = app.add_subcommand("oracle", "Solve the oracle problem and print the optimum");
    add_scenario_flags(oracle, oracle_flags);

    auto* run = app.add_subcommand("run", "Simulate MMUO and print the per-link summary");
    add_run_flags(run, run_flags);

    auto* cmp = app.add_subcommand("compare", "Simulate MMUO and compare against the oracle");
    add_run_flags(cmp, compare_flags);
    cmp->add_option("--threshold", threshold, "Relative error that flags a link")->check(CLI::PositiveNumber);

    auto* sweep = app.add_subcommand("sweep", "Run a grid over V or upsilon");
    add_run_flags(sweep, sweep_flags);
    sweep->add_option("--param", sweep_param, "v or upsilon")->check(CLI::IsMember({"v", "upsilon"}));
    sweep->add_option("--values", sweep_values, "Grid values")->required()->delimiter(',');
    sweep->add_option("--jobs", jobs, "Experiments run in parallel")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*oracle) return cmd_oracle(oracle_flags);
        if (*run) return cmd_run(run_flags, false, threshold);
        if (*cmp) return cmd_run(compare_flags, true, threshold);
        return cmd_sweep(sweep_flags, sweep_param, sweep_values, jobs);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    }
}
