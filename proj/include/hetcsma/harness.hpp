#pragma once

#include "hetcsma/detection.hpp"
#include "hetcsma/error.hpp"
#include "hetcsma/lte.hpp"
#include "hetcsma/mmuo.hpp"
#include "hetcsma/oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hetcsma {

/// mmuo sets powers directly from the MMUO schedule; mmuo_pf runs MMUO in
/// the background and lets proportional fair pick the served user.
enum class Algorithm { mmuo, mmuo_pf };

const char* to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);

struct ExperimentOutputs {
    std::optional<std::filesystem::path> history;
    std::optional<std::filesystem::path> frequencies;
    std::optional<std::filesystem::path> summary;
    /// Per-attempt detection decisions; slotted runs only.
    std::optional<std::filesystem::path> detection_log;

    /// history.csv, frequencies.csv and summary.csv inside `dir`.
    static ExperimentOutputs in_directory(const std::filesystem::path& dir);
};

struct ExperimentSpec {
    /// Empty means the built-in toy scenario.
    std::filesystem::path scenario;
    Algorithm algorithm = Algorithm::mmuo;
    DetectionConfig detection;
    MmuoConfig mmuo;
    std::uint64_t frames = 2000;
    std::uint64_t seed = 1;
    /// Unset means default_initial_queues.
    std::optional<std::vector<double>> initial_queues;
    ExperimentOutputs outputs;

    /// PF and the detection methods need the slotted simulator.
    bool needs_slotted() const;
    void validate() const;
};

struct ExperimentResult {
    Scenario scenario;
    MmuoRunResult run;
    std::vector<FeasibleScheduleSet> sets;
    OracleSolution oracle;
    /// Slotted runs only.
    std::optional<LteSimStats> sim_stats;
};

/// Loads the scenario, runs MMUO through the configured simulator, solves the
/// oracle at the same V and writes every requested output.
ExperimentResult run_experiment(const ExperimentSpec& spec);

Scenario load_experiment_scenario(const ExperimentSpec& spec);

struct LinkComparison {
    std::size_t link = 0;
    double gamma_sim = 0.0;
    double gamma_oracle = 0.0;
    /// Relative to the oracle; absolute when the oracle throughput is zero.
    double rel_err = 0.0;
    bool flagged = false;
};

struct ScheduleComparison {
    std::size_t carrier = 0;
    ScheduleCode code = 0;
    std::string label;
    double empirical = 0.0;
    double oracle = 0.0;
};

struct ComparisonReport {
    std::vector<LinkComparison> links;
    /// Every schedule of every carrier, ordered by carrier then code.
    std::vector<ScheduleComparison> schedules;
    double f1_sim = 0.0;
    double f1_oracle = 0.0;
    double gap_bound = 0.0;
    double threshold = 0.05;

    double max_rel_err() const;
    bool any_flagged() const;
    /// Sum of empirical frequencies on `carrier`.
    double empirical_mass(std::size_t carrier) const;
};

/// Compares long-run throughputs and schedule frequencies of a run against
/// the oracle. Throws Error(structural) on dimension mismatches.
ComparisonReport compare(const MmuoRunResult& run, const OracleSolution& sol,
                         std::span<const FeasibleScheduleSet> sets, const Utility& u, double V,
                         double threshold = 0.05);

inline constexpr const char* kFrequencyCsvVersion = "# hetcsma frequencies v1";
inline constexpr const char* kFrequencyCsvHeader = "carrier,schedule_label,freq";
inline constexpr const char* kSummaryCsvVersion = "# hetcsma summary v1";
inline constexpr const char* kSummaryCsvHeader = "link,gamma_sim,gamma_oracle,rel_err";

/// Observed schedules only, ordered by carrier then code.
void write_frequency_csv(std::ostream& out, const MmuoRunResult& run, const RateSet& rates, std::size_t num_links);
/// Oracle distribution, every schedule with nonzero probability.
void write_frequency_csv(std::ostream& out, const OracleSolution& sol, std::span<const FeasibleScheduleSet> sets);
void write_summary_csv(std::ostream& out, const ComparisonReport& report);
/// Human-readable comparison table.
void write_comparison(std::ostream& out, const ComparisonReport& report);

/// Exit status for a library error: 1 validation, 2 non-convergence, 3 I/O.
int exit_code(const Error& e);

} // namespace hetcsma
