#ifndef PERLA_EXPERIMENT_HPP_
#define PERLA_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "perla/trainer.hpp"

namespace perla {

enum class ExperimentKind { kTrain, kScaleSweep, kVariance, kKAblation };

std::string experiment_kind_label(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& label);

struct VarianceLabConfig {
  long trials = 1000;
  std::vector<int> k_grid{1, 2, 5, 25, 125};
  std::vector<std::string> estimators{"ctde", "dt", "perla"};
  double theta = 0.0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::kTrain;
  TrainConfig train;
  std::vector<Algo> algos{Algo::kPerlaMappo, Algo::kMappo};
  // Sweep axes. scale_sweep crosses agent_counts x action_counts;
  // k_ablation runs PERLA-MAPPO once per entry of k_values.
  std::vector<int> agent_counts;
  std::vector<int> action_counts;
  std::vector<int> k_values{5, 25, 100, 250};
  VarianceLabConfig variance;
  std::string output_dir;  // empty: caller decides
  int parallel = 1;
  // FNV-1a of the source text; 0 when built in code.
  std::uint64_t source_hash = 0;

  // Throws ConfigError.
  void validate() const;
};

// Parses the YAML experiment schema (see README). Unknown keys, wrong types
// and failed validation raise ConfigError with "<source>:<line>:" prefixed.
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& source = "<config>");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::string& text);

struct ResultRow {
  std::string experiment;
  std::string env;
  std::string algo;
  int n_agents = 0;
  int n_actions = 0;
  int k = 0;
  std::uint64_t seed = 0;
  long step = 0;
  std::string metric;
  double value = 0.0;

  bool operator==(const ResultRow&) const = default;
};

const std::vector<std::string>& result_columns();
// Orders by every column but value.
void sort_rows(std::vector<ResultRow>& rows);
// Throws InputError naming the first duplicated key.
void check_unique(const std::vector<ResultRow>& rows);

// Shortest round-trip decimal form, '.' separator.
std::string format_double(double v);
std::string to_csv(const std::vector<ResultRow>& rows);
// Writes via a temporary sibling and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_csv_atomic(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
// Throws InputError naming the offending line on any schema violation.
std::vector<ResultRow> parse_csv(const std::string& text, const std::string& source = "<csv>");
std::vector<ResultRow> read_csv(const std::filesystem::path& path);

// One unit of work: a training seed, or one variance-lab estimator.
struct Job {
  std::string env;
  Algo algo = Algo::kPerlaMappo;
  TrainConfig train;  // seeds holds exactly the job's seed
  bool is_variance = false;
  EstimatorKind estimator;
};

std::vector<Job> plan_jobs(const ExperimentConfig& config);

struct JobOutcome {
  std::vector<ResultRow> rows;
  std::string error;  // empty on success
};

// Rows produced by one job. A job that throws yields a single "run_failed"
// marker row and the error text instead.
JobOutcome run_job(const ExperimentConfig& config, const Job& job);

struct ExperimentResult {
  std::vector<ResultRow> rows;  // sorted
  std::filesystem::path csv_path;
  std::filesystem::path manifest_path;
  std::vector<std::string> failures;
  double wall_clock_seconds = 0.0;
};

// Executes every job with up to config.parallel workers, then writes
// <out>/<name>.csv and <out>/<name>.manifest.json atomically.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out_dir);

struct SummaryRow {
  std::string experiment;
  std::string env;
  std::string algo;
  int n_agents = 0;
  int n_actions = 0;
  int k = 0;
  long step = 0;
  std::string metric;
  int n = 0;
  double mean = 0.0;
  double half_width = 0.0;  // 95% Student-t, 0 for a single seed
};

// Mean and 95% CI across seeds for every other key combination.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);
std::string summary_to_csv(const std::vector<SummaryRow>& rows);

// Least-squares slope of log y on log x over positive points.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct ChartSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> half_width;
};

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<ChartSeries>& series);
// Log-log chart with a fitted slope annotation per series.
std::string loglog_chart_svg(const std::string& title, const std::string& x_label,
                             const std::string& y_label, const std::vector<ChartSeries>& series);

// Learning curves of greedy_return per (experiment, env, N, A), and a
// variance-vs-k chart when variance rows are present. Returns written paths.
std::vector<std::filesystem::path> write_charts(const std::vector<SummaryRow>& summary,
                                                const std::filesystem::path& out_dir);

}  // namespace perla

#endif  // PERLA_EXPERIMENT_HPP_
