#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <tuple>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "perla/errors.hpp"
#include "perla/experiment.hpp"

namespace fs = std::filesystem;
using namespace perla;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

fs::path default_out_dir(const std::string& from_config) {
  if (!from_config.empty()) return from_config;
  if (const char* env = std::getenv("PERLA_OUT_DIR"); env && *env) return env;
  return "results";
}

int cmd_run(const std::string& config_path, const std::string& out, int parallel) {
  ExperimentConfig config = load_experiment_config(config_path);
  if (parallel > 0) config.parallel = parallel;
  const fs::path out_dir = out.empty() ? default_out_dir(config.output_dir) : fs::path(out);
  const ExperimentResult result = run_experiment(config, out_dir);
  std::printf("%zu rows -> %s (%.1fs)\n", result.rows.size(), result.csv_path.string().c_str(),
              result.wall_clock_seconds);
  std::printf("manifest -> %s\n", result.manifest_path.string().c_str());
  for (const auto& f : result.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
  return result.failures.empty() ? kOk : kRuntime;
}

int cmd_summarize(const std::string& in, bool plot, const std::string& out) {
  const std::vector<ResultRow> rows = read_csv(in);
  const std::vector<SummaryRow> summary = summarize(rows);
  const fs::path in_path(in);
  const fs::path out_dir = out.empty() ? (in_path.has_parent_path() ? in_path.parent_path() : ".")
                                       : fs::path(out);
  const fs::path summary_path = out_dir / (in_path.stem().string() + ".summary.csv");
  write_text_atomic(summary_path, summary_to_csv(summary));

  // Last step of every series, which is what most readers want first.
  std::map<std::tuple<std::string, std::string, std::string, int, int, int, std::string>,
           const SummaryRow*> last;
  for (const auto& s : summary) {
    auto& slot = last[{s.experiment, s.env, s.algo, s.n_agents, s.n_actions, s.k, s.metric}];
    if (!slot || slot->step < s.step) slot = &s;
  }
  std::printf("%-14s %-12s %-12s %3s %3s %4s %-22s %8s %4s %12s %10s\n", "experiment", "env",
              "algo", "N", "A", "K", "metric", "step", "n", "mean", "ci95");
  for (const auto& [key, s] : last) {
    std::printf("%-14s %-12s %-12s %3d %3d %4d %-22s %8ld %4d %12.6g %10.4g\n",
                s->experiment.c_str(), s->env.c_str(), s->algo.c_str(), s->n_agents,
                s->n_actions, s->k, s->metric.c_str(), s->step, s->n, s->mean, s->half_width);
  }
  std::printf("summary -> %s\n", summary_path.string().c_str());
  if (plot) {
    for (const auto& p : write_charts(summary, out_dir)) {
      std::printf("chart -> %s\n", p.string().c_str());
    }
  }
  return kOk;
}

int cmd_variance(long trials, const std::vector<int>& ks, double theta, std::uint64_t seed,
                 const std::string& out) {
  ExperimentConfig config;
  config.name = "variance";
  config.kind = ExperimentKind::kVariance;
  config.variance.trials = trials;
  config.variance.k_grid = ks;
  config.variance.theta = theta;
  config.variance.seed = seed;
  std::string canonical = "variance trials=" + std::to_string(trials) + " theta=" +
                          format_double(theta) + " seed=" + std::to_string(seed) + " k=";
  for (int k : ks) canonical += std::to_string(k) + ",";
  config.source_hash = fnv1a64(canonical);
  config.validate();

  std::vector<ResultRow> rows;
  if (out.empty()) {
    for (const Job& job : plan_jobs(config)) {
      JobOutcome o = run_job(config, job);
      if (!o.error.empty()) throw std::runtime_error(o.error);
      rows.insert(rows.end(), o.rows.begin(), o.rows.end());
    }
  } else {
    const ExperimentResult result = run_experiment(config, out);
    if (!result.failures.empty()) throw std::runtime_error(result.failures.front());
    rows = result.rows;
    std::printf("csv -> %s\n", result.csv_path.string().c_str());
  }
  std::map<std::pair<std::string, int>, std::map<std::string, double>> table;
  for (const auto& r : rows) table[{r.algo, r.k}][r.metric] = r.value;
  std::printf("%-6s %5s %12s %12s %12s %12s\n", "est", "k", "mean", "variance", "ci95",
              "analytic");
  for (auto& [key, m] : table) {
    std::printf("%-6s %5d %12.6f %12.6f %12.6f %12.6f\n", key.first.c_str(), key.second,
                m["gradient_mean"], m["gradient_variance"], m["gradient_variance_ci"],
                m["analytic_variance"]);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent policy-gradient experiments with marginalised centralised critics"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  int parallel = 0;
  auto* run = app.add_subcommand("run", "Run an experiment config and write CSV results");
  run->add_option("--config", config_path, "YAML experiment config")->required();
  run->add_option("--out", out, "Output directory (default: config, then $PERLA_OUT_DIR, then results)");
  run->add_option("--parallel", parallel, "Concurrent runs (overrides the config)")
      ->check(CLI::PositiveNumber);

  std::string in;
  bool plot = false;
  std::string summary_out;
  auto* sum = app.add_subcommand("summarize", "Mean and 95% CI across seeds");
  sum->add_option("--in", in, "Result CSV")->required();
  sum->add_flag("--plot", plot, "Also write SVG charts");
  sum->add_option("--out", summary_out, "Directory for summary and charts (default: next to input)");

  long trials = 1000;
  std::vector<int> ks{1, 2, 5, 25, 125};
  double theta = 0.0;
  std::uint64_t seed = 0;
  std::string variance_out;
  auto* var = app.add_subcommand("variance", "Toy-game gradient variance of each estimator");
  var->add_option("--trials", trials, "Independent estimator evaluations")->check(CLI::Range(2L, 1L << 40));
  var->add_option("--k", ks, "Counterfactual sample counts")->delimiter(',');
  var->add_option("--theta", theta, "Agent 1 policy parameter");
  var->add_option("--seed", seed, "Root seed");
  var->add_option("--out", variance_out, "Also write a CSV to this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*run) return cmd_run(config_path, out, parallel);
    if (*sum) return cmd_summarize(in, plot, summary_out);
    if (*var) return cmd_variance(trials, ks, theta, seed, variance_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kOk;
}
