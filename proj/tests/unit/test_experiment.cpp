#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "perla/errors.hpp"
#include "perla/experiment.hpp"

using namespace perla;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("perla_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string error_of(const std::string& yaml) {
  try {
    parse_experiment_config(yaml, "cfg.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

ResultRow row(const std::string& algo, std::uint64_t seed, long step, double value,
              const std::string& metric = "greedy_return") {
  return {"exp", "penalty", algo, 2, 3, algo == "mappo" ? 1 : 5, seed, step, metric, value};
}

ExperimentConfig tiny_train() {
  ExperimentConfig c;
  c.name = "tiny";
  c.train.env.kind = "coordination";
  c.train.batch_size = 8;
  c.train.total_steps = 8 * 4;
  c.train.ppo_epochs = 1;
  c.train.eval_interval = 2;
  c.train.critic_hidden = {4};
  c.train.K = 3;
  c.train.seeds = {0, 1};
  return c;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("every shipped config parses") {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(PERLA_CONFIG_DIR)) {
    if (entry.path().extension() != ".yaml") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_experiment_config(entry.path()));
    ++n;
  }
  CHECK(n >= 5);
}

TEST_CASE("yaml fields map onto the config") {
  const std::string yaml =
      "name: demo\n"
      "kind: k_ablation\n"
      "algos: [perla_mappo, mappo]\n"
      "env:\n"
      "  kind: penalty\n"
      "  n_agents: 3\n"
      "  n_actions: 4\n"
      "train:\n"
      "  batch_size: 32\n"
      "  iterations: 10\n"
      "  actor_lr: 0.02\n"
      "  critic_hidden: [16, 8]\n"
      "  seeds: [4, 5]\n"
      "sweep:\n"
      "  k: [2, 7]\n";
  const ExperimentConfig c = parse_experiment_config(yaml);
  CHECK(c.name == "demo");
  CHECK(c.kind == ExperimentKind::kKAblation);
  CHECK(c.train.env.n_agents == 3);
  CHECK(c.train.env.n_actions == 4);
  CHECK(c.train.total_steps == 320);
  CHECK(c.train.actor_lr == 0.02);
  CHECK(c.train.critic_hidden == std::vector<int>{16, 8});
  CHECK(c.train.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(c.k_values == std::vector<int>{2, 7});
  CHECK(c.source_hash == fnv1a64(yaml));
  // Two K values for PERLA, one MAPPO entry, two seeds each.
  CHECK(plan_jobs(c).size() == 6);
}

TEST_CASE("config errors carry file and line") {
  CHECK(error_of("name: x\nkind: train\ntrain:\n  learning_rate: 0.1\n").rfind("cfg.yaml:4: unknown key 'learning_rate'", 0) == 0);
  CHECK(error_of("name: x\ntrain:\n  seeds: []\n").rfind("cfg.yaml:3:", 0) == 0);
  CHECK(error_of("name: x\nkind: nonsense\n").rfind("cfg.yaml:2:", 0) == 0);
  CHECK(error_of("name: x\ntrain:\n  K: many\n").rfind("cfg.yaml:3:", 0) == 0);
  CHECK(error_of("name: x\ntrain:\n  K: 0\n").find("K must be >= 1") != std::string::npos);
  CHECK(error_of("name: [unclosed\n").rfind("cfg.yaml:", 0) == 0);
  CHECK(error_of("- a\n- b\n").find("mapping") != std::string::npos);
  CHECK(error_of("name: x\nkind: scale_sweep\nenv:\n  kind: coordination\nsweep:\n  agents: [2]\n")
            .find("scale_sweep") != std::string::npos);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.yaml"), ConfigError);
}

TEST_CASE("csv round trip preserves every field") {
  std::vector<ResultRow> rows{row("mappo", 0, 0, 0.1), row("perla_mappo", 18446744073709551615ULL, 64, -12.5),
                              row("mappo", 1, 128, 1.0 / 3.0, "critic_loss")};
  sort_rows(rows);
  const std::string text = to_csv(rows);
  CHECK(text.rfind("experiment,env,algo,N,A,K,seed,step,metric,value\n", 0) == 0);
  CHECK(parse_csv(text) == rows);
  const fs::path dir = scratch("csv");
  write_csv_atomic(dir / "r.csv", rows);
  CHECK(read_csv(dir / "r.csv") == rows);
  CHECK_FALSE(fs::exists(dir / "r.csv.tmp"));
}

TEST_CASE("csv schema violations name the line") {
  const std::string header = "experiment,env,algo,N,A,K,seed,step,metric,value\n";
  auto message = [](const std::string& text) {
    try {
      parse_csv(text, "r.csv");
    } catch (const InputError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("a,b\n").rfind("r.csv:1:", 0) == 0);
  CHECK(message(header + "e,p,mappo,2,3,1,0,0,m\n").rfind("r.csv:2:", 0) == 0);
  CHECK(message(header + "e,p,mappo,2,3,1,0,0,m,1\ne,p,mappo,x,3,1,0,0,m,1\n").rfind("r.csv:3:", 0) == 0);
  CHECK(message(header + "e,p,mappo,2,3,1,0,0,m,nan\n").rfind("r.csv:2:", 0) == 0);
  CHECK(message(header + "e,,mappo,2,3,1,0,0,m,1\n").rfind("r.csv:2:", 0) == 0);
  CHECK(message("").find("missing header") != std::string::npos);
}

TEST_CASE("duplicate keys are rejected") {
  std::vector<ResultRow> rows{row("mappo", 0, 0, 1.0), row("mappo", 0, 0, 2.0)};
  CHECK_THROWS_AS(check_unique(rows), InputError);
  rows[1].algo = "perla_mappo";
  CHECK_NOTHROW(check_unique(rows));
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -12.0, 1e-300, 123456789.125}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("summary of a ten-row fixture") {
  std::vector<ResultRow> rows;
  const double mappo[] = {1, 2, 3, 4, 5};
  const double perla[] = {0, 0, 0, 0, 10};
  for (int s = 0; s < 5; ++s) {
    rows.push_back(row("mappo", static_cast<std::uint64_t>(s), 100, mappo[s]));
    rows.push_back(row("perla_mappo", static_cast<std::uint64_t>(s), 100, perla[s]));
  }
  const auto summary = summarize(rows);
  REQUIRE(summary.size() == 2);
  // Groups sort by algo; t(0.975, 4) = 2.776445.
  CHECK(summary[0].algo == "mappo");
  CHECK(summary[0].n == 5);
  CHECK(summary[0].mean == doctest::Approx(3.0));
  CHECK(summary[0].half_width == doctest::Approx(2.776445 * std::sqrt(2.5 / 5)).epsilon(1e-6));
  CHECK(summary[1].mean == doctest::Approx(2.0));
  CHECK(summary[1].half_width == doctest::Approx(2.776445 * 2.0).epsilon(1e-6));
  const std::string csv = summary_to_csv(summary);
  CHECK(csv.rfind("experiment,env,algo,N,A,K,step,metric,n,mean,ci95\n", 0) == 0);
}

TEST_CASE("summary edge cases") {
  auto one = summarize({row("mappo", 0, 0, 7.0)});
  CHECK(one[0].half_width == 0.0);
  CHECK(one[0].mean == 7.0);
  auto two = summarize({row("mappo", 0, 0, 0.0), row("mappo", 1, 0, 8.0)});
  CHECK(two[0].mean == 4.0);
  // t(0.975, 1) = 12.7062; sd = sqrt(32).
  CHECK(two[0].half_width == doctest::Approx(12.7062 * std::sqrt(32.0) / std::sqrt(2.0)).epsilon(1e-4));
}

TEST_CASE("log-log slope") {
  const std::vector<double> x{1, 2, 5, 25, 125};
  std::vector<double> y;
  for (double k : x) y.push_back(0.234375 / k);
  CHECK(loglog_slope(x, y) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), InputError);
}

TEST_CASE("charts are well-formed svg") {
  ChartSeries s{"perla", {1, 5, 25}, {0.3, 0.1, 0.07}, {0.01, 0.01, 0.01}};
  const std::string svg = loglog_chart_svg("t", "k", "var", {s});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("slope") != std::string::npos);
  CHECK(line_chart_svg("a<b", "x", "y", {s}).find("a&lt;b") != std::string::npos);
}

TEST_CASE("parallel and serial runs write identical results") {
  ExperimentConfig c = tiny_train();
  const fs::path a = scratch("serial");
  const fs::path b = scratch("parallel");
  const ExperimentResult serial = run_experiment(c, a);
  c.parallel = 3;
  const ExperimentResult parallel = run_experiment(c, b);
  CHECK(serial.failures.empty());
  CHECK(serial.rows == parallel.rows);
  std::ifstream fa(serial.csv_path);
  std::ifstream fb(parallel.csv_path);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(fs::exists(serial.manifest_path));
  // 2 algos x 2 seeds x 3 records x 6 metrics.
  CHECK(serial.rows.size() == 72);

  const auto summary = summarize(serial.rows);
  const auto charts = write_charts(summary, a);
  REQUIRE(charts.size() == 1);
  CHECK(fs::exists(charts.front()));
}

TEST_CASE("a failing job leaves a marker row") {
  ExperimentConfig c = tiny_train();
  Job job = plan_jobs(c).front();
  job.train.env.kind = "nowhere";
  const JobOutcome o = run_job(c, job);
  CHECK_FALSE(o.error.empty());
  REQUIRE(o.rows.size() == 1);
  CHECK(o.rows[0].metric == "run_failed");
  CHECK(o.rows[0].value == 1.0);
}

TEST_CASE("variance experiments emit one row set per estimator and k") {
  ExperimentConfig c;
  c.name = "var";
  c.kind = ExperimentKind::kVariance;
  c.variance.trials = 200;
  c.variance.k_grid = {1, 4};
  const ExperimentResult r = run_experiment(c, scratch("variance"));
  // ctde, dt, perla x 2, each with six metrics.
  CHECK(r.rows.size() == 24);
  const auto charts = write_charts(summarize(r.rows), r.csv_path.parent_path());
  CHECK(charts.size() == 1);
}

}  // TEST_SUITE
