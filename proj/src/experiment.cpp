#include "perla/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>
#include <yaml-cpp/yaml.h>

#include "json.hpp"
#include "perla/errors.hpp"
#include "perla/variance_lab.hpp"

namespace perla {

std::string experiment_kind_label(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kTrain: return "train";
    case ExperimentKind::kScaleSweep: return "scale_sweep";
    case ExperimentKind::kVariance: return "variance";
    case ExperimentKind::kKAblation: return "k_ablation";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& label) {
  if (label == "train") return ExperimentKind::kTrain;
  if (label == "scale_sweep") return ExperimentKind::kScaleSweep;
  if (label == "variance") return ExperimentKind::kVariance;
  if (label == "k_ablation") return ExperimentKind::kKAblation;
  throw ConfigError("unknown experiment kind '" + label + "'");
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name must not be empty");
  if (name.find_first_of("/\\,") != std::string::npos) {
    throw ConfigError("name must not contain '/', '\\' or ','");
  }
  if (parallel < 1) throw ConfigError("parallel must be >= 1");
  if (kind == ExperimentKind::kVariance) {
    if (variance.trials < 2) throw ConfigError("variance.trials must be >= 2");
    if (variance.estimators.empty()) throw ConfigError("variance.estimators is empty");
    for (const auto& e : variance.estimators) EstimatorKind::parse(e);
    if (variance.k_grid.empty()) throw ConfigError("variance.k is empty");
    for (int k : variance.k_grid) {
      if (k < 1) throw ConfigError("variance.k entries must be >= 1");
    }
    return;
  }
  if (algos.empty()) throw ConfigError("algos is empty");
  train.validate();
  if (kind == ExperimentKind::kScaleSweep) {
    if (agent_counts.empty() && action_counts.empty()) {
      throw ConfigError("scale_sweep needs sweep.agents or sweep.actions");
    }
    for (int n : agent_counts) {
      if (n < 2 || n > 20) throw ConfigError("sweep.agents entries must lie in [2, 20]");
    }
    for (int a : action_counts) {
      if (a < 2 || a > 15) throw ConfigError("sweep.actions entries must lie in [2, 15]");
    }
    if (train.env.kind != "penalty" && train.env.kind != "foraging") {
      throw ConfigError("scale_sweep supports the penalty and foraging environments");
    }
    if (train.env.kind == "foraging" && !action_counts.empty()) {
      throw ConfigError("foraging has a fixed action set; sweep.actions must be empty");
    }
  }
  if (kind == ExperimentKind::kKAblation) {
    if (k_values.empty()) throw ConfigError("sweep.k is empty");
    for (int k : k_values) {
      if (k < 1) throw ConfigError("sweep.k entries must be >= 1");
    }
  }
}

// Config parsing -------------------------------------------------------------

namespace {

class YamlReader {
 public:
  explicit YamlReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& message) const {
    const YAML::Mark mark = node.Mark();
    std::string where = source_;
    if (mark.line >= 0) where += ":" + std::to_string(mark.line + 1);
    throw ConfigError(where + ": " + message);
  }

  template <typename T>
  T get(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node, "'" + key + "' must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, "'" + key + "' has the wrong type");
    }
  }

  template <typename T>
  std::vector<T> list(const YAML::Node& node, const std::string& key) const {
    if (!node.IsSequence()) fail(node, "'" + key + "' must be a list");
    std::vector<T> out;
    for (const auto& item : node) out.push_back(get<T>(item, key));
    return out;
  }

  using Handlers = std::map<std::string, std::function<void(const YAML::Node&)>>;

  void mapping(const YAML::Node& node, const std::string& section, const Handlers& handlers) const {
    if (!node.IsMap()) fail(node, "'" + section + "' must be a mapping");
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      const auto it = handlers.find(key);
      if (it == handlers.end()) {
        fail(kv.first, "unknown key '" + key + "' in " + section);
      }
      it->second(kv.second);
    }
  }

 private:
  std::string source_;
};

void parse_foraging(const YamlReader& r, const YAML::Node& node, ForagingSpec& f) {
  r.mapping(node, "env.foraging",
            {{"rows", [&](const YAML::Node& n) { f.rows = r.get<int>(n, "rows"); }},
             {"cols", [&](const YAML::Node& n) { f.cols = r.get<int>(n, "cols"); }},
             {"n_agents", [&](const YAML::Node& n) { f.n_agents = r.get<int>(n, "n_agents"); }},
             {"n_foods", [&](const YAML::Node& n) { f.n_foods = r.get<int>(n, "n_foods"); }},
             {"agent_levels",
              [&](const YAML::Node& n) { f.agent_levels = r.list<int>(n, "agent_levels"); }},
             {"food_levels",
              [&](const YAML::Node& n) { f.food_levels = r.list<int>(n, "food_levels"); }},
             {"cooperative_only",
              [&](const YAML::Node& n) { f.cooperative_only = r.get<bool>(n, "cooperative_only"); }},
             {"max_steps", [&](const YAML::Node& n) { f.max_steps = r.get<int>(n, "max_steps"); }}});
}

void parse_env(const YamlReader& r, const YAML::Node& node, EnvConfig& env) {
  r.mapping(node, "env",
            {{"kind", [&](const YAML::Node& n) { env.kind = r.get<std::string>(n, "kind"); }},
             {"n_agents", [&](const YAML::Node& n) { env.n_agents = r.get<int>(n, "n_agents"); }},
             {"n_actions", [&](const YAML::Node& n) { env.n_actions = r.get<int>(n, "n_actions"); }},
             {"optimal_payoff",
              [&](const YAML::Node& n) { env.optimal_payoff = r.get<double>(n, "optimal_payoff"); }},
             {"foraging", [&](const YAML::Node& n) { parse_foraging(r, n, env.foraging); }}});
}

void parse_train(const YamlReader& r, const YAML::Node& node, TrainConfig& t) {
  r.mapping(
      node, "train",
      {{"K", [&](const YAML::Node& n) { t.K = r.get<int>(n, "K"); }},
       {"pin_counterfactuals",
        [&](const YAML::Node& n) { t.pin_counterfactuals = r.get<bool>(n, "pin_counterfactuals"); }},
       {"discount", [&](const YAML::Node& n) { t.discount = r.get<double>(n, "discount"); }},
       {"actor_lr", [&](const YAML::Node& n) { t.actor_lr = r.get<double>(n, "actor_lr"); }},
       {"critic_lr", [&](const YAML::Node& n) { t.critic_lr = r.get<double>(n, "critic_lr"); }},
       {"adam_eps", [&](const YAML::Node& n) { t.adam_eps = r.get<double>(n, "adam_eps"); }},
       {"ppo_epochs", [&](const YAML::Node& n) { t.ppo_epochs = r.get<int>(n, "ppo_epochs"); }},
       {"clip", [&](const YAML::Node& n) { t.clip = r.get<double>(n, "clip"); }},
       {"entropy_coef",
        [&](const YAML::Node& n) { t.entropy_coef = r.get<double>(n, "entropy_coef"); }},
       {"max_grad_norm",
        [&](const YAML::Node& n) { t.max_grad_norm = r.get<double>(n, "max_grad_norm"); }},
       {"huber_loss", [&](const YAML::Node& n) { t.huber_loss = r.get<bool>(n, "huber_loss"); }},
       {"batch_size", [&](const YAML::Node& n) { t.batch_size = r.get<int>(n, "batch_size"); }},
       {"horizon", [&](const YAML::Node& n) { t.horizon = r.get<int>(n, "horizon"); }},
       {"total_steps", [&](const YAML::Node& n) { t.total_steps = r.get<long>(n, "total_steps"); }},
       {"iterations",
        [&](const YAML::Node& n) {
          // Shorthand: total_steps = iterations * batch_size, resolved below.
          const long it = r.get<long>(n, "iterations");
          if (it < 1) r.fail(n, "'iterations' must be >= 1");
          t.total_steps = -it;
        }},
       {"eval_interval",
        [&](const YAML::Node& n) { t.eval_interval = r.get<int>(n, "eval_interval"); }},
       {"eval_episodes",
        [&](const YAML::Node& n) { t.eval_episodes = r.get<int>(n, "eval_episodes"); }},
       {"critic_hidden",
        [&](const YAML::Node& n) { t.critic_hidden = r.list<int>(n, "critic_hidden"); }},
       {"seeds", [&](const YAML::Node& n) {
          t.seeds = r.list<std::uint64_t>(n, "seeds");
          if (t.seeds.empty()) r.fail(n, "seed list is empty");
        }}});
  if (t.total_steps < 0) t.total_steps = -t.total_steps * t.batch_size;
}

void parse_variance(const YamlReader& r, const YAML::Node& node, VarianceLabConfig& v) {
  r.mapping(node, "variance",
            {{"trials", [&](const YAML::Node& n) { v.trials = r.get<long>(n, "trials"); }},
             {"k", [&](const YAML::Node& n) { v.k_grid = r.list<int>(n, "k"); }},
             {"estimators",
              [&](const YAML::Node& n) { v.estimators = r.list<std::string>(n, "estimators"); }},
             {"theta", [&](const YAML::Node& n) { v.theta = r.get<double>(n, "theta"); }},
             {"seed", [&](const YAML::Node& n) { v.seed = r.get<std::uint64_t>(n, "seed"); }}});
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source) {
  const YamlReader r(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(source + ": top level must be a mapping");

  ExperimentConfig c;
  c.source_hash = fnv1a64(text);
  r.mapping(
      root, "config",
      {{"name", [&](const YAML::Node& n) { c.name = r.get<std::string>(n, "name"); }},
       {"kind",
        [&](const YAML::Node& n) {
          try {
            c.kind = parse_experiment_kind(r.get<std::string>(n, "kind"));
          } catch (const ConfigError& e) {
            r.fail(n, e.what());
          }
        }},
       {"output_dir", [&](const YAML::Node& n) { c.output_dir = r.get<std::string>(n, "output_dir"); }},
       {"parallel", [&](const YAML::Node& n) { c.parallel = r.get<int>(n, "parallel"); }},
       {"algos",
        [&](const YAML::Node& n) {
          c.algos.clear();
          for (const auto& label : r.list<std::string>(n, "algos")) {
            try {
              c.algos.push_back(parse_algo(label));
            } catch (const std::exception& e) {
              r.fail(n, e.what());
            }
          }
        }},
       {"env", [&](const YAML::Node& n) { parse_env(r, n, c.train.env); }},
       {"train", [&](const YAML::Node& n) { parse_train(r, n, c.train); }},
       {"sweep",
        [&](const YAML::Node& n) {
          r.mapping(n, "sweep",
                    {{"agents", [&](const YAML::Node& m) { c.agent_counts = r.list<int>(m, "agents"); }},
                     {"actions", [&](const YAML::Node& m) { c.action_counts = r.list<int>(m, "actions"); }},
                     {"k", [&](const YAML::Node& m) { c.k_values = r.list<int>(m, "k"); }}});
        }},
       {"variance", [&](const YAML::Node& n) { parse_variance(r, n, c.variance); }}});

  try {
    c.validate();
  } catch (const std::exception& e) {
    r.fail(root, e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_experiment_config(text.str(), path.string());
}

// CSV ------------------------------------------------------------------------

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols{"experiment", "env", "algo", "N",      "A",
                                             "K",          "seed", "step", "metric", "value"};
  return cols;
}

namespace {

auto row_key(const ResultRow& r) {
  return std::tie(r.experiment, r.env, r.algo, r.n_agents, r.n_actions, r.k, r.seed, r.step,
                  r.metric);
}

void check_field(const std::string& field) {
  if (field.empty() || field.find_first_of(",\"\n\r") != std::string::npos) {
    throw InputError("CSV text field '" + field + "' is empty or contains a separator");
  }
}

template <typename T>
T parse_number(const std::string& field, const std::string& where) {
  T value{};
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw InputError(where + ": cannot parse '" + field + "' as a number");
  }
  return value;
}

}  // namespace

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ResultRow& a, const ResultRow& b) { return row_key(a) < row_key(b); });
}

void check_unique(const std::vector<ResultRow>& rows) {
  std::vector<const ResultRow*> ptrs;
  ptrs.reserve(rows.size());
  for (const auto& r : rows) ptrs.push_back(&r);
  std::sort(ptrs.begin(), ptrs.end(),
            [](const ResultRow* a, const ResultRow* b) { return row_key(*a) < row_key(*b); });
  for (std::size_t i = 1; i < ptrs.size(); ++i) {
    if (row_key(*ptrs[i - 1]) == row_key(*ptrs[i])) {
      const ResultRow& r = *ptrs[i];
      throw InputError("duplicate result key (" + r.experiment + ", " + r.algo + ", seed " +
                       std::to_string(r.seed) + ", step " + std::to_string(r.step) + ", " +
                       r.metric + ")");
    }
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InputError("cannot format number");
  return std::string(buf, ptr);
}

std::string to_csv(const std::vector<ResultRow>& rows) {
  std::string out;
  const auto& cols = result_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  for (const auto& r : rows) {
    check_field(r.experiment);
    check_field(r.env);
    check_field(r.algo);
    check_field(r.metric);
    if (!std::isfinite(r.value)) {
      throw NumericError("non-finite value for metric '" + r.metric + "'");
    }
    out += r.experiment + ',' + r.env + ',' + r.algo + ',' + std::to_string(r.n_agents) + ',' +
           std::to_string(r.n_actions) + ',' + std::to_string(r.k) + ',' + std::to_string(r.seed) +
           ',' + std::to_string(r.step) + ',' + r.metric + ',' + format_double(r.value) + '\n';
  }
  return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

void write_csv_atomic(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  write_text_atomic(path, to_csv(rows));
}

std::vector<ResultRow> parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  const auto& cols = result_columns();
  std::vector<ResultRow> rows;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.emplace_back();
    const std::string where = source + ":" + std::to_string(line_no);
    if (!header) {
      if (fields != cols) throw InputError(where + ": header must be " + "experiment,env,algo,N,A,K,seed,step,metric,value");
      header = true;
      continue;
    }
    if (fields.size() != cols.size()) {
      throw InputError(where + ": expected " + std::to_string(cols.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    ResultRow r;
    r.experiment = fields[0];
    r.env = fields[1];
    r.algo = fields[2];
    r.n_agents = parse_number<int>(fields[3], where);
    r.n_actions = parse_number<int>(fields[4], where);
    r.k = parse_number<int>(fields[5], where);
    r.seed = parse_number<std::uint64_t>(fields[6], where);
    r.step = parse_number<long>(fields[7], where);
    r.metric = fields[8];
    r.value = parse_number<double>(fields[9], where);
    for (std::size_t i : {0u, 1u, 2u, 8u}) {
      if (fields[i].empty()) throw InputError(where + ": empty " + cols[i]);
    }
    if (!std::isfinite(r.value)) throw InputError(where + ": value is not finite");
    rows.push_back(std::move(r));
  }
  if (!header) throw InputError(source + ": missing header row");
  return rows;
}

std::vector<ResultRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv(text.str(), path.string());
}

// Orchestration --------------------------------------------------------------

std::vector<Job> plan_jobs(const ExperimentConfig& config) {
  config.validate();
  std::vector<Job> jobs;
  auto add_seeds = [&](const TrainConfig& base, Algo algo) {
    for (std::uint64_t seed : base.seeds) {
      Job job;
      job.env = base.env.kind;
      job.algo = algo;
      job.train = base;
      job.train.algo = algo;
      job.train.seeds = {seed};
      if (algo == Algo::kMappo) job.train.K = 1;
      jobs.push_back(std::move(job));
    }
  };

  switch (config.kind) {
    case ExperimentKind::kTrain:
      for (Algo algo : config.algos) add_seeds(config.train, algo);
      break;
    case ExperimentKind::kScaleSweep: {
      const bool foraging = config.train.env.kind == "foraging";
      const std::vector<int> agents =
          config.agent_counts.empty()
              ? std::vector<int>{foraging ? config.train.env.foraging.n_agents : config.train.env.n_agents}
              : config.agent_counts;
      const std::vector<int> actions =
          config.action_counts.empty() ? std::vector<int>{config.train.env.n_actions}
                                       : config.action_counts;
      for (int n : agents) {
        for (int a : actions) {
          TrainConfig t = config.train;
          if (foraging) {
            ForagingSpec& f = t.env.foraging;
            const int level = f.agent_levels.empty() ? 1 : f.agent_levels.front();
            f.n_agents = n;
            f.agent_levels.assign(static_cast<std::size_t>(n), level);
          } else {
            t.env.n_agents = n;
            t.env.n_actions = a;
          }
          t.validate();
          for (Algo algo : config.algos) add_seeds(t, algo);
        }
      }
      break;
    }
    case ExperimentKind::kKAblation:
      for (Algo algo : config.algos) {
        if (algo == Algo::kMappo) {
          add_seeds(config.train, algo);
          continue;
        }
        for (int k : config.k_values) {
          TrainConfig t = config.train;
          t.K = k;
          t.pin_counterfactuals = false;
          add_seeds(t, algo);
        }
      }
      break;
    case ExperimentKind::kVariance:
      for (const std::string& label : config.variance.estimators) {
        const EstimatorKind base = EstimatorKind::parse(label);
        const std::vector<int> ks = base.variant == EstimatorVariant::kPerla
                                        ? config.variance.k_grid
                                        : std::vector<int>{1};
        for (int k : ks) {
          Job job;
          job.env = "toy";
          job.is_variance = true;
          job.estimator = EstimatorKind::parse(label, k);
          jobs.push_back(std::move(job));
        }
      }
      break;
  }
  return jobs;
}

namespace {

int max_actions(const GameSpec& spec) {
  return *std::max_element(spec.action_counts.begin(), spec.action_counts.end());
}

std::vector<ResultRow> train_rows(const ExperimentConfig& config, const Job& job) {
  const std::uint64_t seed = job.train.seeds.front();
  const SeedRun run = train_seed(job.train, seed);
  const GameSpec spec = job.train.env.make(job.train.discount)->spec();
  ResultRow base;
  base.experiment = config.name;
  base.env = job.env;
  base.algo = algo_label(job.algo);
  base.n_agents = spec.n_agents;
  base.n_actions = max_actions(spec);
  base.k = job.train.K;
  base.seed = seed;

  std::vector<ResultRow> rows;
  auto push = [&](long step, const std::string& metric, double value) {
    ResultRow r = base;
    r.step = step;
    r.metric = metric;
    r.value = value;
    rows.push_back(std::move(r));
  };
  for (const EvalRecord& rec : run.records) {
    push(rec.step, "greedy_return", rec.greedy_return);
    push(rec.step, "stochastic_return", rec.stochastic_return);
    push(rec.step, "critic_loss", rec.critic_loss);
    push(rec.step, "mean_abs_advantage", rec.mean_abs_advantage);
    for (std::size_t i = 0; i < rec.policy_probabilities.size(); ++i) {
      push(rec.step, "p_action0_agent" + std::to_string(i), rec.policy_probabilities[i].front());
    }
  }
  return rows;
}

std::vector<ResultRow> variance_rows(const ExperimentConfig& config, const Job& job) {
  const VarianceLabConfig& v = config.variance;
  const EstimatorKind& kind = job.estimator;
  // Each (estimator, k) cell owns an independent stream.
  const SeededRng rng = SeededRng(v.seed).substream(
      fnv1a64(kind.label() + ":" + std::to_string(kind.k)));
  const VarianceReport report = measure_estimator_variance(kind, v.trials, v.theta, rng);
  ResultRow base;
  base.experiment = config.name;
  base.env = "toy";
  base.algo = kind.label();
  base.n_agents = 3;
  base.n_actions = 2;
  base.k = kind.k;
  base.seed = v.seed;
  base.step = 0;
  std::vector<ResultRow> rows;
  auto push = [&](const std::string& metric, double value) {
    ResultRow r = base;
    r.metric = metric;
    r.value = value;
    rows.push_back(std::move(r));
  };
  push("gradient_mean", report.mean.front());
  push("gradient_mean_ci", report.mean_half_width.front());
  push("gradient_variance", report.total_variance());
  push("gradient_variance_ci", report.total_variance_half_width());
  push("analytic_variance", toy_gradient_variance(kind, v.theta));
  push("trials", static_cast<double>(v.trials));
  return rows;
}

}  // namespace

JobOutcome run_job(const ExperimentConfig& config, const Job& job) {
  JobOutcome out;
  try {
    out.rows = job.is_variance ? variance_rows(config, job) : train_rows(config, job);
  } catch (const std::exception& e) {
    out.error = e.what();
    ResultRow marker;
    marker.experiment = config.name;
    marker.env = job.env;
    marker.algo = job.is_variance ? job.estimator.label() : algo_label(job.algo);
    marker.n_agents = job.is_variance ? 3 : job.train.env.n_agents;
    marker.n_actions = job.is_variance ? 2 : job.train.env.n_actions;
    marker.k = job.is_variance ? job.estimator.k : job.train.K;
    marker.seed = job.is_variance ? config.variance.seed : job.train.seeds.front();
    marker.step = 0;
    marker.metric = "run_failed";
    marker.value = 1.0;
    out.rows = {marker};
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Job> jobs = plan_jobs(config);
  std::vector<JobOutcome> outcomes(jobs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      outcomes[j] = run_job(config, jobs[j]);
    }
  };
  const int workers = std::min<int>(config.parallel, static_cast<int>(jobs.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  std::set<std::uint64_t> seeds;
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    auto& o = outcomes[j];
    if (!o.error.empty()) {
      const ResultRow& m = o.rows.front();
      result.failures.push_back(m.algo + " seed " + std::to_string(m.seed) + ": " + o.error);
      failures.push_back({{"env", m.env}, {"algo", m.algo}, {"seed", m.seed}, {"error", o.error}});
    }
    for (auto& r : o.rows) {
      seeds.insert(r.seed);
      result.rows.push_back(std::move(r));
    }
  }
  sort_rows(result.rows);
  check_unique(result.rows);

  result.csv_path = out_dir / (config.name + ".csv");
  result.manifest_path = out_dir / (config.name + ".manifest.json");
  write_csv_atomic(result.csv_path, result.rows);

  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config.source_hash));
  nlohmann::json manifest;
  manifest["name"] = config.name;
  manifest["kind"] = experiment_kind_label(config.kind);
  manifest["config_hash"] = hash;
  manifest["seeds"] = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  manifest["jobs"] = jobs.size();
  manifest["rows"] = result.rows.size();
  manifest["csv"] = result.csv_path.filename().string();
  manifest["columns"] = result_columns();
  manifest["failures"] = failures;
  write_text_atomic(result.manifest_path, manifest.dump(2) + "\n");

  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// Summaries ------------------------------------------------------------------

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, int, int, int, long, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : rows) {
    if (!std::isfinite(r.value)) throw InputError("non-finite value in metric '" + r.metric + "'");
    groups[{r.experiment, r.env, r.algo, r.n_agents, r.n_actions, r.k, r.step, r.metric}].push_back(
        r.value);
  }
  std::vector<SummaryRow> out;
  out.reserve(groups.size());
  for (const auto& [key, values] : groups) {
    SummaryRow s;
    std::tie(s.experiment, s.env, s.algo, s.n_agents, s.n_actions, s.k, s.step, s.metric) = key;
    s.n = static_cast<int>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / s.n;
    if (s.n > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - s.mean) * (v - s.mean);
      const double sd = std::sqrt(ss / (s.n - 1));
      const boost::math::students_t dist(s.n - 1);
      s.half_width = boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(s.n));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "experiment,env,algo,N,A,K,step,metric,n,mean,ci95\n";
  for (const auto& s : rows) {
    out += s.experiment + ',' + s.env + ',' + s.algo + ',' + std::to_string(s.n_agents) + ',' +
           std::to_string(s.n_actions) + ',' + std::to_string(s.k) + ',' + std::to_string(s.step) +
           ',' + s.metric + ',' + std::to_string(s.n) + ',' + format_double(s.mean) + ',' +
           format_double(s.half_width) + '\n';
  }
  return out;
}

}  // namespace perla
