#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "perla/envs.hpp"
#include "perla/errors.hpp"
#include "perla/experiment.hpp"
#include "perla/variance_lab.hpp"

namespace py = pybind11;
using namespace perla;

namespace {

py::dict row_dict(const ResultRow& r) {
  py::dict d;
  d["experiment"] = r.experiment;
  d["env"] = r.env;
  d["algo"] = r.algo;
  d["N"] = r.n_agents;
  d["A"] = r.n_actions;
  d["K"] = r.k;
  d["seed"] = r.seed;
  d["step"] = r.step;
  d["metric"] = r.metric;
  d["value"] = r.value;
  return d;
}

py::list rows_list(const std::vector<ResultRow>& rows) {
  py::list out;
  for (const auto& r : rows) out.append(row_dict(r));
  return out;
}

}  // namespace

PYBIND11_MODULE(_perla, m) {
  m.doc() = "Marginalised centralised-critic policy gradients: environments, variance lab, runner";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<UnsupportedOperation>(m, "UnsupportedOperation", PyExc_NotImplementedError);

  m.def("penalty_reward",
        [](std::vector<int> actions, int n_actions) {
          const int n = static_cast<int>(actions.size());
          return penalty_game_reward(JointAction(std::move(actions)), n, n_actions);
        },
        py::arg("actions"), py::arg("n_actions"));
  m.def("coordination_reward",
        [](int a, int b, double optimal_payoff) {
          return coordination_reward(JointAction({a, b}), default_coordination_table(optimal_payoff));
        },
        py::arg("a"), py::arg("b"), py::arg("optimal_payoff") = 1.0);
  m.def("toy_reward", [](std::vector<int> actions) { return toy_team_reward(JointAction(std::move(actions))); });

  m.def("toy_gradient_mean", &toy_gradient_mean, py::arg("theta") = 0.0);
  m.def("toy_gradient_variance",
        [](const std::string& estimator, int k, double theta) {
          return toy_gradient_variance(EstimatorKind::parse(estimator, k), theta);
        },
        py::arg("estimator"), py::arg("k") = 1, py::arg("theta") = 0.0);
  m.def("measure_variance",
        [](const std::string& estimator, int k, long trials, double theta, std::uint64_t seed) {
          const VarianceReport r =
              measure_estimator_variance(EstimatorKind::parse(estimator, k), trials, theta, SeededRng(seed));
          py::dict d;
          d["mean"] = r.mean.front();
          d["variance"] = r.total_variance();
          d["variance_ci"] = r.total_variance_half_width();
          d["analytic_variance"] = toy_gradient_variance(r.kind, theta);
          return d;
        },
        py::arg("estimator"), py::arg("k") = 1, py::arg("trials") = 1000, py::arg("theta") = 0.0,
        py::arg("seed") = 0);
  m.def("check_qhat_variance",
        [](int k, long trials, std::uint64_t seed) {
          const DecompositionCheck t = check_qhat_decomposition(k, trials, SeededRng(seed));
          py::dict d;
          d["measured"] = t.measured;
          d["predicted"] = t.predicted;
          d["residual"] = t.residual;
          d["ci_half_width"] = t.ci_half_width;
          return d;
        },
        py::arg("k"), py::arg("trials") = 10000, py::arg("seed") = 0);

  m.def("run_experiment",
        [](const std::filesystem::path& config, const std::filesystem::path& out_dir) {
          ExperimentResult r;
          {
            py::gil_scoped_release release;
            r = run_experiment(load_experiment_config(config), out_dir);
          }
          py::dict d;
          d["rows"] = rows_list(r.rows);
          d["csv"] = r.csv_path;
          d["manifest"] = r.manifest_path;
          d["failures"] = r.failures;
          return d;
        },
        py::arg("config"), py::arg("out_dir"));
  m.def("read_csv", [](const std::filesystem::path& path) { return rows_list(read_csv(path)); });
  m.def("summarize", [](const std::filesystem::path& csv) {
    py::list out;
    for (const auto& s : summarize(read_csv(csv))) {
      py::dict d;
      d["experiment"] = s.experiment;
      d["env"] = s.env;
      d["algo"] = s.algo;
      d["N"] = s.n_agents;
      d["A"] = s.n_actions;
      d["K"] = s.k;
      d["step"] = s.step;
      d["metric"] = s.metric;
      d["n"] = s.n;
      d["mean"] = s.mean;
      d["ci95"] = s.half_width;
      out.append(d);
    }
    return out;
  });
}
