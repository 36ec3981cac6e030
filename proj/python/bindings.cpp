#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "survfuse/config.hpp"
#include "survfuse/error.hpp"
#include "survfuse/eval.hpp"
#include "survfuse/model.hpp"
#include "survfuse/objective.hpp"
#include "survfuse/ot_align.hpp"
#include "survfuse/runtime.hpp"

namespace py = pybind11;
using namespace survfuse;

namespace {

// Flat config keys as accepted by the CLI, passed as a JSON string.
RunConfig run_config(const std::string& config_json) {
  RunConfig cfg;
  if (!config_json.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    apply_config_json(cfg, j);
  }
  return cfg;
}

std::vector<SurvivalOutcome> outcomes(const std::vector<double>& times,
                                      const std::vector<int>& censor,
                                      const std::vector<double>& risks) {
  if (times.size() != censor.size() || (!risks.empty() && risks.size() != times.size()))
    throw SchemaError("times, censor and risks must have equal length");
  std::vector<SurvivalOutcome> o(times.size());
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = {times[i], censor[i], risks.empty() ? 0.0 : risks[i]};
  return o;
}

py::dict whatif_dict(const WhatIfTable& t) {
  py::list rows;
  for (const auto& r : t.rows)
    rows.append(py::dict(py::arg("radiation") = r.radiation,
                         py::arg("pharmaceutical") = r.pharmaceutical,
                         py::arg("risk") = r.risk));
  return py::dict(py::arg("id") = t.patient_id, py::arg("rows") = rows,
                  py::arg("actual") = t.actual, py::arg("best") = t.best,
                  py::arg("worst") = t.worst);
}

}  // namespace

PYBIND11_MODULE(_survfuse, m) {
  m.doc() = "Multi-modal discrete-time survival fusion (native core)";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<IOError>(m, "IOError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<EncodingError>(m, "EncodingError", base.ptr());
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", numerical.ptr());
  py::register_exception<EvalError>(m, "EvalError", base.ptr());

  py::class_<Cohort>(m, "Cohort")
      .def("__len__", &Cohort::size)
      .def_property_readonly("ids", [](const Cohort& c) {
        std::vector<std::string> v;
        for (const auto& p : c.patients) v.push_back(p.id);
        return v;
      })
      .def_property_readonly("times", [](const Cohort& c) {
        std::vector<double> v;
        for (const auto& p : c.patients) v.push_back(p.survival_time);
        return v;
      })
      .def_property_readonly("censor", [](const Cohort& c) {
        std::vector<int> v;
        for (const auto& p : c.patients) v.push_back(p.censor);
        return v;
      })
      .def("subset", [](const Cohort& c, const std::vector<std::size_t>& idx) {
        return subset(c, idx);
      })
      .def("save", [](const Cohort& c, const std::filesystem::path& dir) {
        return save_cohort(c, dir);
      });

  m.def("load_cohort", &load_cohort, py::arg("manifest"));
  m.def(
      "simulate",
      [](const std::string& config_json, std::uint64_t seed) {
        SyntheticCohort s = generate_synthetic_cohort(run_config(config_json).generator, seed);
        return py::make_tuple(std::move(s.cohort), s.true_risk);
      },
      py::arg("config_json") = "", py::arg("seed") = 0);
  m.def("split_folds", [](std::size_t n, int k, std::uint64_t seed) {
    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> out;
    for (auto& f : split_folds(n, k, seed)) out.emplace_back(f.train, f.val);
    return out;
  });

  m.def("nll_loss", &nll_loss, py::arg("hazards"), py::arg("y"), py::arg("censor"));
  m.def("bnll_loss", &bnll_loss, py::arg("hazards"), py::arg("y"), py::arg("censor"),
        py::arg("n_bins"));
  m.def("risk_score", &risk_score, py::arg("hazards"));
  m.def("hazards_to_survival", &hazards_to_survival, py::arg("hazards"));

  m.def(
      "sinkhorn",
      [](const Matrix& cost, double eps, double tol, int max_iter) {
        CostMatrix c;
        c.values = cost;
        const TransportPlan p = sinkhorn(c, {eps, tol, max_iter});
        return py::make_tuple(p.plan, p.iterations);
      },
      py::arg("cost"), py::arg("eps") = 0.1, py::arg("tol") = 1e-6,
      py::arg("max_iter") = 1000);
  m.def("cost_matrix", [](const Matrix& f_p, const Matrix& f_x) {
    return cost_matrix(f_p, f_x).values;
  });

  m.def(
      "concordance_index",
      [](const std::vector<double>& t, const std::vector<int>& c,
         const std::vector<double>& r) { return concordance_index(outcomes(t, c, r)); },
      py::arg("times"), py::arg("censor"), py::arg("risks"));
  m.def(
      "km_curve",
      [](const std::vector<double>& t, const std::vector<int>& c) {
        std::vector<std::pair<double, double>> points;
        for (const auto& p : km_curve(outcomes(t, c, {})).points)
          points.emplace_back(p.time, p.survival);
        return points;
      },
      py::arg("times"), py::arg("censor"));
  m.def(
      "logrank_test",
      [](const std::vector<double>& ta, const std::vector<int>& ca,
         const std::vector<double>& tb, const std::vector<int>& cb) {
        const LogrankResult r = logrank_test(outcomes(ta, ca, {}), outcomes(tb, cb, {}));
        return py::dict(py::arg("chi2") = r.chi_square, py::arg("p") = r.p_value,
                        py::arg("observed_a") = r.observed_a,
                        py::arg("expected_a") = r.expected_a,
                        py::arg("variance") = r.variance);
      },
      py::arg("times_a"), py::arg("censor_a"), py::arg("times_b"), py::arg("censor_b"));

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("epochs_completed", &Checkpoint::epochs_completed)
      .def_readonly("val_cindex", &Checkpoint::val_cindex)
      .def_property_readonly("bin_edges", [](const Checkpoint& c) { return c.bins.edges; })
      .def_property_readonly("parameter_count",
                             [](const Checkpoint& c) { return c.params.scalar_count(); })
      .def("save", [](const Checkpoint& c, const std::filesystem::path& dir) {
        save_checkpoint(c, dir);
      });
  m.def("load_checkpoint", [](const std::filesystem::path& dir) { return load_checkpoint(dir); });

  m.def(
      "train",
      [](const Cohort& train_set, const Cohort& val_set, const std::string& config_json) {
        const TrainConfig cfg = run_config(config_json).train;
        py::gil_scoped_release release;
        TrainResult r = train(train_set, val_set, cfg);
        return std::move(r.best);
      },
      py::arg("train"), py::arg("val"), py::arg("config_json") = "");

  m.def(
      "predict_risks",
      [](const Checkpoint& ck, const Cohort& cohort) {
        Model model = model_from_checkpoint(ck);
        return predict_risks(model, cohort);
      },
      py::arg("checkpoint"), py::arg("cohort"));
  m.def(
      "whatif",
      [](const Checkpoint& ck, const Cohort& cohort) {
        Model model = model_from_checkpoint(ck);
        py::list out;
        for (const auto& p : cohort.patients) out.append(whatif_dict(treatment_whatif(p, model)));
        return out;
      },
      py::arg("checkpoint"), py::arg("cohort"));

  m.def(
      "cross_validate",
      [](const Cohort& cohort, int k, const std::string& config_json) {
        const TrainConfig cfg = run_config(config_json).train;
        CvResult r;
        {
          py::gil_scoped_release release;
          r = run_cross_validation(cohort, k, cfg);
        }
        std::vector<double> scores;
        for (const auto& f : r.folds) scores.push_back(f.val_cindex);
        return py::dict(py::arg("mean") = r.mean, py::arg("std") = r.stddev,
                        py::arg("folds") = scores, py::arg("formatted") = r.formatted());
      },
      py::arg("cohort"), py::arg("k") = 5, py::arg("config_json") = "");

  m.def(
      "gradcheck",
      [](std::uint64_t seed, int samples, double step, double tol, double corrupt) {
        ToyInstance toy = make_toy_instance(seed);
        Model model(toy.config, seed);
        FiniteDiffOptions o;
        o.max_coords_per_tensor = samples;
        o.step = step;
        o.tol = tol;
        o.seed = seed;
        o.corrupt = corrupt;
        const FiniteDiffReport r = finite_diff_check(model, toy.cohort, o);
        return py::dict(py::arg("passed") = r.passed, py::arg("checked") = r.checked,
                        py::arg("max_rel_error") = r.max_rel_error,
                        py::arg("mean_rel_error") = r.mean_rel_error,
                        py::arg("seconds") = r.seconds);
      },
      py::arg("seed") = 0, py::arg("samples") = 40, py::arg("step") = 1e-4,
      py::arg("tol") = 1e-4, py::arg("corrupt") = 1.0);
}
