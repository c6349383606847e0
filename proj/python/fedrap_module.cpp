#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fedrap/analysis.hpp"
#include "fedrap/config.hpp"
#include "fedrap/curriculum.hpp"
#include "fedrap/eval.hpp"
#include "fedrap/model.hpp"
#include "fedrap/privacy.hpp"
#include "fedrap/report.hpp"
#include "fedrap/runtime.hpp"

namespace py = pybind11;
using namespace fedrap;

namespace {

TrainingBatch to_batch(const std::vector<std::pair<int, double>>& entries) {
  TrainingBatch out;
  out.reserve(entries.size());
  for (const auto& [item, label] : entries) out.push_back({item, label});
  return out;
}

py::object report_to_dict(const py::object& loads, const RoundReport& r) {
  return loads(to_json_line(r));
}

ExperimentConfig config_from_kwargs(const py::kwargs& kwargs) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : kwargs) {
    const auto name = py::str(key).cast<std::string>();
    std::string text;
    if (py::isinstance<py::bool_>(value)) {
      text = value.cast<bool>() ? "true" : "false";
    } else {
      text = py::str(value).cast<std::string>();
    }
    cfg.set(name, text);
  }
  return cfg;
}

py::dict split_to_dict(const SplitManifest& split) {
  py::list clients;
  for (const auto& c : split.clients) {
    py::dict d;
    d["client_id"] = c.client_id;
    d["train_positives"] = c.train_positives;
    d["test_positive"] = c.test_positive;
    d["eval_negatives"] = c.eval_negatives;
    clients.append(d);
  }
  py::dict out;
  out["seed"] = split.seed;
  out["n"] = split.meta.n;
  out["m"] = split.meta.m;
  out["user_ids"] = split.meta.user_ids;
  out["item_ids"] = split.meta.item_ids;
  out["clients"] = clients;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "FedRAP federated recommendation core";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  m.def("sigmoid", &sigmoid, py::arg("x"));
  m.def(
      "predict", [](const Vector& u, const Vector& c, const Vector& d) { return predict(u, c, d); },
      py::arg("u"), py::arg("c_row"), py::arg("d_row"));
  m.def("bce_loss", &bce_loss, py::arg("label"), py::arg("probability"));

  m.def(
      "client_objective",
      [](const Vector& u, const Matrix& c, const Matrix& d,
         const std::vector<std::pair<int, double>>& batch, double lambda, double mu,
         const std::string& reg_sign) {
        auto v = client_objective(u, c, d, to_batch(batch), lambda, mu, parse_reg_sign(reg_sign));
        py::dict out;
        out["bce"] = v.bce;
        out["difference"] = v.difference;
        out["l1"] = v.l1;
        out["total"] = v.total();
        return out;
      },
      py::arg("u"), py::arg("C"), py::arg("D"), py::arg("batch"), py::arg("lam"), py::arg("mu"),
      py::arg("reg_sign") = "encourage-difference",
      "Per-client objective; `batch` is a list of (item, label) pairs.");

  m.def(
      "gradients",
      [](const Vector& u, const Matrix& c, const Matrix& d,
         const std::vector<std::pair<int, double>>& batch, double lambda,
         const std::string& reg_sign) {
        auto g = gradients(u, c, d, to_batch(batch), lambda, parse_reg_sign(reg_sign));
        return py::make_tuple(g.u, g.c, g.d);
      },
      py::arg("u"), py::arg("C"), py::arg("D"), py::arg("batch"), py::arg("lam"),
      py::arg("reg_sign") = "encourage-difference");

  m.def(
      "sgd_step_with_prox",
      [](const Vector& u, const Matrix& c, const Matrix& d,
         const std::vector<std::pair<int, double>>& batch, double lambda, double mu, double eta,
         const std::string& reg_sign) {
        auto s = sgd_step_with_prox(u, c, d, to_batch(batch), lambda, mu, eta,
                                    parse_reg_sign(reg_sign));
        return py::make_tuple(s.u, s.c, s.d);
      },
      py::arg("u"), py::arg("C"), py::arg("D"), py::arg("batch"), py::arg("lam"), py::arg("mu"),
      py::arg("eta"), py::arg("reg_sign") = "encourage-difference");

  m.def("soft_threshold", py::overload_cast<const Matrix&, double>(&soft_threshold),
        py::arg("M"), py::arg("theta"));

  m.def(
      "schedule_weight",
      [](const std::string& kind, double cap, int a) {
        return weight({parse_schedule_kind(kind), cap}, a);
      },
      py::arg("kind"), py::arg("cap"), py::arg("a"));

  m.def("clip_gradient", &clip_gradient, py::arg("g"), py::arg("tau"));
  m.def(
      "add_gaussian_noise",
      [](const Matrix& update, double sigma, std::uint64_t seed) {
        Rng rng(seed);
        return add_gaussian_noise(update, sigma, rng);
      },
      py::arg("update"), py::arg("sigma"), py::arg("seed") = 0);
  m.def("sensitivity_bound", &sensitivity_bound, py::arg("eta"), py::arg("tau"), py::arg("n_s"));
  m.def("noise_sigma", &noise_sigma, py::arg("z"), py::arg("eta"), py::arg("tau"),
        py::arg("n_s"));
  m.def("recover_gradient", &recover_gradient, py::arg("C_prev"), py::arg("C_next"),
        py::arg("eta"));

  m.def(
      "aggregate", [](const std::vector<Matrix>& received) { return aggregate(received); },
      py::arg("received"));

  m.def(
      "rank_position",
      [](const std::vector<double>& scores, std::size_t positive) {
        return rank_position({scores, positive});
      },
      py::arg("scores"), py::arg("positive_position") = 0);
  m.def("hr_at_k", &hr_at_k, py::arg("rank"), py::arg("k") = 10);
  m.def("ndcg_at_k", &ndcg_at_k, py::arg("rank"), py::arg("k") = 10);
  m.def(
      "evaluate",
      [](const std::vector<std::vector<double>>& cases, int k) {
        std::vector<RankingCase> rc;
        rc.reserve(cases.size());
        for (const auto& s : cases) rc.push_back({s, 0});
        auto s = evaluate_population(rc, k);
        return py::make_tuple(s.hr, s.ndcg);
      },
      py::arg("cases"), py::arg("k") = 10,
      "HR@k and NDCG@k; each case lists the positive's score first.");

  m.def(
      "sparsity_stats",
      [](const Matrix& c) {
        auto s = sparsity_stats(c);
        py::dict out;
        out["frac_abs_gt_1e1"] = s.frac_abs_gt_1e1;
        out["frac_abs_gt_1e2"] = s.frac_abs_gt_1e2;
        out["exact_zero_frac"] = s.exact_zero_frac;
        out["nonzero_count"] = s.nonzero_count;
        return out;
      },
      py::arg("C"));

  m.def(
      "ingest",
      [](const std::filesystem::path& path, int min_interactions, int eval_negatives,
         std::uint64_t seed) {
        return split_to_dict(
            ingest_dataset(path, std::nullopt, min_interactions, eval_negatives, seed));
      },
      py::arg("path"), py::arg("min_interactions") = 10,
      py::arg("eval_negatives") = kDefaultEvalNegatives, py::arg("seed") = 0);

  m.def(
      "train",
      [](const py::kwargs& kwargs) {
        auto cfg = config_from_kwargs(kwargs);
        cfg.validate();
        auto split = load_split(cfg);
        TrainingResult result;
        {
          py::gil_scoped_release release;
          result = run_training(cfg.variant_spec(), std::move(split.clients), cfg.hp,
                                cfg.runtime_options(), cfg.seed);
        }
        auto loads = py::module_::import("json").attr("loads");
        py::list reports;
        for (const auto& r : result.reports) reports.append(report_to_dict(loads, r));
        Matrix users(static_cast<Eigen::Index>(result.clients.size()), cfg.hp.k);
        for (const auto& c : result.clients) users.row(c.client_id) = c.u;
        py::dict out;
        out["reports"] = reports;
        out["C"] = result.server.c;
        out["U"] = users;
        out["config_hash"] = cfg.hash();
        return out;
      },
      "Runs training. Keyword arguments are configuration keys, e.g. dataset=..., "
      "variant='fedrap', rounds=100.");
}
