#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "scalebb/baselines.hpp"
#include "scalebb/engines.hpp"
#include "scalebb/io.hpp"
#include "scalebb/simlab.hpp"

namespace py = pybind11;
using namespace scalebb;

namespace {

Schema schema_from_list(const std::vector<std::pair<std::string, std::string>>& columns) {
  Schema schema;
  for (const auto& [name, kind] : columns) {
    ColumnKind k;
    if (kind == "numeric") {
      k = ColumnKind::Numeric;
    } else if (kind == "categorical") {
      k = ColumnKind::Categorical;
    } else if (kind == "group-id" || kind == "group_id") {
      k = ColumnKind::GroupId;
    } else {
      throw ConfigError("unknown column kind: " + kind, "schema");
    }
    schema.push_back({name, k});
  }
  return schema;
}

FunctionalSpec make_spec(const std::string& kind, const std::string& outcome,
                         const std::vector<std::string>& predictors, bool intercept,
                         const std::string& group, int max_iterations, double gradient_tolerance,
                         const std::string& mixed_weight_matrix) {
  FunctionalSpec spec;
  spec.kind = functional_kind_from_name(kind);
  spec.outcome = outcome;
  spec.predictors = predictors;
  spec.intercept = intercept;
  spec.group = group;
  spec.max_iterations = max_iterations;
  spec.gradient_tolerance = gradient_tolerance;
  spec.mixed_weight_matrix = mixed_weight_matrix == "literal" ? MixedWeightMatrix::Literal
                                                              : MixedWeightMatrix::Inverse;
  spec.validate();
  return spec;
}

EngineConfig make_config(const std::string& method, double gamma, std::optional<std::int64_t> b,
                         std::int64_t r, std::optional<std::int64_t> s, std::uint64_t seed,
                         double dp_alpha, const std::string& dp_base, int workers,
                         std::int64_t lossless_batch, bool keep_draws,
                         std::optional<double> time_budget) {
  EngineConfig cfg;
  cfg.method = method_from_name(method);
  cfg.gamma = gamma;
  cfg.b = b;
  cfg.r = r;
  cfg.s = s;
  cfg.seed = seed;
  cfg.dp_alpha = dp_alpha;
  cfg.dp_base = dp_base;
  cfg.workers = workers;
  cfg.lossless_batch = lossless_batch;
  cfg.keep_draws = keep_draws;
  cfg.time_budget_s = time_budget;
  cfg.validate();
  return cfg;
}

py::dict result_to_dict(EngineResult&& result) {
  py::dict out;
  out["method"] = method_name(result.method);
  out["summary"] = result.summary;
  out["failures"] = result.failures;
  if (result.pooled_draws) out["draws"] = std::move(*result.pooled_draws);
  py::list subset_summaries;
  for (auto& run : result.subset_runs) subset_summaries.append(run.summary);
  out["subset_summaries"] = std::move(subset_summaries);
  return out;
}

}  // namespace

PYBIND11_MODULE(_scalebb, m) {
  m.doc() = "Memory-bounded Bayesian-bootstrap posterior summaries";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "ScalebbError");

  py::class_<SeedSpec>(m, "SeedSpec")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("master_seed") = 0,
           py::arg("stream_id") = 0)
      .def_readwrite("master_seed", &SeedSpec::master_seed)
      .def_readwrite("stream_id", &SeedSpec::stream_id);

  m.def("derive_stream", &derive_stream, py::arg("tag"), py::arg("a") = 0, py::arg("b") = 0,
        py::arg("c") = 0);
  m.def("sample_gamma", py::overload_cast<double, SeedSpec>(&sample_gamma), py::arg("shape"),
        py::arg("stream"));
  m.def("sample_beta", py::overload_cast<double, double, SeedSpec>(&sample_beta), py::arg("a"),
        py::arg("b"), py::arg("stream"));
  m.def(
      "sample_skew_normal",
      [](double location, double scale, double slant, SeedSpec stream, std::size_t size) {
        Rng rng(stream);
        std::vector<double> out(size);
        for (auto& x : out) x = sample_skew_normal(location, scale, slant, rng);
        return out;
      },
      py::arg("location"), py::arg("scale"), py::arg("slant"), py::arg("stream"),
      py::arg("size") = 1);
  m.def(
      "sample_student_t",
      [](double df, SeedSpec stream, std::size_t size) {
        Rng rng(stream);
        std::vector<double> out(size);
        for (auto& x : out) x = sample_student_t(df, rng);
        return out;
      },
      py::arg("df"), py::arg("stream"), py::arg("size") = 1);
  m.def("dirichlet_flat", py::overload_cast<std::size_t, SeedSpec>(&dirichlet_flat), py::arg("m"),
        py::arg("stream"));
  m.def("dirichlet_rescaled", py::overload_cast<std::size_t, double, SeedSpec>(&dirichlet_rescaled),
        py::arg("m"), py::arg("c"), py::arg("stream"));

  py::class_<ChunkedDataset>(m, "Dataset")
      .def_static(
          "from_csv",
          [](const std::string& path, const std::vector<std::pair<std::string, std::string>>& cols,
             std::int64_t block_size) {
            return ChunkedDataset::from_csv(path, schema_from_list(cols), block_size);
          },
          py::arg("path"), py::arg("schema"),
          py::arg("block_size") = ChunkedDataset::kDefaultBlockSize)
      .def_static(
          "from_matrix",
          [](const std::vector<std::pair<std::string, std::string>>& cols,
             const Eigen::MatrixXd& values, std::int64_t block_size) {
            return ChunkedDataset::from_matrix(schema_from_list(cols), values, block_size);
          },
          py::arg("schema"), py::arg("values"),
          py::arg("block_size") = ChunkedDataset::kDefaultBlockSize)
      .def_property_readonly("n_rows", &ChunkedDataset::n_rows)
      .def_property_readonly("n_blocks", &ChunkedDataset::n_blocks)
      .def("write_csv", &ChunkedDataset::write_csv, py::arg("path"));

  py::class_<FunctionalSpec>(m, "FunctionalSpec")
      .def(py::init(&make_spec), py::arg("kind"), py::arg("outcome"),
           py::arg("predictors") = std::vector<std::string>{}, py::arg("intercept") = true,
           py::arg("group") = std::string{}, py::arg("max_iterations") = 100,
           py::arg("gradient_tolerance") = 1e-8, py::arg("mixed_weight_matrix") = "inverse");

  py::class_<EngineConfig>(m, "EngineConfig")
      .def(py::init(&make_config), py::arg("method"), py::arg("gamma") = 0.7,
           py::arg("b") = std::nullopt, py::arg("r") = 100, py::arg("s") = std::nullopt,
           py::arg("seed") = 0, py::arg("dp_alpha") = 0.0, py::arg("dp_base") = "std_normal",
           py::arg("workers") = 1, py::arg("lossless_batch") = 100, py::arg("keep_draws") = true,
           py::arg("time_budget") = std::nullopt);

  py::class_<DrawMatrix>(m, "DrawMatrix")
      .def_readonly("draws", &DrawMatrix::draws)
      .def_readonly("centered", &DrawMatrix::centered)
      .def_readonly("center", &DrawMatrix::center)
      .def_readonly("n_excluded", &DrawMatrix::n_excluded);

  py::class_<SummaryRecord>(m, "SummaryRecord")
      .def_readonly("q025", &SummaryRecord::q025)
      .def_readonly("q975", &SummaryRecord::q975)
      .def_readonly("sd", &SummaryRecord::sd)
      .def_readonly("mean", &SummaryRecord::mean)
      .def_readonly("center", &SummaryRecord::center)
      .def_readonly("n_draws", &SummaryRecord::n_draws)
      .def_readonly("n_excluded", &SummaryRecord::n_excluded)
      .def_property_readonly("method",
                             [](const SummaryRecord& r) { return r.provenance.method; })
      .def("uncentered_mean", &SummaryRecord::uncentered_mean)
      .def("to_json", [](const SummaryRecord& r) { return summary_to_json(r).dump(2); });

  m.def(
      "run_engine",
      [](const ChunkedDataset& ds, const FunctionalSpec& spec, const EngineConfig& cfg) {
        EngineResult result = [&] {
          py::gil_scoped_release release;
          return run_engine(ds, spec, cfg);
        }();
        return result_to_dict(std::move(result));
      },
      py::arg("dataset"), py::arg("functional"), py::arg("config"));
  m.def(
      "run_bb",
      [](const ChunkedDataset& ds, const FunctionalSpec& spec, const EngineConfig& cfg) {
        return run_bb(ds, spec, cfg);
      },
      py::arg("dataset"), py::arg("functional"), py::arg("config"),
      py::call_guard<py::gil_scoped_release>());
  m.def(
      "run_lossless",
      [](const ChunkedDataset& ds, const FunctionalSpec& spec, const EngineConfig& cfg) {
        return run_lossless(ds, spec, cfg);
      },
      py::arg("dataset"), py::arg("functional"), py::arg("config"),
      py::call_guard<py::gil_scoped_release>());

  m.def("summarize", &summarize, py::arg("draws"));
  m.def("combine_average", &combine_average, py::arg("records"));
  m.def("credible_interval", &credible_interval, py::arg("record"));
  m.def("relative_error_cil", &relative_error_cil, py::arg("approx"), py::arg("reference"));
  m.def("relative_error_sd", &relative_error_sd, py::arg("approx"), py::arg("reference"));
  m.def(
      "absolute_error_mean",
      [](const SummaryRecord& a, const SummaryRecord& ref) {
        const ErrorPair e = absolute_error_mean(a, ref);
        return py::make_tuple(e.per_coordinate, e.raw);
      },
      py::arg("approx"), py::arg("reference"));

  m.def("an_summary", &an_summary, py::arg("dataset"), py::arg("functional"));
  m.def(
      "ans_summary",
      [](const ChunkedDataset& ds, const FunctionalSpec& spec, std::int64_t b,
         std::uint64_t seed) {
        const std::int64_t n = unit_count(ds, spec);
        const auto partition = make_partition(n, b, SeedSpec{seed, derive_stream(kTagPartition)});
        return ans_summary(ds, spec, partition, nullptr);
      },
      py::arg("dataset"), py::arg("functional"), py::arg("b"), py::arg("seed") = 0);

  py::class_<DgpSpec>(m, "DgpSpec")
      .def(py::init([](const std::string& model, std::int64_t n, int p,
                       const std::vector<double>& beta0, std::uint64_t seed) {
             DgpSpec dgp;
             dgp.model = functional_kind_from_name(model);
             dgp.n = n;
             dgp.p = p;
             dgp.beta0 = beta0;
             dgp.seed = seed;
             dgp.validate();
             return dgp;
           }),
           py::arg("model"), py::arg("n"), py::arg("p"),
           py::arg("beta0") = std::vector<double>{}, py::arg("seed") = 0)
      .def("functional", &DgpSpec::functional);

  m.def("generate", &generate, py::arg("dgp"), py::call_guard<py::gil_scoped_release>());
  m.def("generate_csv", &generate_csv, py::arg("dgp"), py::arg("path"),
        py::call_guard<py::gil_scoped_release>());
}
