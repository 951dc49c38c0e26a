#include "scalebb/simlab.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "scalebb/parallel.hpp"

namespace scalebb {

namespace {

constexpr double kSkewLocation = -0.71;
constexpr double kSkewScale = 1.0;
constexpr double kSkewSlant = 2.0;
constexpr double kStudentDf = 3.0;

}  // namespace

void DgpSpec::validate() const {
  if (p < 1) throw InvalidParameterError("dgp: p must be >= 1");
  if (n < p + 2) throw InvalidParameterError("dgp: n must be >= p + 2");
  if (!beta0.empty() && beta0.size() != static_cast<std::size_t>(p) + 1) {
    throw InvalidParameterError("dgp: beta0 must have p + 1 entries");
  }
}

FunctionalSpec DgpSpec::functional() const {
  FunctionalSpec spec;
  spec.kind = model;
  spec.outcome = "y";
  spec.intercept = true;
  for (int j = 1; j <= p; ++j) spec.predictors.push_back("x" + std::to_string(j));
  if (model == FunctionalKind::Mixed) spec.group = "cluster";
  return spec;
}

Schema DgpSpec::schema() const {
  Schema schema;
  schema.push_back({"y", ColumnKind::Numeric});
  for (int j = 1; j <= p; ++j) schema.push_back({"x" + std::to_string(j), ColumnKind::Numeric});
  if (model == FunctionalKind::Mixed) schema.push_back({"cluster", ColumnKind::GroupId});
  return schema;
}

namespace {

// Row-streaming generator shared by the in-memory and CSV paths; emits
// (y, x1..xp [, cluster]) per row in a fixed draw order.
template <typename Emit>
void generate_rows(const DgpSpec& dgp, Emit&& emit) {
  dgp.validate();
  std::vector<double> beta = dgp.beta0;
  if (beta.empty()) beta.assign(static_cast<std::size_t>(dgp.p) + 1, 1.0);

  Rng rng(SeedSpec{dgp.seed, derive_stream(kTagDgp)});
  std::vector<double> row(static_cast<std::size_t>(dgp.p) + 1 +
                          (dgp.model == FunctionalKind::Mixed ? 1 : 0));

  auto fill_predictors_eta = [&]() {
    double eta = beta[0];  // intercept
    for (int j = 1; j <= dgp.p; ++j) {
      const double x = sample_student_t(kStudentDf, rng);
      row[static_cast<std::size_t>(j)] = x;
      eta += beta[static_cast<std::size_t>(j)] * x;
    }
    return eta;
  };

  switch (dgp.model) {
    case FunctionalKind::Linear:
      for (std::int64_t i = 0; i < dgp.n; ++i) {
        const double eta = fill_predictors_eta();
        row[0] = eta + sample_skew_normal(kSkewLocation, kSkewScale, kSkewSlant, rng);
        emit(row);
      }
      break;
    case FunctionalKind::Logistic:
      for (std::int64_t i = 0; i < dgp.n; ++i) {
        const double eta = fill_predictors_eta();
        const double prob = 1.0 / (1.0 + std::exp(-0.01 * eta + 0.25));
        row[0] = rng.next_double() < prob ? 1.0 : 0.0;
        emit(row);
      }
      break;
    case FunctionalKind::Mixed: {
      const std::int64_t clusters = dgp.n / 3;
      if (clusters < 2) throw InvalidParameterError("dgp: mixed model needs n >= 6");
      for (std::int64_t c = 0; c < clusters; ++c) {
        const double alpha = sample_skew_normal(kSkewLocation, kSkewScale, kSkewSlant, rng);
        for (int within = 0; within < 3; ++within) {
          const double eta = fill_predictors_eta();
          row[0] = alpha + eta + sample_student_t(kStudentDf, rng);
          row.back() = static_cast<double>(c);
          emit(row);
        }
      }
      break;
    }
  }
}

}  // namespace

ChunkedDataset generate(const DgpSpec& dgp) {
  dgp.validate();
  const std::int64_t rows = dgp.model == FunctionalKind::Mixed ? (dgp.n / 3) * 3 : dgp.n;
  const Schema schema = dgp.schema();
  Eigen::MatrixXd values(rows, static_cast<Eigen::Index>(schema.size()));
  Eigen::Index at = 0;
  generate_rows(dgp, [&](const std::vector<double>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      values(at, static_cast<Eigen::Index>(c)) = row[c];
    }
    ++at;
  });
  return ChunkedDataset::from_matrix(schema, std::move(values));
}

void generate_csv(const DgpSpec& dgp, const std::string& path) {
  dgp.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open for writing: " + path);
  const Schema schema = dgp.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out << ',';
    out << schema[c].name;
  }
  out << '\n';
  char buf[64];
  generate_rows(dgp, [&](const std::vector<double>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      if (schema[c].kind == ColumnKind::GroupId) {
        std::snprintf(buf, sizeof buf, "%" PRId64, static_cast<std::int64_t>(row[c]));
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", row[c]);
      }
      out << buf;
    }
    out << '\n';
  });
}

// --- Experiment harness ---------------------------------------------------------

void ExperimentPlan::validate() const {
  dgp.validate();
  if (replicates < 1) throw InvalidParameterError("plan: replicates must be >= 1");
  if (reference_draws < 2) throw InvalidParameterError("plan: reference draws must be >= 2");
  if (methods.empty()) throw InvalidParameterError("plan: at least one method required");
  for (const auto& m : methods) {
    if (m.is_baseline_an && m.is_baseline_ans) {
      throw InvalidParameterError("plan: a method cannot be both AN and ANS");
    }
    if (!m.is_baseline_an) m.config.validate();
  }
}

namespace {

struct MethodErrors {
  double cil = 0.0;
  double sd = 0.0;
  double mean = 0.0;     // per coordinate
  double mean_l1 = 0.0;  // raw L1
  std::int64_t draws = 0;
  std::int64_t excluded = 0;
  bool ok = false;
};

std::string gamma_label(const PlannedMethod& m) {
  if (m.is_baseline_an) return "";
  if (m.config.b) return "b=" + std::to_string(*m.config.b);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", m.config.gamma);
  return buf;
}

std::string method_label(const PlannedMethod& m) {
  if (!m.label.empty()) return m.label;
  if (m.is_baseline_an) return "AN";
  if (m.is_baseline_ans) return "ANS";
  return method_name(m.config.method);
}

void write_trace_jsonl(const std::string& path, const RunTrace& trace,
                       const SummaryRecord& reference) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open for writing: " + path);
  std::int64_t i = 0;
  for (const auto& cp : trace.checkpoints) {
    nlohmann::json j;
    j["checkpoint"] = i++;
    j["elapsed_s"] = cp.elapsed_s;
    j["units_done"] = cp.units_done;
    if (cp.running) {
      try {
        j["cil_error"] = relative_error_cil(*cp.running, reference);
        j["sd_error"] = relative_error_sd(*cp.running, reference);
        j["mean_error"] = absolute_error_mean(*cp.running, reference).per_coordinate;
      } catch (const Error&) {
        // degenerate reference coordinate; leave errors out of this record
      }
    }
    out << j.dump() << '\n';
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  const std::size_t n_methods = plan.methods.size();

  struct ReplicateOutcome {
    std::vector<MethodErrors> per_method;
    std::vector<std::string> log;
  };
  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(plan.replicates));

  const bool traces_wanted = plan.write_traces && !plan.output_directory.empty();
  const int inner_workers = plan.replicates == 1 ? plan.workers : 1;

  auto run_replicate = [&](int, std::int64_t rep) {
    ReplicateOutcome& out = outcomes[static_cast<std::size_t>(rep)];
    out.per_method.resize(n_methods);
    DgpSpec dgp = plan.dgp;
    dgp.seed = derive_stream(kTagDgp, plan.dgp.seed, static_cast<std::uint64_t>(rep));
    // One master seed per replicate, shared by the reference and every
    // method: a configured plain BB reproduces the reference exactly, and
    // comparisons ride on common random numbers.
    const std::uint64_t master = derive_stream(kTagReplicate, plan.dgp.seed,
                                               static_cast<std::uint64_t>(rep));
    ChunkedDataset ds = generate(dgp);
    const FunctionalSpec spec = dgp.functional();

    EngineConfig ref_cfg;
    ref_cfg.method = Method::BB;
    ref_cfg.r = plan.reference_draws;
    ref_cfg.seed = master;
    ref_cfg.workers = inner_workers;
    SummaryRecord reference;
    try {
      reference = summarize(run_bb(ds, spec, ref_cfg));
    } catch (const Error& e) {
      out.log.push_back("replicate " + std::to_string(rep) + ": reference BB failed: " + e.what());
      return;
    }

    for (std::size_t m = 0; m < n_methods; ++m) {
      const PlannedMethod& planned = plan.methods[m];
      try {
        SummaryRecord summary;
        RunTrace trace;
        const bool want_trace =
            traces_wanted && rep == 0 && planned.config.time_budget_s.has_value();
        if (planned.is_baseline_an) {
          summary = an_summary(ds, spec);
        } else if (planned.is_baseline_ans) {
          EngineConfig cfg = planned.config;
          cfg.seed = master;
          const std::int64_t n = unit_count(ds, spec);
          const std::int64_t b = resolve_subset_size(cfg, n);
          // Uses the same partition stream as the BLBB, so the two
          // comparators see identical subsets.
          const auto partition =
              make_partition(n, b, SeedSpec{master, derive_stream(kTagPartition)});
          summary = ans_summary(ds, spec, partition, &out.log);
        } else {
          EngineConfig cfg = planned.config;
          cfg.seed = master;
          cfg.workers = inner_workers;
          summary = run_engine(ds, spec, cfg, want_trace ? &trace : nullptr).summary;
        }
        MethodErrors& err = out.per_method[m];
        err.draws = summary.n_draws + summary.n_excluded;
        err.excluded = summary.n_excluded;
        err.cil = relative_error_cil(summary, reference);
        err.sd = relative_error_sd(summary, reference);
        const ErrorPair mean_err = absolute_error_mean(summary, reference);
        err.mean = mean_err.per_coordinate;
        err.mean_l1 = mean_err.raw;
        err.ok = true;
        if (want_trace) {
          const auto path = std::filesystem::path(plan.output_directory) /
                            ("trace_" + method_label(planned) + ".jsonl");
          write_trace_jsonl(path.string(), trace, reference);
        }
      } catch (const Error& e) {
        out.log.push_back("replicate " + std::to_string(rep) + ", " + method_label(planned) +
                          ": " + e.what());
      }
    }
  };

  if (!plan.output_directory.empty()) {
    std::filesystem::create_directories(plan.output_directory);
  }
  parallel_for(plan.replicates, plan.workers, run_replicate);

  ExperimentResult result;
  for (auto& out : outcomes) {
    for (auto& line : out.log) result.log.push_back(std::move(line));
  }
  for (std::size_t m = 0; m < n_methods; ++m) {
    MethodDrawStats stats;
    stats.method = method_label(plan.methods[m]);
    stats.gamma = gamma_label(plan.methods[m]);
    for (const auto& out : outcomes) {
      if (out.per_method.size() != n_methods) continue;
      stats.total_draws += out.per_method[m].draws;
      stats.excluded_draws += out.per_method[m].excluded;
    }
    result.method_stats.push_back(std::move(stats));
  }
  const char* summaries[] = {"cil", "sd", "mean", "mean_l1"};
  for (const char* summary : summaries) {
    for (std::size_t m = 0; m < n_methods; ++m) {
      TableCell cell;
      cell.model = functional_kind_name(plan.dgp.model);
      cell.summary = summary;
      cell.gamma = gamma_label(plan.methods[m]);
      cell.method = method_label(plan.methods[m]);
      double total = 0.0;
      for (const auto& out : outcomes) {
        if (out.per_method.size() == n_methods && out.per_method[m].ok) {
          const MethodErrors& err = out.per_method[m];
          total += (cell.summary == "cil")    ? err.cil
                   : (cell.summary == "sd")   ? err.sd
                   : (cell.summary == "mean") ? err.mean
                                              : err.mean_l1;
          ++cell.replicates;
        }
      }
      cell.error = cell.replicates > 0 ? total / static_cast<double>(cell.replicates) : 0.0;
      result.cells.push_back(std::move(cell));
    }
  }

  if (!plan.output_directory.empty()) {
    const auto path = std::filesystem::path(plan.output_directory) / "table1.csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot open for writing: " + path.string());
    out << experiment_table_csv(result);
  }
  return result;
}

std::string experiment_table_csv(const ExperimentResult& result) {
  std::string csv = "model,summary,gamma,method,error,replicates\n";
  char buf[64];
  for (const auto& cell : result.cells) {
    std::snprintf(buf, sizeof buf, "%.6g", cell.error);
    csv += cell.model + "," + cell.summary + "," + cell.gamma + "," + cell.method + "," + buf +
           "," + std::to_string(cell.replicates) + "\n";
  }
  return csv;
}

}  // namespace scalebb
