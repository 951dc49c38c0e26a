#pragma once

#include <string>
#include <vector>

#include "scalebb/baselines.hpp"
#include "scalebb/engines.hpp"

namespace scalebb {

/// Synthetic data-generating processes for the simulation studies.
/// Predictors are an intercept plus iid Student-t(3) columns; see generate().
struct DgpSpec {
  FunctionalKind model = FunctionalKind::Linear;
  std::int64_t n = 10000;  // rows; the mixed model rounds down to whole clusters of 3
  int p = 100;             // predictors beyond the intercept
  std::vector<double> beta0;  // defaults to all ones, length p+1
  std::uint64_t seed = 0;

  void validate() const;
  FunctionalSpec functional() const;
  Schema schema() const;
};

/// Draws one dataset:
///  - linear:   y = u'beta0 + e, e skew-normal(-0.71, 1, 2) (mean 0, asymmetric)
///  - logistic: y ~ Bernoulli(p), p = 1/(1 + exp(-0.01 u'beta0 + 0.25))
///  - mixed:    y_ij = a_j + u_ij'beta0 + e_ij, clusters of 3,
///              a_j skew-normal(-0.71, 1, 2), e_ij Student-t(3)
ChunkedDataset generate(const DgpSpec& dgp);

/// Same process streamed straight to CSV for file-backed (out-of-core) runs.
void generate_csv(const DgpSpec& dgp, const std::string& path);

/// One configured comparator in an experiment.
struct PlannedMethod {
  std::string label;  // defaults to the method name
  EngineConfig config;
  bool is_baseline_an = false;
  bool is_baseline_ans = false;
};

struct ExperimentPlan {
  DgpSpec dgp;
  std::vector<PlannedMethod> methods;
  std::int64_t replicates = 20;
  std::int64_t reference_draws = 1000;  // reference BB sample count
  int workers = 1;
  std::string output_directory;  // empty: no files written
  bool write_traces = false;     // trace_<label>.jsonl from replicate 0

  void validate() const;
};

struct TableCell {
  std::string model;
  std::string summary;  // cil | sd | mean | mean_l1
  std::string gamma;    // printed value, empty for AN
  std::string method;
  double error = 0.0;
  std::int64_t replicates = 0;  // achieved count
};

/// Aggregate draw bookkeeping per configured method (all replicates).
struct MethodDrawStats {
  std::string method;
  std::string gamma;
  std::int64_t total_draws = 0;
  std::int64_t excluded_draws = 0;
};

struct ExperimentResult {
  std::vector<TableCell> cells;
  std::vector<MethodDrawStats> method_stats;
  std::vector<std::string> log;
};

/// Per replicate: generate data, run the reference BB, run every configured
/// method, score CIL/SD relative errors and mean absolute errors against the
/// reference, then average across replicates. Writes table1.csv (and traces)
/// when an output directory is set.
ExperimentResult run_experiment(const ExperimentPlan& plan);

/// table1.csv serialization (model, summary, gamma, method, error, replicates).
std::string experiment_table_csv(const ExperimentResult& result);

}  // namespace scalebb
