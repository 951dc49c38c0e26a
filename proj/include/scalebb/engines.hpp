#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scalebb/data.hpp"
#include "scalebb/functionals.hpp"
#include "scalebb/summaries.hpp"

namespace scalebb {

enum class Method { BB, BLBB, SDBB, LOSSLESS, BLDP, SDDP };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

/// Stream tags for per-task stream-id derivation; parallel workers get
/// collision-free independent streams without coordination.
enum StreamTag : std::uint64_t {
  kTagWeights = 1,   // Dirichlet draw for (subset j | draw k)
  kTagSubset = 2,    // without-replacement subset draw (SDBB family)
  kTagDp = 3,        // Beta weight, sticks and atoms of the DP overlay
  kTagLossless = 4,  // per-(pass, row) Gamma stream
  kTagPartition = 5,
  kTagDgp = 6,
  kTagReplicate = 7,
};

struct EngineConfig {
  Method method = Method::BB;
  /// Subset size b = floor(n^gamma), or explicit b when set.
  double gamma = 0.7;
  std::optional<std::int64_t> b;
  /// Draws per subset (BLBB/BLDP) or total draws (BB, SDBB, LOSSLESS, SDDP).
  std::int64_t r = 100;
  /// Subsets to process (BLBB/BLDP); default all floor(n/b).
  std::optional<std::int64_t> s;
  std::optional<double> time_budget_s;
  double dp_alpha = 0.0;
  std::string dp_base = "std_normal";
  std::uint64_t seed = 0;
  int workers = 1;  // 0 = all hardware threads
  /// Lossless engine: draws maintained simultaneously per dataset pass.
  std::int64_t lossless_batch = 100;
  /// BLBB family: retain per-subset draw matrices and row ids. Off keeps the
  /// engine's footprint at O(b) regardless of how many subsets run.
  bool keep_draws = true;

  void validate() const;
};

/// floor(n^gamma), or the explicit override clamped to [1, n].
std::int64_t resolve_subset_size(const EngineConfig& cfg, std::int64_t n);

struct Checkpoint {
  double elapsed_s = 0.0;
  std::int64_t units_done = 0;
  std::optional<SummaryRecord> running;  // absent until 2 draws exist
};

/// Per-checkpoint progress trace (one record per subset for the BLBB family,
/// one per draw otherwise), enabling error-vs-time curves.
struct RunTrace {
  std::vector<Checkpoint> checkpoints;
  bool budget_expired = false;
};

struct SubsetRun {
  SubsetIndex subset;  // row_ids retained only when keep_draws
  std::optional<DrawMatrix> draws;
  SummaryRecord summary;
};

struct BlbbResult {
  std::vector<SubsetRun> subset_runs;
  SummaryRecord combined;
  std::int64_t subsets_failed = 0;
  std::vector<std::string> failure_log;
};

struct SdbbResult {
  DrawMatrix draws;
  SummaryRecord summary;
  std::int64_t retries = 0;
  std::vector<std::string> failure_log;
};

/// Reference Bayesian bootstrap on the full dataset: R flat-Dirichlet weight
/// vectors over all n units, centered at the full-data empirical value.
/// Desk-scale reference, not memory-bounded. Aborts when more than 20% of
/// draws fail.
DrawMatrix run_bb(const ChunkedDataset& ds, const FunctionalSpec& spec,
                  const EngineConfig& cfg, RunTrace* trace = nullptr);

/// Bag of little Bayesian bootstraps: divide, rescale, combine. One random
/// partition; each processed subset contributes r draws under rescaled
/// Dirichlet(n/b,...,n/b) weights, centered at its own empirical value; the
/// per-subset summaries are averaged with equal weight.
BlbbResult run_blbb(const ChunkedDataset& ds, const FunctionalSpec& spec,
                    const EngineConfig& cfg, RunTrace* trace = nullptr);

/// Subsampled double Bayesian bootstrap: R independent size-b subsets, one
/// rescaled Dirichlet draw each, pooled into a single summary. Failed
/// subsets are redrawn up to 10 times before the draw is skipped.
SdbbResult run_sdbb(const ChunkedDataset& ds, const FunctionalSpec& spec,
                    const EngineConfig& cfg, RunTrace* trace = nullptr);

/// Diagnostic only: one summary over the pooled per-subset draws instead of
/// the averaged per-subset summaries. The combination rule of record is
/// combine_average; pooling mixes differently-centered subset posteriors.
/// Requires a run made with keep_draws.
SummaryRecord pooled_blbb_summary(const BlbbResult& result);

/// Exact Bayesian-bootstrap draws for functionals with a registered (rho, g)
/// decomposition, streaming unnormalized Gamma(1,1)-weighted sufficient
/// statistics across sequential data chunks. Every row is touched exactly
/// once per batch pass; memory is O(b*(p+1) + batch*(p+1)^2).
DrawMatrix run_lossless(const ChunkedDataset& ds, const FunctionalSpec& spec,
                        const EngineConfig& cfg);

/// Dirichlet-process variants (method BLDP or SDDP): each draw mixes the
/// subset's rescaled bootstrap with a truncated stick-breaking draw from the
/// prior, weighted by R_n ~ Beta(alpha, n). alpha = 0 degrades exactly to
/// the BLBB/SDBB draw under the same seeds.
struct DpResult {
  std::optional<BlbbResult> blbb;  // BLDP
  std::optional<SdbbResult> sdbb;  // SDDP
};
DpResult run_dp(const ChunkedDataset& ds, const FunctionalSpec& spec,
                const EngineConfig& cfg, RunTrace* trace = nullptr);

/// Uniform result shape for the CLI and the simulation lab.
struct EngineResult {
  Method method = Method::BB;
  std::optional<DrawMatrix> pooled_draws;   // BB, SDBB, LOSSLESS, SDDP
  std::vector<SubsetRun> subset_runs;       // BLBB, BLDP
  SummaryRecord summary;
  std::int64_t failures = 0;
  std::vector<std::string> failure_log;
};

EngineResult run_engine(const ChunkedDataset& ds, const FunctionalSpec& spec,
                        const EngineConfig& cfg, RunTrace* trace = nullptr);

/// Runs the configured engine under cfg.time_budget_s, checkpointing after
/// each subset (BLBB family) or each draw (the rest); returns everything
/// completed at expiry plus the per-checkpoint trace. Throws BudgetError if
/// nothing completed.
struct TimedResult {
  EngineResult result;
  RunTrace trace;
};
TimedResult time_budgeted_run(const ChunkedDataset& ds, const FunctionalSpec& spec,
                              const EngineConfig& cfg);

/// Stick-breaking truncation level: smallest K with expected residual stick
/// mass (alpha/(alpha+1))^K below eps; 0 when alpha == 0.
std::int64_t dp_truncation_level(double alpha, double eps = 1e-6);

}  // namespace scalebb
