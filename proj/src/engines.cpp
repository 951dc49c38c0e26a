#include "scalebb/engines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "scalebb/parallel.hpp"

namespace scalebb {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

SubsetIndex full_index(std::int64_t n) {
  SubsetIndex idx;
  idx.subset_id = 0;
  idx.b = n;
  idx.n = n;
  idx.row_ids.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx.row_ids[static_cast<std::size_t>(i)] = i;
  return idx;
}

std::vector<double> uniform_weights(std::int64_t n) {
  return std::vector<double>(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
}

// --- Dirichlet-process overlay -------------------------------------------------

struct DpOverlay {
  double alpha = 0.0;
  std::int64_t truncation = 0;
  std::int64_t n = 0;  // Beta(alpha, n) weight on the prior
  bool logistic_outcome = false;
};

// Validates that the spec's design can host synthetic atoms from the
// standard-normal base measure: numeric predictors only, no clusters.
DpOverlay setup_dp_overlay(const ChunkedDataset& ds, const FunctionalSpec& spec,
                           const EngineConfig& cfg, std::int64_t n) {
  if (cfg.dp_base != "std_normal") {
    throw ConfigError("unknown base measure sampler: " + cfg.dp_base, "engine.dp_base");
  }
  DpOverlay overlay;
  overlay.alpha = cfg.dp_alpha;
  overlay.n = n;
  if (cfg.dp_alpha == 0.0) return overlay;  // exact BB limit, no atoms
  if (spec.kind == FunctionalKind::Mixed) {
    throw ConfigError("base measure incompatible with clustered designs", "engine.dp_base");
  }
  for (const auto& name : spec.predictors) {
    const int c = ds.column_index(name);
    if (c < 0 || ds.schema()[static_cast<std::size_t>(c)].kind != ColumnKind::Numeric) {
      throw ConfigError("base measure incompatible with non-numeric predictor '" + name + "'",
                        "engine.dp_base");
    }
  }
  overlay.truncation = dp_truncation_level(cfg.dp_alpha);
  overlay.logistic_outcome = spec.kind == FunctionalKind::Logistic;
  return overlay;
}

// One DP draw: mixes the data's rescaled bootstrap weights with truncated
// stick-breaking mass on fresh atoms, then evaluates the functional on the
// merged weighted sample. The merged weights are renormalized (the residual
// stick mass is below 1e-6); functionals are 0-homogeneous in weights.
FunctionalEvaluator::Eval dp_evaluate(const MaterializedSubset& data, const FunctionalSpec& spec,
                                      const DpOverlay& overlay,
                                      const std::vector<double>& data_weights, Rng& dprng) {
  const double r_n = sample_beta(overlay.alpha, static_cast<double>(overlay.n), dprng);
  const std::int64_t k_atoms = overlay.truncation;
  const Eigen::Index b_rows = data.design.rows();
  const Eigen::Index q = data.design.cols();

  std::vector<double> sticks(static_cast<std::size_t>(k_atoms));
  double remaining = 1.0;
  for (auto& s : sticks) {
    const double v = sample_beta(1.0, overlay.alpha, dprng);
    s = v * remaining;
    remaining *= (1.0 - v);
  }

  MaterializedSubset aug;
  aug.design.resize(b_rows + k_atoms, q);
  aug.outcome.resize(b_rows + k_atoms);
  aug.design.topRows(b_rows) = data.design;
  aug.outcome.head(b_rows) = data.outcome;
  aug.n_units = b_rows + k_atoms;
  aug.cluster_size = 1;
  aug.coefficient_names = data.coefficient_names;
  const Eigen::Index first_pred = spec.intercept ? 1 : 0;
  for (Eigen::Index a = 0; a < k_atoms; ++a) {
    const Eigen::Index row = b_rows + a;
    if (spec.intercept) aug.design(row, 0) = 1.0;
    for (Eigen::Index c = first_pred; c < q; ++c) aug.design(row, c) = dprng.next_normal();
    aug.outcome(row) = overlay.logistic_outcome ? (dprng.next_double() < 0.5 ? 1.0 : 0.0)
                                                : dprng.next_normal();
  }

  std::vector<double> w(static_cast<std::size_t>(b_rows + k_atoms));
  for (Eigen::Index i = 0; i < b_rows; ++i) {
    w[static_cast<std::size_t>(i)] = (1.0 - r_n) * data_weights[static_cast<std::size_t>(i)];
  }
  for (Eigen::Index a = 0; a < k_atoms; ++a) {
    w[static_cast<std::size_t>(b_rows + a)] = r_n * sticks[static_cast<std::size_t>(a)];
  }
  const double total = kahan_sum(w);
  for (auto& wi : w) wi /= total;
  return evaluate_functional(aug, spec, w);
}

// --- Shared draw plumbing -------------------------------------------------------

struct DrawOutcome {
  bool ok = false;
  Eigen::VectorXd value;
  std::string reason;
};

DrawOutcome one_draw(FunctionalEvaluator& evaluator, const MaterializedSubset& data,
                     const FunctionalSpec& spec, const DpOverlay* overlay,
                     const std::vector<double>& weights, std::uint64_t seed,
                     std::uint64_t dp_stream) {
  DrawOutcome out;
  try {
    FunctionalEvaluator::Eval ev;
    if (overlay != nullptr && overlay->alpha > 0.0) {
      Rng dprng(SeedSpec{seed, dp_stream});
      ev = dp_evaluate(data, spec, *overlay, weights, dprng);
    } else {
      ev = evaluator(weights);
    }
    if (!ev.converged) {
      out.reason = "optimizer did not converge";
    } else if (!ev.value.allFinite()) {
      out.reason = "non-finite functional value";
    } else {
      out.ok = true;
      out.value = std::move(ev.value);
    }
  } catch (const Error& e) {
    out.reason = e.what();
  }
  return out;
}

Eigen::MatrixXd compact_rows(const std::vector<std::optional<Eigen::VectorXd>>& rows,
                             Eigen::Index q) {
  std::int64_t kept = 0;
  for (const auto& r : rows) kept += r.has_value() ? 1 : 0;
  Eigen::MatrixXd out(kept, q);
  Eigen::Index at = 0;
  for (const auto& r : rows) {
    if (r) out.row(at++) = r->transpose();
  }
  return out;
}

}  // namespace

// --- Config ----------------------------------------------------------------------

std::string method_name(Method m) {
  switch (m) {
    case Method::BB: return "BB";
    case Method::BLBB: return "BLBB";
    case Method::SDBB: return "SDBB";
    case Method::LOSSLESS: return "LOSSLESS";
    case Method::BLDP: return "BLDP";
    case Method::SDDP: return "SDDP";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "BB") return Method::BB;
  if (name == "BLBB") return Method::BLBB;
  if (name == "SDBB") return Method::SDBB;
  if (name == "LOSSLESS") return Method::LOSSLESS;
  if (name == "BLDP") return Method::BLDP;
  if (name == "SDDP") return Method::SDDP;
  throw ConfigError("unknown method: " + name, "engine.method");
}

void EngineConfig::validate() const {
  if (r < 1) throw ConfigError("draw count must be >= 1", "engine.r");
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw ConfigError("gamma must lie in (0, 1]", "engine.gamma");
  }
  if (b && *b < 1) throw ConfigError("subset size must be >= 1", "engine.b");
  if (s && *s < 1) throw ConfigError("subset count must be >= 1", "engine.s");
  if (!(dp_alpha >= 0.0) || std::isnan(dp_alpha)) {
    throw ConfigError("concentration must be >= 0", "engine.dp_alpha");
  }
  if (lossless_batch < 1) throw ConfigError("batch must be >= 1", "engine.lossless_batch");
  if (time_budget_s && !(*time_budget_s > 0.0)) {
    throw ConfigError("time budget must be positive", "engine.time_budget");
  }
  if (workers < 0) throw ConfigError("workers must be >= 0", "engine.workers");
}

std::int64_t resolve_subset_size(const EngineConfig& cfg, std::int64_t n) {
  if (cfg.b) {
    if (*cfg.b > n) {
      throw InvalidParameterError("subset size b=" + std::to_string(*cfg.b) +
                                  " exceeds n=" + std::to_string(n));
    }
    return *cfg.b;
  }
  const auto b = static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(n), cfg.gamma) + 1e-9));
  return std::max<std::int64_t>(1, std::min(b, n));
}

std::int64_t dp_truncation_level(double alpha, double eps) {
  if (alpha <= 0.0) return 0;
  // Expected residual stick mass after K breaks is (alpha/(alpha+1))^K.
  return static_cast<std::int64_t>(std::ceil(std::log(eps) / std::log1p(-1.0 / (alpha + 1.0))));
}

// --- Reference Bayesian bootstrap ---------------------------------------------

DrawMatrix run_bb(const ChunkedDataset& ds, const FunctionalSpec& spec, const EngineConfig& cfg,
                  RunTrace* trace) {
  cfg.validate();
  const auto start = Clock::now();
  const std::int64_t n = unit_count(ds, spec);
  const MaterializedSubset data = materialize(ds, full_index(n), spec);
  const FunctionalContext ctx(data, spec);
  FunctionalEvaluator center_eval(ctx);
  const auto center = center_eval(uniform_weights(n));
  if (!center.converged) throw EngineError("BB: empirical centering did not converge");

  const std::int64_t r_draws = cfg.r;
  std::vector<std::optional<Eigen::VectorXd>> rows(static_cast<std::size_t>(r_draws));

  const bool sequential = trace != nullptr || cfg.time_budget_s.has_value();
  std::vector<FunctionalEvaluator> evaluators;
  const int workers = sequential ? 1 : resolve_workers(cfg.workers);
  evaluators.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) evaluators.emplace_back(ctx);

  std::int64_t done = 0;
  auto draw_one = [&](int worker, std::int64_t k) {
    Rng wrng(SeedSpec{cfg.seed, derive_stream(kTagWeights, 0, static_cast<std::uint64_t>(k))});
    const auto w = dirichlet_flat(static_cast<std::size_t>(n), wrng);
    DrawOutcome out = one_draw(evaluators[static_cast<std::size_t>(worker)], data, spec, nullptr,
                               w, cfg.seed, 0);
    if (out.ok) rows[static_cast<std::size_t>(k)] = out.value - center.value;
  };

  if (sequential) {
    for (std::int64_t k = 0; k < r_draws; ++k) {
      if (cfg.time_budget_s && elapsed_seconds(start) > *cfg.time_budget_s) {
        if (trace) trace->budget_expired = true;
        if (done == 0) throw BudgetError("BB: time budget expired before the first draw");
        break;
      }
      draw_one(0, k);
      ++done;
      if (trace) {
        Checkpoint cp;
        cp.elapsed_s = elapsed_seconds(start);
        cp.units_done = done;
        auto so_far = compact_rows(rows, data.design.cols());
        if (so_far.rows() >= 2) {
          DrawMatrix partial{so_far, true, center.value,
                             Provenance{"BB", std::nullopt, cfg.seed, n, n},
                             done - so_far.rows()};
          cp.running = summarize(partial);
        }
        trace->checkpoints.push_back(std::move(cp));
      }
    }
  } else {
    parallel_for(r_draws, cfg.workers, draw_one);
    done = r_draws;
  }

  DrawMatrix dm;
  dm.draws = compact_rows(rows, data.design.cols());
  dm.centered = true;
  dm.center = center.value;
  dm.provenance = Provenance{"BB", std::nullopt, cfg.seed, n, n};
  dm.n_excluded = done - dm.draws.rows();
  if (done > 0 && dm.n_excluded * 5 > done) {
    throw EngineError("BB: more than 20% of draws failed (" + std::to_string(dm.n_excluded) +
                      " of " + std::to_string(done) + ")");
  }
  return dm;
}

// --- Bag of little Bayesian bootstraps ------------------------------------------

namespace {

BlbbResult run_blbb_core(const ChunkedDataset& ds, const FunctionalSpec& spec,
                         const EngineConfig& cfg, RunTrace* trace, bool dp) {
  cfg.validate();
  const auto start = Clock::now();
  const std::int64_t n = unit_count(ds, spec);
  const std::int64_t b = resolve_subset_size(cfg, n);
  const double concentration = static_cast<double>(n) / static_cast<double>(b);
  const std::int64_t s_total = partition_count(n, b);
  const std::int64_t s = cfg.s ? std::min(*cfg.s, s_total) : s_total;
  const SeedSpec partition_seed{cfg.seed, derive_stream(kTagPartition)};
  const DpOverlay overlay = dp ? setup_dp_overlay(ds, spec, cfg, n) : DpOverlay{};
  const std::string method = method_name(cfg.method);

  struct Slot {
    bool done = false;
    std::optional<SubsetRun> run;
    std::string failure;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(s));

  auto process_subset = [&](int, std::int64_t j) {
    Slot& slot = slots[static_cast<std::size_t>(j)];
    slot.done = true;
    try {
      SubsetIndex idx = partition_subset(n, b, partition_seed, j);
      const MaterializedSubset data = materialize(ds, idx, spec);
      const FunctionalContext ctx(data, spec);
      FunctionalEvaluator evaluator(ctx);
      const auto center = evaluator(uniform_weights(data.n_units));
      if (!center.converged) {
        slot.failure = "subset " + std::to_string(j) + ": centering did not converge";
        return;
      }
      std::vector<std::optional<Eigen::VectorXd>> rows(static_cast<std::size_t>(cfg.r));
      std::vector<std::string> local_reasons;
      for (std::int64_t k = 0; k < cfg.r; ++k) {
        Rng wrng(SeedSpec{cfg.seed, derive_stream(kTagWeights, static_cast<std::uint64_t>(j),
                                                  static_cast<std::uint64_t>(k))});
        const auto w = dirichlet_rescaled(static_cast<std::size_t>(data.n_units), concentration, wrng);
        DrawOutcome out = one_draw(evaluator, data, spec, dp ? &overlay : nullptr, w, cfg.seed,
                                   derive_stream(kTagDp, static_cast<std::uint64_t>(j),
                                                 static_cast<std::uint64_t>(k)));
        if (out.ok) {
          rows[static_cast<std::size_t>(k)] = out.value - center.value;
        } else {
          local_reasons.push_back("subset " + std::to_string(j) + " draw " + std::to_string(k) +
                                  ": " + out.reason);
        }
      }
      DrawMatrix dm;
      dm.draws = compact_rows(rows, data.design.cols());
      dm.centered = true;
      dm.center = center.value;
      dm.provenance = Provenance{method, j, cfg.seed, b, n};
      dm.n_excluded = cfg.r - dm.draws.rows();
      if (dm.draws.rows() < 2) {
        slot.failure = "subset " + std::to_string(j) + ": fewer than 2 usable draws";
        return;
      }
      SubsetRun run;
      run.summary = summarize(dm);
      run.subset.subset_id = j;
      run.subset.b = b;
      run.subset.n = n;
      if (cfg.keep_draws) {
        run.subset.row_ids = std::move(idx.row_ids);
        run.draws = std::move(dm);
      }
      slot.run = std::move(run);
    } catch (const Error& e) {
      slot.failure = "subset " + std::to_string(j) + ": " + e.what();
    }
  };

  const bool sequential = trace != nullptr || cfg.time_budget_s.has_value();
  if (sequential) {
    for (std::int64_t j = 0; j < s; ++j) {
      if (cfg.time_budget_s && elapsed_seconds(start) > *cfg.time_budget_s) {
        if (trace) trace->budget_expired = true;
        if (j == 0) throw BudgetError("BLBB: time budget expired before the first subset");
        break;
      }
      process_subset(0, j);
      if (trace) {
        Checkpoint cp;
        cp.elapsed_s = elapsed_seconds(start);
        cp.units_done = j + 1;
        std::vector<SummaryRecord> done_summaries;
        for (std::int64_t jj = 0; jj <= j; ++jj) {
          if (slots[static_cast<std::size_t>(jj)].run) {
            done_summaries.push_back(slots[static_cast<std::size_t>(jj)].run->summary);
          }
        }
        if (!done_summaries.empty()) cp.running = combine_average(done_summaries);
        trace->checkpoints.push_back(std::move(cp));
      }
    }
  } else {
    parallel_for(s, cfg.workers, process_subset);
  }

  BlbbResult result;
  std::vector<SummaryRecord> summaries;
  for (auto& slot : slots) {
    if (!slot.done) continue;
    if (slot.run) {
      summaries.push_back(slot.run->summary);
      result.subset_runs.push_back(std::move(*slot.run));
    } else {
      ++result.subsets_failed;
      result.failure_log.push_back(slot.failure);
    }
  }
  if (summaries.empty()) {
    throw EngineError(method + ": all subsets failed");
  }
  result.combined = combine_average(summaries);
  result.combined.provenance = Provenance{method, std::nullopt, cfg.seed, b, n};
  return result;
}

}  // namespace

BlbbResult run_blbb(const ChunkedDataset& ds, const FunctionalSpec& spec, const EngineConfig& cfg,
                    RunTrace* trace) {
  EngineConfig c = cfg;
  c.method = Method::BLBB;
  return run_blbb_core(ds, spec, c, trace, false);
}

SummaryRecord pooled_blbb_summary(const BlbbResult& result) {
  std::int64_t total = 0, excluded = 0;
  Eigen::Index q = 0;
  for (const auto& run : result.subset_runs) {
    if (!run.draws) {
      throw InvalidParameterError("pooled_blbb_summary: run was made without keep_draws");
    }
    total += run.draws->draws.rows();
    excluded += run.draws->n_excluded;
    q = run.draws->draws.cols();
  }
  if (total < 2) throw InsufficientDataError("pooled_blbb_summary: fewer than 2 draws");
  DrawMatrix pooled;
  pooled.draws.resize(total, q);
  pooled.centered = true;
  pooled.center = Eigen::VectorXd::Zero(q);
  Eigen::Index at = 0;
  for (const auto& run : result.subset_runs) {
    pooled.draws.middleRows(at, run.draws->draws.rows()) = run.draws->draws;
    at += run.draws->draws.rows();
    pooled.center += run.draws->center;
  }
  pooled.center /= static_cast<double>(result.subset_runs.size());
  pooled.n_excluded = excluded;
  pooled.provenance = result.combined.provenance;
  SummaryRecord rec = summarize(pooled);
  rec.flags.push_back("pooled_diagnostic");
  return rec;
}

// --- Subsampled double Bayesian bootstrap ----------------------------------------

namespace {

SdbbResult run_sdbb_core(const ChunkedDataset& ds, const FunctionalSpec& spec,
                         const EngineConfig& cfg, RunTrace* trace, bool dp) {
  cfg.validate();
  const auto start = Clock::now();
  const std::int64_t n = unit_count(ds, spec);
  const std::int64_t b = resolve_subset_size(cfg, n);
  const double concentration = static_cast<double>(n) / static_cast<double>(b);
  const DpOverlay overlay = dp ? setup_dp_overlay(ds, spec, cfg, n) : DpOverlay{};
  const std::string method = method_name(cfg.method);
  constexpr int kRetryCap = 10;

  struct Slot {
    std::optional<Eigen::VectorXd> row;      // centered draw
    std::optional<Eigen::VectorXd> center;   // this draw's empirical value
    int attempts = 0;
    std::string failure;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(cfg.r));

  auto process_draw = [&](int, std::int64_t k) {
    Slot& slot = slots[static_cast<std::size_t>(k)];
    std::string last_reason = "unknown";
    for (int attempt = 0; attempt < kRetryCap; ++attempt) {
      slot.attempts = attempt + 1;
      try {
        const SubsetIndex idx =
            draw_subset(n, b, SeedSpec{cfg.seed, derive_stream(kTagSubset,
                                                               static_cast<std::uint64_t>(k),
                                                               static_cast<std::uint64_t>(attempt))});
        const MaterializedSubset data = materialize(ds, idx, spec);
        const FunctionalContext ctx(data, spec);
        FunctionalEvaluator evaluator(ctx);
        const auto center = evaluator(uniform_weights(data.n_units));
        if (!center.converged) {
          last_reason = "centering did not converge";
          continue;
        }
        Rng wrng(SeedSpec{cfg.seed, derive_stream(kTagWeights, static_cast<std::uint64_t>(k),
                                                  static_cast<std::uint64_t>(attempt))});
        const auto w = dirichlet_rescaled(static_cast<std::size_t>(data.n_units), concentration, wrng);
        DrawOutcome out = one_draw(evaluator, data, spec, dp ? &overlay : nullptr, w, cfg.seed,
                                   derive_stream(kTagDp, static_cast<std::uint64_t>(k),
                                                 static_cast<std::uint64_t>(attempt)));
        if (!out.ok) {
          last_reason = out.reason;
          continue;
        }
        slot.row = out.value - center.value;
        slot.center = center.value;
        return;
      } catch (const Error& e) {
        last_reason = e.what();
      }
    }
    slot.failure = "draw " + std::to_string(k) + " skipped after " + std::to_string(kRetryCap) +
                   " attempts: " + last_reason;
  };

  const bool sequential = trace != nullptr || cfg.time_budget_s.has_value();
  std::int64_t attempted = 0;
  const Eigen::Index q = design_width(ds, spec);

  auto partial_matrix = [&](std::int64_t upto) {
    std::vector<std::optional<Eigen::VectorXd>> rows;
    rows.reserve(static_cast<std::size_t>(upto));
    for (std::int64_t k = 0; k < upto; ++k) rows.push_back(slots[static_cast<std::size_t>(k)].row);
    return compact_rows(rows, q);
  };

  if (sequential) {
    for (std::int64_t k = 0; k < cfg.r; ++k) {
      if (cfg.time_budget_s && elapsed_seconds(start) > *cfg.time_budget_s) {
        if (trace) trace->budget_expired = true;
        if (attempted == 0) throw BudgetError("SDBB: time budget expired before the first draw");
        break;
      }
      process_draw(0, k);
      ++attempted;
      if (trace) {
        Checkpoint cp;
        cp.elapsed_s = elapsed_seconds(start);
        cp.units_done = attempted;
        auto so_far = partial_matrix(attempted);
        if (so_far.rows() >= 2) {
          Eigen::VectorXd center_mean = Eigen::VectorXd::Zero(q);
          std::int64_t got = 0;
          for (std::int64_t kk = 0; kk < attempted; ++kk) {
            if (slots[static_cast<std::size_t>(kk)].center) {
              center_mean += *slots[static_cast<std::size_t>(kk)].center;
              ++got;
            }
          }
          center_mean /= static_cast<double>(std::max<std::int64_t>(got, 1));
          DrawMatrix partial{so_far, true, center_mean,
                             Provenance{method, std::nullopt, cfg.seed, b, n},
                             attempted - so_far.rows()};
          cp.running = summarize(partial);
        }
        trace->checkpoints.push_back(std::move(cp));
      }
    }
  } else {
    parallel_for(cfg.r, cfg.workers, process_draw);
    attempted = cfg.r;
  }

  SdbbResult result;
  std::vector<std::optional<Eigen::VectorXd>> rows;
  Eigen::VectorXd center_mean = Eigen::VectorXd::Zero(q);
  std::int64_t successes = 0;
  for (std::int64_t k = 0; k < attempted; ++k) {
    const Slot& slot = slots[static_cast<std::size_t>(k)];
    rows.push_back(slot.row);
    if (slot.row) {
      center_mean += *slot.center;
      ++successes;
      result.retries += slot.attempts - 1;
    } else if (!slot.failure.empty()) {
      result.failure_log.push_back(slot.failure);
    }
  }
  if (successes == 0) throw EngineError(method + ": no subset draw succeeded");
  center_mean /= static_cast<double>(successes);

  result.draws.draws = compact_rows(rows, q);
  result.draws.centered = true;
  result.draws.center = center_mean;  // average of per-draw empirical centers
  result.draws.provenance = Provenance{method, std::nullopt, cfg.seed, b, n};
  result.draws.n_excluded = attempted - successes;
  result.summary = summarize(result.draws);
  return result;
}

}  // namespace

SdbbResult run_sdbb(const ChunkedDataset& ds, const FunctionalSpec& spec, const EngineConfig& cfg,
                    RunTrace* trace) {
  EngineConfig c = cfg;
  c.method = Method::SDBB;
  return run_sdbb_core(ds, spec, c, trace, false);
}

// --- Lossless Gamma-decomposition engine ------------------------------------------

DrawMatrix run_lossless(const ChunkedDataset& ds, const FunctionalSpec& spec,
                        const EngineConfig& cfg) {
  cfg.validate();
  if (spec.kind != FunctionalKind::Linear) {
    throw UnsupportedLosslessError(
        "no (rho, g) registration for this functional kind; lossless inference "
        "supports the linear (weighted least squares) family");
  }
  const std::int64_t n = ds.n_rows();
  const std::int64_t b = resolve_subset_size(cfg, n);
  const std::int64_t n_chunks = (n + b - 1) / b;  // floor-free: every row in some chunk
  const int q = design_width(ds, spec);

  Eigen::MatrixXd draws(cfg.r, q);
  RhoMoments empirical(q);
  Eigen::VectorXd center;
  Eigen::VectorXd u_row(q);

  std::int64_t drawn = 0;
  for (std::int64_t pass = 0; drawn < cfg.r; ++pass) {
    const std::int64_t batch = std::min(cfg.lossless_batch, cfg.r - drawn);
    std::vector<RhoMoments> acc(static_cast<std::size_t>(batch), RhoMoments(q));
    for (std::int64_t chunk = 0; chunk < n_chunks; ++chunk) {
      SubsetIndex idx;
      idx.subset_id = chunk;
      idx.b = b;
      idx.n = n;
      const std::int64_t lo = chunk * b;
      const std::int64_t hi = std::min(n, lo + b);
      idx.row_ids.resize(static_cast<std::size_t>(hi - lo));
      for (std::int64_t g = lo; g < hi; ++g) idx.row_ids[static_cast<std::size_t>(g - lo)] = g;
      const MaterializedSubset data = materialize(ds, idx, spec);

      // Per-chunk partial sums, merged by addition: subset boundaries cannot
      // change the draws beyond float-association noise.
      std::vector<RhoMoments> part(static_cast<std::size_t>(batch), RhoMoments(q));
      RhoMoments emp_part(q);
      for (Eigen::Index i = 0; i < data.design.rows(); ++i) {
        const std::int64_t global_row = lo + i;
        u_row = data.design.row(i).transpose();
        const double y = data.outcome(i);
        Rng row_rng(SeedSpec{cfg.seed, derive_stream(kTagLossless, static_cast<std::uint64_t>(pass),
                                                     static_cast<std::uint64_t>(global_row))});
        for (std::int64_t k = 0; k < batch; ++k) {
          part[static_cast<std::size_t>(k)].add(u_row, y, sample_gamma(1.0, row_rng));
        }
        if (pass == 0) emp_part.add(u_row, y, 1.0);
      }
      for (std::int64_t k = 0; k < batch; ++k) acc[static_cast<std::size_t>(k)] += part[static_cast<std::size_t>(k)];
      if (pass == 0) empirical += emp_part;
    }
    if (pass == 0) center = solve_rho(empirical);
    for (std::int64_t k = 0; k < batch; ++k) {
      draws.row(drawn + k) = (solve_rho(acc[static_cast<std::size_t>(k)]) - center).transpose();
    }
    drawn += batch;
  }

  DrawMatrix dm;
  dm.draws = std::move(draws);
  dm.centered = true;
  dm.center = center;
  dm.provenance = Provenance{"LOSSLESS", std::nullopt, cfg.seed, b, n};
  return dm;
}

// --- Dirichlet-process variants ----------------------------------------------------

DpResult run_dp(const ChunkedDataset& ds, const FunctionalSpec& spec, const EngineConfig& cfg,
                RunTrace* trace) {
  DpResult result;
  if (cfg.method == Method::BLDP) {
    result.blbb = run_blbb_core(ds, spec, cfg, trace, true);
  } else if (cfg.method == Method::SDDP) {
    result.sdbb = run_sdbb_core(ds, spec, cfg, trace, true);
  } else {
    throw ConfigError("run_dp requires method BLDP or SDDP", "engine.method");
  }
  return result;
}

// --- Dispatch ------------------------------------------------------------------------

EngineResult run_engine(const ChunkedDataset& ds, const FunctionalSpec& spec,
                        const EngineConfig& cfg, RunTrace* trace) {
  EngineResult out;
  out.method = cfg.method;
  switch (cfg.method) {
    case Method::BB: {
      auto dm = run_bb(ds, spec, cfg, trace);
      out.summary = summarize(dm);
      out.failures = dm.n_excluded;
      out.pooled_draws = std::move(dm);
      break;
    }
    case Method::BLBB: {
      auto res = run_blbb(ds, spec, cfg, trace);
      out.summary = res.combined;
      out.failures = res.subsets_failed;
      out.failure_log = std::move(res.failure_log);
      out.subset_runs = std::move(res.subset_runs);
      break;
    }
    case Method::SDBB: {
      auto res = run_sdbb(ds, spec, cfg, trace);
      out.summary = res.summary;
      out.failures = res.draws.n_excluded;
      out.failure_log = std::move(res.failure_log);
      out.pooled_draws = std::move(res.draws);
      break;
    }
    case Method::LOSSLESS: {
      auto dm = run_lossless(ds, spec, cfg);
      out.summary = summarize(dm);
      out.pooled_draws = std::move(dm);
      break;
    }
    case Method::BLDP: {
      auto res = run_dp(ds, spec, cfg, trace);
      out.summary = res.blbb->combined;
      out.failures = res.blbb->subsets_failed;
      out.failure_log = std::move(res.blbb->failure_log);
      out.subset_runs = std::move(res.blbb->subset_runs);
      break;
    }
    case Method::SDDP: {
      auto res = run_dp(ds, spec, cfg, trace);
      out.summary = res.sdbb->summary;
      out.failures = res.sdbb->draws.n_excluded;
      out.failure_log = std::move(res.sdbb->failure_log);
      out.pooled_draws = std::move(res.sdbb->draws);
      break;
    }
  }
  return out;
}

TimedResult time_budgeted_run(const ChunkedDataset& ds, const FunctionalSpec& spec,
                              const EngineConfig& cfg) {
  if (!cfg.time_budget_s) {
    throw InvalidParameterError("time_budgeted_run: config has no time budget");
  }
  TimedResult out;
  out.result = run_engine(ds, spec, cfg, &out.trace);
  return out;
}

}  // namespace scalebb
