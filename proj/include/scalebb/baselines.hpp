#pragma once

#include "scalebb/data.hpp"
#include "scalebb/summaries.hpp"

namespace scalebb {

/// Estimate and standard errors of the limiting normal of T.
struct AsymptoticSummary {
  Eigen::VectorXd estimate;
  Eigen::VectorXd standard_errors;
  std::string source;  // "AN" or "ANS"
  std::int64_t subset_count = 1;
};

/// Converts a normal approximation into the common summary shape:
/// centered mean 0, sd = se, q025/q975 = -/+ 1.959964 * se, center = estimate.
/// Zero standard errors flag the record as degenerate.
SummaryRecord to_summary_record(const AsymptoticSummary& asym, std::int64_t n, std::int64_t b);

/// Full-data asymptotic-normal comparator: fits the functional at uniform
/// weights; the linear variance is the classical homoskedastic
/// sigma^2 (U'U)^{-1} with sigma^2 = RSS/(n-p-1), the logistic variance the
/// inverse observed information at the MLE. Mixed functionals are out of
/// scope here.
SummaryRecord an_summary(const ChunkedDataset& ds, const FunctionalSpec& spec);

/// Subset-averaged comparator: per subset, the asymptotic normal of
/// T(subset empirical) with its variance rescaled by b/n; per-subset records
/// are averaged. Failed subsets are skipped with a log entry.
SummaryRecord ans_summary(const ChunkedDataset& ds, const FunctionalSpec& spec,
                          const std::vector<SubsetIndex>& partition,
                          std::vector<std::string>* failure_log = nullptr);

}  // namespace scalebb
