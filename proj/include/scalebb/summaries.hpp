#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scalebb/errors.hpp"

namespace scalebb {

/// Where a draw matrix or summary came from; carried through every export.
/// Draws are stored without the sqrt(n) factor of the centered functional
/// (it cancels in every relative error and interval), which is recorded here.
struct Provenance {
  std::string method;
  std::optional<std::int64_t> subset_id;
  std::uint64_t seed = 0;
  std::int64_t b = 0;
  std::int64_t n = 0;
  bool sqrt_n_scaled = false;
};

/// R Monte Carlo draws of a (p+1)-vector functional. When centered, each
/// stored row is T(P_draw) - center. Only finite, converged draws are kept;
/// the exclusion count is part of the record.
struct DrawMatrix {
  Eigen::MatrixXd draws;  // R x q
  bool centered = false;
  Eigen::VectorXd center;
  Provenance provenance;
  std::int64_t n_excluded = 0;
};

/// Linear-interpolation percentile at rank h = (R-1)q + 1 over the order
/// statistics (the common statistical-software default). `sorted` must be
/// ascending.
double interpolated_quantile(const std::vector<double>& sorted, double q);

/// Per-coordinate posterior summaries: 2.5th/97.5th percentile, standard
/// deviation (divisor R-1) and mean of the centered draws, plus the
/// empirical center needed to restate results on the uncentered scale.
struct SummaryRecord {
  Eigen::VectorXd q025;
  Eigen::VectorXd q975;
  Eigen::VectorXd sd;
  Eigen::VectorXd mean;
  Eigen::VectorXd center;
  std::int64_t n_draws = 0;
  std::int64_t n_excluded = 0;
  Provenance provenance;
  std::vector<std::string> flags;  // e.g. "degenerate_zero_se"

  Eigen::Index dim() const { return mean.size(); }
  /// Posterior mean on the original (uncentered) scale.
  Eigen::VectorXd uncentered_mean() const { return center + mean; }
};

/// Summarizes a draw matrix; requires at least 2 finite draws.
SummaryRecord summarize(const DrawMatrix& draws);

/// Unweighted field-wise average across records (the equal-subset-size
/// combination rule: b/n * sum over the n/b subsets is the plain mean).
/// Draw counts are summed for bookkeeping.
SummaryRecord combine_average(const std::vector<SummaryRecord>& records);

/// 95% credible intervals: uncentered mean +/- (q975 - q025)/2.
std::vector<std::pair<double, double>> credible_interval(const SummaryRecord& rec);

struct ErrorPair {
  double raw = 0.0;             // the L1 norm over coordinates
  double per_coordinate = 0.0;  // raw / (p+1)
};

/// Average relative error of credible-interval lengths against a reference:
/// (p+1)^-1 sum_l |(len_approx/len_ref) - 1|.
double relative_error_cil(const SummaryRecord& approx, const SummaryRecord& reference);

/// Same, for posterior standard deviations.
double relative_error_sd(const SummaryRecord& approx, const SummaryRecord& reference);

/// Absolute error of posterior means on the uncentered scale, reported both
/// as the raw L1 norm and per coordinate (the two readings of the reporting
/// convention; tables compare the per-coordinate figure).
ErrorPair absolute_error_mean(const SummaryRecord& approx, const SummaryRecord& reference);

/// Name of the percentile rule, recorded in every report.
inline constexpr const char* kPercentileRule = "linear interpolation at rank h=(R-1)q+1";

}  // namespace scalebb
