#include "scalebb/summaries.hpp"

#include <algorithm>
#include <cmath>

namespace scalebb {

double interpolated_quantile(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 0) throw InvalidParameterError("quantile of empty sample");
  if (n == 1) return sorted[0];
  const double h = (static_cast<double>(n) - 1.0) * q;  // 0-based rank
  const double lo = std::floor(h);
  const auto i = static_cast<std::size_t>(lo);
  if (i + 1 >= n) return sorted[n - 1];
  return sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i]);
}

SummaryRecord summarize(const DrawMatrix& dm) {
  const Eigen::Index r = dm.draws.rows();
  const Eigen::Index q = dm.draws.cols();
  if (r < 2) throw InsufficientDataError("summarize: needs at least 2 draws");

  SummaryRecord rec;
  rec.q025.resize(q);
  rec.q975.resize(q);
  rec.sd.resize(q);
  rec.mean.resize(q);
  rec.center = dm.centered ? dm.center : Eigen::VectorXd::Zero(q).eval();
  rec.n_draws = r;
  rec.n_excluded = dm.n_excluded;
  rec.provenance = dm.provenance;

  std::vector<double> column(static_cast<std::size_t>(r));
  for (Eigen::Index l = 0; l < q; ++l) {
    const double mean = dm.draws.col(l).mean();
    rec.mean(l) = mean;
    rec.sd(l) = std::sqrt((dm.draws.col(l).array() - mean).square().sum() /
                          static_cast<double>(r - 1));
    for (Eigen::Index i = 0; i < r; ++i) column[static_cast<std::size_t>(i)] = dm.draws(i, l);
    std::sort(column.begin(), column.end());
    rec.q025(l) = interpolated_quantile(column, 0.025);
    rec.q975(l) = interpolated_quantile(column, 0.975);
  }
  return rec;
}

SummaryRecord combine_average(const std::vector<SummaryRecord>& records) {
  if (records.empty()) throw CombineError("combine_average: no records");
  const Eigen::Index q = records.front().dim();
  SummaryRecord out;
  out.q025 = Eigen::VectorXd::Zero(q);
  out.q975 = Eigen::VectorXd::Zero(q);
  out.sd = Eigen::VectorXd::Zero(q);
  out.mean = Eigen::VectorXd::Zero(q);
  out.center = Eigen::VectorXd::Zero(q);
  for (const auto& rec : records) {
    if (rec.dim() != q || rec.center.size() != q) {
      throw CombineError("combine_average: mismatched dimensions");
    }
    out.q025 += rec.q025;
    out.q975 += rec.q975;
    out.sd += rec.sd;
    out.mean += rec.mean;
    out.center += rec.center;
    out.n_draws += rec.n_draws;
    out.n_excluded += rec.n_excluded;
    for (const auto& f : rec.flags) out.flags.push_back(f);
  }
  const double s = static_cast<double>(records.size());
  out.q025 /= s;
  out.q975 /= s;
  out.sd /= s;
  out.mean /= s;
  out.center /= s;
  out.provenance = records.front().provenance;
  out.provenance.subset_id.reset();
  return out;
}

std::vector<std::pair<double, double>> credible_interval(const SummaryRecord& rec) {
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(rec.dim()));
  const Eigen::VectorXd mid = rec.uncentered_mean();
  for (Eigen::Index l = 0; l < rec.dim(); ++l) {
    const double half = 0.5 * (rec.q975(l) - rec.q025(l));
    out.emplace_back(mid(l) - half, mid(l) + half);
  }
  return out;
}

namespace {

void check_same_dim(const SummaryRecord& a, const SummaryRecord& b) {
  if (a.dim() != b.dim()) throw CombineError("error metric: dimension mismatch");
}

}  // namespace

double relative_error_cil(const SummaryRecord& approx, const SummaryRecord& reference) {
  check_same_dim(approx, reference);
  double total = 0.0;
  for (Eigen::Index l = 0; l < approx.dim(); ++l) {
    const double ref_len = reference.q975(l) - reference.q025(l);
    if (ref_len == 0.0) {
      throw DegenerateReferenceError("reference interval has zero length at coordinate " +
                                     std::to_string(l));
    }
    total += std::abs((approx.q975(l) - approx.q025(l)) / ref_len - 1.0);
  }
  return total / static_cast<double>(approx.dim());
}

double relative_error_sd(const SummaryRecord& approx, const SummaryRecord& reference) {
  check_same_dim(approx, reference);
  double total = 0.0;
  for (Eigen::Index l = 0; l < approx.dim(); ++l) {
    if (reference.sd(l) == 0.0) {
      throw DegenerateReferenceError("reference sd is zero at coordinate " + std::to_string(l));
    }
    total += std::abs(approx.sd(l) / reference.sd(l) - 1.0);
  }
  return total / static_cast<double>(approx.dim());
}

ErrorPair absolute_error_mean(const SummaryRecord& approx, const SummaryRecord& reference) {
  check_same_dim(approx, reference);
  ErrorPair err;
  err.raw = (reference.uncentered_mean() - approx.uncentered_mean()).lpNorm<1>();
  err.per_coordinate = err.raw / static_cast<double>(approx.dim());
  return err;
}

}  // namespace scalebb
