#include "scalebb/baselines.hpp"

#include <cmath>

#include "scalebb/functionals.hpp"

namespace scalebb {

namespace {

constexpr double kZ975 = 1.959964;

// Classical normal-theory moments of T on one materialized dataset.
AsymptoticSummary asymptotic_fit(const MaterializedSubset& data, const FunctionalSpec& spec) {
  AsymptoticSummary out;
  const Eigen::Index n = data.design.rows();
  const Eigen::Index q = data.design.cols();
  switch (spec.kind) {
    case FunctionalKind::Linear: {
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(q, q);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(data.design.transpose());
      gram = gram.selfadjointView<Eigen::Lower>();
      Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
      check_gram_condition(ldlt);
      out.estimate = ldlt.solve(data.design.transpose() * data.outcome);
      double rss = (data.outcome - data.design * out.estimate).squaredNorm();
      // an exact fit leaves only rounding residue; report it as zero
      if (rss <= 1e-24 * data.outcome.squaredNorm()) rss = 0.0;
      const double dof = static_cast<double>(n) - static_cast<double>(q);
      if (dof <= 0) throw InsufficientDataError("asymptotic fit: no residual degrees of freedom");
      const double sigma2 = rss / dof;
      const Eigen::MatrixXd cov = sigma2 * ldlt.solve(Eigen::MatrixXd::Identity(q, q));
      out.standard_errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
      break;
    }
    case FunctionalKind::Logistic: {
      const std::vector<double> uniform(static_cast<std::size_t>(n),
                                        1.0 / static_cast<double>(n));
      LogisticFit fit = weighted_logistic(data, uniform, spec);
      if (!fit.converged) throw EngineError("asymptotic fit: logistic MLE did not converge");
      out.estimate = fit.beta;
      // Observed information of the unweighted log-likelihood.
      Eigen::VectorXd eta = data.design * fit.beta;
      Eigen::MatrixXd scaled_t = data.design.transpose();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = 1.0 / (1.0 + std::exp(-eta(i)));
        scaled_t.col(i) *= std::sqrt(mu * (1.0 - mu));
      }
      Eigen::MatrixXd info = Eigen::MatrixXd::Zero(q, q);
      info.selfadjointView<Eigen::Lower>().rankUpdate(scaled_t);
      info = info.selfadjointView<Eigen::Lower>();
      Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
      check_gram_condition(ldlt);
      const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(q, q));
      out.standard_errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
      break;
    }
    case FunctionalKind::Mixed:
      throw InvalidParameterError("asymptotic comparators are not provided for mixed functionals");
  }
  return out;
}

}  // namespace

SummaryRecord to_summary_record(const AsymptoticSummary& asym, std::int64_t n, std::int64_t b) {
  SummaryRecord rec;
  const Eigen::Index q = asym.estimate.size();
  rec.center = asym.estimate;
  rec.mean = Eigen::VectorXd::Zero(q);
  rec.sd = asym.standard_errors;
  rec.q025 = -kZ975 * asym.standard_errors;
  rec.q975 = kZ975 * asym.standard_errors;
  rec.n_draws = 0;
  rec.provenance.method = asym.source;
  rec.provenance.b = b;
  rec.provenance.n = n;
  if ((asym.standard_errors.array() == 0.0).any()) {
    rec.flags.push_back("degenerate_zero_se");
  }
  return rec;
}

SummaryRecord an_summary(const ChunkedDataset& ds, const FunctionalSpec& spec) {
  const std::int64_t n = unit_count(ds, spec);
  SubsetIndex all;
  all.b = n;
  all.n = n;
  all.row_ids.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) all.row_ids[static_cast<std::size_t>(i)] = i;
  const MaterializedSubset data = materialize(ds, all, spec);
  AsymptoticSummary asym = asymptotic_fit(data, spec);
  asym.source = "AN";
  return to_summary_record(asym, n, n);
}

SummaryRecord ans_summary(const ChunkedDataset& ds, const FunctionalSpec& spec,
                          const std::vector<SubsetIndex>& partition,
                          std::vector<std::string>* failure_log) {
  if (partition.empty()) throw InvalidParameterError("ans_summary: empty partition");
  const std::int64_t n = partition.front().n;
  const std::int64_t b = partition.front().b;
  const double rescale = static_cast<double>(b) / static_cast<double>(n);
  std::vector<SummaryRecord> records;
  for (const auto& idx : partition) {
    try {
      const MaterializedSubset data = materialize(ds, idx, spec);
      AsymptoticSummary asym = asymptotic_fit(data, spec);
      asym.source = "ANS";
      // Variance of the subset normal rescaled by exactly b/n (b = n is the
      // identity, bit for bit).
      if (rescale != 1.0) {
        asym.standard_errors =
            (asym.standard_errors.array().square() * rescale).sqrt().matrix();
      }
      records.push_back(to_summary_record(asym, n, b));
    } catch (const Error& e) {
      if (failure_log) {
        failure_log->push_back("subset " + std::to_string(idx.subset_id) + ": " + e.what());
      }
    }
  }
  if (records.empty()) throw EngineError("ANS: all subsets failed");
  SummaryRecord combined = combine_average(records);
  combined.provenance.method = "ANS";
  combined.provenance.b = b;
  combined.provenance.n = n;
  return combined;
}

}  // namespace scalebb
