#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>

#include "scalebb/data.hpp"

namespace scalebb {

/// Condition-estimate guard separating statistical failure from numerical
/// noise: a weighted Gram matrix with estimated condition above 1e12 is
/// treated as singular.
inline constexpr double kConditionLimit = 1e12;

/// Throws SingularDesignError unless the factorization succeeded and the
/// pivoted-LDLT diagonal spread stays below kConditionLimit (a cheap,
/// rank-revealing condition estimate; exact collinearity shows up as a zero
/// or negative pivot).
void check_gram_condition(const Eigen::LDLT<Eigen::MatrixXd>& ldlt);

/// Reusable weighted least-squares solver over a fixed design. One instance
/// per subset; solve() is called once per bootstrap draw with fresh weights.
class WlsSolver {
 public:
  explicit WlsSolver(const MaterializedSubset& data);

  /// Solves (sum_i w_i u_i u_i') beta = sum_i w_i u_i y_i. Throws
  /// SingularDesignError when the weighted Gram is numerically singular.
  Eigen::VectorXd solve(std::span<const double> weights);

 private:
  const Eigen::MatrixXd& design_;
  const Eigen::VectorXd& outcome_;
  Eigen::MatrixXd scaled_t_;   // q x n workspace: sqrt(w)-scaled design rows
  Eigen::VectorXd scaled_y_;
  Eigen::MatrixXd gram_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

Eigen::VectorXd weighted_least_squares(const MaterializedSubset& data,
                                       std::span<const double> weights);

struct LogisticFit {
  Eigen::VectorXd beta;
  bool converged = false;
  int iterations = 0;
  double gradient_max_norm = 0.0;
  double loglik = 0.0;
};

/// Weighted logistic maximum likelihood by damped Newton (IRLS with
/// step-halving on likelihood decrease), started at zero. Stops when the
/// gradient max-norm drops below spec.gradient_tolerance or the iteration
/// budget runs out; the non-converged case is flagged, not thrown, so
/// engines can record and exclude those draws. Complete separation (the
/// likelihood is maximized by a perfect fit with unbounded coefficients)
/// throws SeparationError.
LogisticFit weighted_logistic(const MaterializedSubset& data, std::span<const double> weights,
                              const FunctionalSpec& spec);

/// Within-cluster covariance of the random-intercept Gaussian model,
/// V = sigma^2 I + tau^2 J, fitted by profile maximum likelihood over the
/// variance ratio tau^2/sigma^2 (1-D bounded search). tau^2 is floored at 0.
struct MixedCovariance {
  int cluster_size = 0;
  Eigen::MatrixXd V;
  double sigma2 = 0.0;
  double tau2 = 0.0;
};

MixedCovariance estimate_mixed_covariance(const MaterializedSubset& data);

/// GLS-style mixed-effects estimator with one weight per cluster:
/// (sum_i W_i U_i' A U_i)^{-1} (sum_i W_i U_i' A Y_i), where A is the inverse
/// of the estimated covariance by default (MixedWeightMatrix::Literal uses
/// the covariance itself; the display in the source material is ambiguous).
/// The covariance is estimated once per subset and held fixed across draws.
Eigen::VectorXd weighted_mixed(const MaterializedSubset& data,
                               std::span<const double> cluster_weights,
                               const MixedCovariance& cov,
                               MixedWeightMatrix mode = MixedWeightMatrix::Inverse);

/// Per-subset evaluation context: anything computed once and reused across
/// bootstrap draws (the mixed-model covariance and its per-cluster
/// quadratic-form cache). Immutable after construction, so many evaluators
/// can share one context concurrently.
class FunctionalContext {
 public:
  FunctionalContext(const MaterializedSubset& data, const FunctionalSpec& spec);

  const MaterializedSubset& data() const { return data_; }
  const FunctionalSpec& spec() const { return spec_; }
  const std::optional<MixedCovariance>& mixed_covariance() const { return cov_; }
  const Eigen::MatrixXd& cluster_grams() const { return cluster_grams_; }
  const Eigen::MatrixXd& cluster_rhs() const { return cluster_rhs_; }

 private:
  const MaterializedSubset& data_;
  const FunctionalSpec& spec_;
  std::optional<MixedCovariance> cov_;
  // Flattened per-cluster caches for the mixed estimator:
  Eigen::MatrixXd cluster_grams_;  // (q*q) x N, column i = vec(U_i' A U_i)
  Eigen::MatrixXd cluster_rhs_;    // q x N, column i = U_i' A Y_i
};

/// T at the given unit weights (rows, or clusters when mixed). Owns its
/// scratch buffers: one evaluator per worker thread.
class FunctionalEvaluator {
 public:
  explicit FunctionalEvaluator(const FunctionalContext& ctx);

  /// converged=false flags a logistic fit that ran out of iterations.
  struct Eval {
    Eigen::VectorXd value;
    bool converged = true;
  };
  Eval operator()(std::span<const double> unit_weights);

 private:
  const FunctionalContext& ctx_;
  std::optional<WlsSolver> wls_;
  Eigen::VectorXd gram_flat_, rhs_;  // mixed scratch
};

/// T at uniform weights 1/n_units; the centering value for phi_T.
FunctionalEvaluator::Eval empirical_value(const MaterializedSubset& data,
                                          const FunctionalSpec& spec);

/// One-off evaluation (context + evaluator built internally).
FunctionalEvaluator::Eval evaluate_functional(const MaterializedSubset& data,
                                              const FunctionalSpec& spec,
                                              std::span<const double> unit_weights);

/// Streaming sufficient statistics for the lossless Gamma decomposition of
/// functionals g(int rho dP). For the linear kind: rho_1 = u u',
/// rho_2 = u y, g(M, v) = M^{-1} v. Mergeable across subsets by addition.
struct RhoMoments {
  Eigen::MatrixXd s1;          // sum_i G_i u_i u_i' (lower triangle maintained)
  Eigen::VectorXd s2;          // sum_i G_i u_i y_i
  double weight_total = 0.0;   // sum_i G_i
  std::int64_t rows = 0;

  explicit RhoMoments(int width = 0);
  void add(const Eigen::VectorXd& u, double y, double w);
  RhoMoments& operator+=(const RhoMoments& other);
};

/// Accumulates one subset's contribution under the given unnormalized Gamma
/// weights. Throws UnsupportedLosslessError for kinds without a registered
/// (rho, g) pair (logistic, mixed).
RhoMoments rho_moments(const MaterializedSubset& data, const FunctionalSpec& spec,
                       std::span<const double> gamma_weights);

/// g applied to accumulated moments: the weighted least-squares coefficients.
Eigen::VectorXd solve_rho(const RhoMoments& moments);

}  // namespace scalebb
