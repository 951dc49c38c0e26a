#include "scalebb/functionals.hpp"

#include <cmath>
#include <limits>

namespace scalebb {

namespace {

void check_weights(std::span<const double> weights, std::int64_t expected,
                   const char* who) {
  if (static_cast<std::int64_t>(weights.size()) != expected) {
    throw InvalidParameterError(std::string(who) + ": weight count " +
                                std::to_string(weights.size()) + " does not match " +
                                std::to_string(expected) + " units");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw InvalidParameterError(std::string(who) + ": weights must be positive and finite");
    }
  }
}

double log1p_exp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

void check_gram_condition(const Eigen::LDLT<Eigen::MatrixXd>& ldlt) {
  // Eigen's rcond() pseudo-solves through zero pivots and misses exact
  // collinearity; the pivoted diagonal itself is rank-revealing.
  bool ok = ldlt.info() == Eigen::Success;
  if (ok) {
    const auto& d = ldlt.vectorD();
    const double dmax = d.maxCoeff();
    const double dmin = d.minCoeff();
    ok = dmax > 0.0 && dmin > dmax / kConditionLimit;
  }
  if (!ok) {
    throw SingularDesignError(
        "weighted Gram matrix numerically singular (condition estimate > 1e12)");
  }
}

// --- Weighted least squares ---------------------------------------------------

WlsSolver::WlsSolver(const MaterializedSubset& data)
    : design_(data.design), outcome_(data.outcome) {
  if (design_.rows() == 0) throw InvalidParameterError("weighted_least_squares: empty subset");
  scaled_t_.resize(design_.cols(), design_.rows());
  scaled_y_.resize(design_.rows());
  gram_.resize(design_.cols(), design_.cols());
}

Eigen::VectorXd WlsSolver::solve(std::span<const double> weights) {
  check_weights(weights, design_.rows(), "weighted_least_squares");
  const Eigen::Index n = design_.rows();
  if (design_.cols() == 1) {
    // Single-coordinate functionals (the weighted mean, in particular) are a
    // plain dot-product ratio; keep them that way so T(P) = sum w_i x_i holds
    // to the last bit for the mean.
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wu = weights[static_cast<std::size_t>(i)] * design_(i, 0);
      num += wu * outcome_(i);
      den += wu * design_(i, 0);
    }
    if (!(std::abs(den) > 0.0)) {
      throw SingularDesignError("weighted Gram matrix numerically singular (1x1)");
    }
    Eigen::VectorXd beta(1);
    beta(0) = num / den;
    return beta;
  }
  scaled_t_ = design_.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sw = std::sqrt(weights[static_cast<std::size_t>(i)]);
    scaled_t_.col(i) *= sw;
    scaled_y_(i) = sw * outcome_(i);
  }
  gram_.setZero();
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(scaled_t_);
  gram_ = gram_.selfadjointView<Eigen::Lower>();
  ldlt_.compute(gram_);
  check_gram_condition(ldlt_);
  return ldlt_.solve(scaled_t_ * scaled_y_);
}

Eigen::VectorXd weighted_least_squares(const MaterializedSubset& data,
                                       std::span<const double> weights) {
  WlsSolver solver(data);
  return solver.solve(weights);
}

// --- Weighted logistic regression ----------------------------------------------

LogisticFit weighted_logistic(const MaterializedSubset& data, std::span<const double> weights,
                              const FunctionalSpec& spec) {
  spec.validate();
  const Eigen::MatrixXd& U = data.design;
  const Eigen::VectorXd& y = data.outcome;
  if (U.rows() == 0) throw InvalidParameterError("weighted_logistic: empty subset");
  check_weights(weights, U.rows(), "weighted_logistic");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) {
      throw InvalidParameterError("weighted_logistic: outcome must be 0/1");
    }
  }
  const Eigen::Index n = U.rows();
  const Eigen::Index q = U.cols();
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), n);

  LogisticFit fit;
  fit.beta = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd mu(n), resid(n), grad(q), delta(q), candidate(q), eta_new(n);
  Eigen::MatrixXd scaled_t(q, n), hessian(q, q);

  auto loglik = [&](const Eigen::VectorXd& eta_vec) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      ll += w(i) * (y(i) * eta_vec(i) - log1p_exp(eta_vec(i)));
    }
    return ll;
  };

  double ll = loglik(eta);
  constexpr double kSeparationCap = 1e3;
  for (fit.iterations = 0; fit.iterations < spec.max_iterations; ++fit.iterations) {
    for (Eigen::Index i = 0; i < n; ++i) mu(i) = 1.0 / (1.0 + std::exp(-eta(i)));
    resid = w.cwiseProduct(y - mu);
    grad.noalias() = U.transpose() * resid;
    fit.gradient_max_norm = grad.cwiseAbs().maxCoeff();
    if (fit.gradient_max_norm < spec.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    if (fit.beta.cwiseAbs().maxCoeff() > kSeparationCap) {
      throw SeparationError("logistic coefficients diverged with non-vanishing gradient");
    }
    scaled_t = U.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      scaled_t.col(i) *= std::sqrt(w(i) * mu(i) * (1.0 - mu(i)));
    }
    hessian.setZero();
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(scaled_t);
    hessian = hessian.selfadjointView<Eigen::Lower>();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    check_gram_condition(ldlt);
    delta = ldlt.solve(grad);

    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      candidate = fit.beta + step * delta;
      eta_new.noalias() = U * candidate;
      const double ll_new = loglik(eta_new);
      if (ll_new >= ll - 1e-12 * std::abs(ll)) {
        fit.beta = candidate;
        eta.swap(eta_new);
        ll = ll_new;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // stalled; reported as non-converged
  }
  fit.loglik = ll;

  // Complete separation drives the optimum to a perfect fit (log-likelihood
  // at 0) with coefficients running off to infinity; the gradient vanishes
  // numerically long before the cap is reached, so classify by fit quality.
  if (fit.converged && ll > -1e-6 && fit.beta.cwiseAbs().maxCoeff() > 10.0) {
    throw SeparationError("logistic likelihood maximized by a perfect fit: complete separation");
  }
  return fit;
}

// --- Mixed-effects covariance and estimator -------------------------------------

namespace {

struct MixedSums {
  Eigen::MatrixXd gram;       // sum U_i' U_i
  Eigen::MatrixXd colsum_sq;  // sum s_i s_i'      with s_i = U_i' 1
  Eigen::VectorXd xty;        // sum U_i' y_i
  Eigen::VectorXd colsum_t;   // sum s_i t_i       with t_i = 1' y_i
  double yy = 0.0;            // sum y_i' y_i
  double tt = 0.0;            // sum t_i^2
};

MixedSums mixed_sums(const MaterializedSubset& data) {
  const int m = data.cluster_size;
  const Eigen::Index q = data.design.cols();
  MixedSums sums;
  sums.gram = Eigen::MatrixXd::Zero(q, q);
  sums.colsum_sq = Eigen::MatrixXd::Zero(q, q);
  sums.xty = Eigen::VectorXd::Zero(q);
  sums.colsum_t = Eigen::VectorXd::Zero(q);
  for (std::int64_t i = 0; i < data.n_units; ++i) {
    const auto Ui = data.design.middleRows(i * m, m);
    const auto yi = data.outcome.segment(i * m, m);
    const Eigen::VectorXd s = Ui.colwise().sum();
    const double t = yi.sum();
    sums.gram.selfadjointView<Eigen::Lower>().rankUpdate(Ui.transpose());
    sums.colsum_sq.selfadjointView<Eigen::Lower>().rankUpdate(s);
    sums.xty.noalias() += Ui.transpose() * yi;
    sums.colsum_t.noalias() += t * s;
    sums.yy += yi.squaredNorm();
    sums.tt += t * t;
  }
  sums.gram = sums.gram.selfadjointView<Eigen::Lower>();
  sums.colsum_sq = sums.colsum_sq.selfadjointView<Eigen::Lower>();
  return sums;
}

// Profile log-likelihood of the variance ratio psi = tau^2/sigma^2.
// A(psi) = (I + psi J)^{-1} = I - psi/(1+m psi) J, det(I + psi J) = 1 + m psi.
double profile_loglik(const MixedSums& sums, std::int64_t n_clusters, int m, double psi,
                      double* sigma2_out = nullptr) {
  const double c = psi / (1.0 + m * psi);
  const Eigen::MatrixXd M = sums.gram - c * sums.colsum_sq;
  const Eigen::VectorXd r = sums.xty - c * sums.colsum_t;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  check_gram_condition(ldlt);
  const Eigen::VectorXd beta = ldlt.solve(r);
  const double rss = (sums.yy - c * sums.tt) - beta.dot(r);
  const double nm = static_cast<double>(n_clusters) * m;
  const double sigma2 = std::max(rss / nm, 1e-300);
  if (sigma2_out) *sigma2_out = sigma2;
  return -0.5 * (nm * (std::log(sigma2) + 1.0 + std::log(2.0 * M_PI)) +
                 static_cast<double>(n_clusters) * std::log1p(m * psi));
}

}  // namespace

MixedCovariance estimate_mixed_covariance(const MaterializedSubset& data) {
  const int m = data.cluster_size;
  if (m < 2) throw InvalidParameterError("estimate_mixed_covariance: cluster size must be >= 2");
  if (data.n_units < 2) {
    throw InsufficientDataError("estimate_mixed_covariance: need at least 2 clusters");
  }
  const MixedSums sums = mixed_sums(data);

  // Coarse log-spaced grid, then golden-section refinement of the bracket.
  // psi = 0 is evaluated exactly so the boundary (tau^2 = 0) competes fairly.
  // Large psi shrinks the between-cluster information to nothing, which can
  // make the GLS system singular; such points simply lose.
  auto objective = [&](double psi) {
    try {
      return profile_loglik(sums, data.n_units, m, psi);
    } catch (const SingularDesignError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  double best_psi = 0.0;
  double best_ll = objective(0.0);
  constexpr int kGrid = 80;
  const double lo = std::log(1e-8), hi = std::log(1e7);
  for (int k = 0; k <= kGrid; ++k) {
    const double psi = std::exp(lo + (hi - lo) * k / kGrid);
    const double ll = objective(psi);
    if (ll > best_ll) {
      best_ll = ll;
      best_psi = psi;
    }
  }
  if (best_psi > 0.0) {
    double a = best_psi * std::exp(-(hi - lo) / kGrid);
    double b = best_psi * std::exp((hi - lo) / kGrid);
    constexpr double kGolden = 0.6180339887498949;
    double x1 = b - kGolden * (b - a), x2 = a + kGolden * (b - a);
    double f1 = objective(x1), f2 = objective(x2);
    for (int it = 0; it < 120 && (b - a) > 1e-12 * (1.0 + b); ++it) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + kGolden * (b - a);
        f2 = objective(x2);
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - kGolden * (b - a);
        f1 = objective(x1);
      }
    }
    const double psi = 0.5 * (a + b);
    if (objective(psi) > best_ll) best_psi = psi;
  }

  MixedCovariance cov;
  cov.cluster_size = m;
  profile_loglik(sums, data.n_units, m, best_psi, &cov.sigma2);
  cov.tau2 = std::max(best_psi * cov.sigma2, 0.0);
  cov.V = cov.sigma2 * Eigen::MatrixXd::Identity(m, m) +
          cov.tau2 * Eigen::MatrixXd::Ones(m, m);
  return cov;
}

Eigen::VectorXd weighted_mixed(const MaterializedSubset& data,
                               std::span<const double> cluster_weights,
                               const MixedCovariance& cov, MixedWeightMatrix mode) {
  const int m = data.cluster_size;
  if (m != cov.cluster_size) {
    throw InvalidParameterError("weighted_mixed: covariance cluster size mismatch");
  }
  check_weights(cluster_weights, data.n_units, "weighted_mixed");
  const Eigen::Index q = data.design.cols();
  const Eigen::MatrixXd A = (mode == MixedWeightMatrix::Inverse)
                                ? cov.V.ldlt().solve(Eigen::MatrixXd::Identity(m, m)).eval()
                                : cov.V;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd AU(m, q);
  for (std::int64_t i = 0; i < data.n_units; ++i) {
    const auto Ui = data.design.middleRows(i * m, m);
    const auto yi = data.outcome.segment(i * m, m);
    const double wi = cluster_weights[static_cast<std::size_t>(i)];
    AU.noalias() = A * Ui;
    gram.noalias() += wi * (Ui.transpose() * AU);
    rhs.noalias() += wi * (AU.transpose() * yi);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  check_gram_condition(ldlt);
  return ldlt.solve(rhs);
}

// --- Dispatch and per-subset context --------------------------------------------

FunctionalContext::FunctionalContext(const MaterializedSubset& data, const FunctionalSpec& spec)
    : data_(data), spec_(spec) {
  spec.validate();
  if (data.n_units < 1) throw InvalidParameterError("functional evaluation: empty subset");
  if (spec.kind == FunctionalKind::Mixed) {
    cov_ = estimate_mixed_covariance(data);
    const int m = data.cluster_size;
    const Eigen::Index q = data.design.cols();
    const Eigen::MatrixXd A =
        (spec.mixed_weight_matrix == MixedWeightMatrix::Inverse)
            ? cov_->V.ldlt().solve(Eigen::MatrixXd::Identity(m, m)).eval()
            : cov_->V;
    cluster_grams_.resize(q * q, data.n_units);
    cluster_rhs_.resize(q, data.n_units);
    Eigen::MatrixXd AU(m, q), Ci(q, q);
    for (std::int64_t i = 0; i < data.n_units; ++i) {
      const auto Ui = data.design.middleRows(i * m, m);
      const auto yi = data.outcome.segment(i * m, m);
      AU.noalias() = A * Ui;
      Ci.noalias() = Ui.transpose() * AU;
      cluster_grams_.col(i) = Eigen::Map<const Eigen::VectorXd>(Ci.data(), q * q);
      cluster_rhs_.col(i).noalias() = AU.transpose() * yi;
    }
  }
}

FunctionalEvaluator::FunctionalEvaluator(const FunctionalContext& ctx) : ctx_(ctx) {
  if (ctx.spec().kind == FunctionalKind::Linear) wls_.emplace(ctx.data());
  if (ctx.spec().kind == FunctionalKind::Mixed) {
    const Eigen::Index q = ctx.data().design.cols();
    gram_flat_.resize(q * q);
    rhs_.resize(q);
  }
}

FunctionalEvaluator::Eval FunctionalEvaluator::operator()(std::span<const double> unit_weights) {
  const MaterializedSubset& data = ctx_.data();
  const FunctionalSpec& spec = ctx_.spec();
  switch (spec.kind) {
    case FunctionalKind::Linear:
      return {wls_->solve(unit_weights), true};
    case FunctionalKind::Logistic: {
      LogisticFit fit = weighted_logistic(data, unit_weights, spec);
      return {std::move(fit.beta), fit.converged};
    }
    case FunctionalKind::Mixed: {
      check_weights(unit_weights, data.n_units, "weighted_mixed");
      const Eigen::Index q = data.design.cols();
      const Eigen::Map<const Eigen::VectorXd> w(unit_weights.data(), data.n_units);
      gram_flat_.noalias() = ctx_.cluster_grams() * w;
      rhs_.noalias() = ctx_.cluster_rhs() * w;
      Eigen::Map<const Eigen::MatrixXd> gram(gram_flat_.data(), q, q);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
      check_gram_condition(ldlt);
      return {ldlt.solve(rhs_), true};
    }
  }
  throw InvalidParameterError("unknown functional kind");
}

FunctionalEvaluator::Eval empirical_value(const MaterializedSubset& data,
                                          const FunctionalSpec& spec) {
  const std::vector<double> uniform(static_cast<std::size_t>(data.n_units),
                                    1.0 / static_cast<double>(data.n_units));
  return evaluate_functional(data, spec, uniform);
}

FunctionalEvaluator::Eval evaluate_functional(const MaterializedSubset& data,
                                              const FunctionalSpec& spec,
                                              std::span<const double> unit_weights) {
  FunctionalContext ctx(data, spec);
  FunctionalEvaluator eval(ctx);
  return eval(unit_weights);
}

// --- Lossless sufficient statistics ----------------------------------------------

RhoMoments::RhoMoments(int width)
    : s1(Eigen::MatrixXd::Zero(width, width)), s2(Eigen::VectorXd::Zero(width)) {}

void RhoMoments::add(const Eigen::VectorXd& u, double y, double w) {
  s1.selfadjointView<Eigen::Lower>().rankUpdate(u, w);
  s2.noalias() += (w * y) * u;
  weight_total += w;
  ++rows;
}

RhoMoments& RhoMoments::operator+=(const RhoMoments& other) {
  if (s1.rows() != other.s1.rows()) throw CombineError("rho moments: dimension mismatch");
  s1 += other.s1;
  s2 += other.s2;
  weight_total += other.weight_total;
  rows += other.rows;
  return *this;
}

RhoMoments rho_moments(const MaterializedSubset& data, const FunctionalSpec& spec,
                       std::span<const double> gamma_weights) {
  spec.validate();
  if (spec.kind != FunctionalKind::Linear) {
    throw UnsupportedLosslessError(
        "no (rho, g) registration for this functional kind; lossless inference "
        "supports the linear (weighted least squares) family");
  }
  check_weights(gamma_weights, data.design.rows(), "rho_moments");
  RhoMoments moments(static_cast<int>(data.design.cols()));
  for (Eigen::Index i = 0; i < data.design.rows(); ++i) {
    moments.add(data.design.row(i).transpose(), data.outcome(i),
                gamma_weights[static_cast<std::size_t>(i)]);
  }
  return moments;
}

Eigen::VectorXd solve_rho(const RhoMoments& moments) {
  Eigen::MatrixXd m = moments.s1.selfadjointView<Eigen::Lower>();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  check_gram_condition(ldlt);
  return ldlt.solve(moments.s2);
}

}  // namespace scalebb
