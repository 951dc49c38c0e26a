#include <cmath>

#include "doctest.h"
#include "scalebb/rng.hpp"
#include "scalebb/simlab.hpp"
#include "scalebb/summaries.hpp"
#include "support/stats.hpp"

using namespace scalebb;
namespace ts = testsupport;

namespace {

DrawMatrix centered_draws(Eigen::MatrixXd draws, Eigen::VectorXd center) {
  DrawMatrix dm;
  dm.draws = std::move(draws);
  dm.centered = true;
  dm.center = std::move(center);
  return dm;
}

}  // namespace

TEST_SUITE("summaries") {

TEST_CASE("degenerate draws: all equal") {
  Eigen::MatrixXd draws = Eigen::MatrixXd::Constant(50, 2, 4.5);
  const auto rec = summarize(centered_draws(draws, Eigen::VectorXd::Zero(2)));
  for (int l = 0; l < 2; ++l) {
    CHECK(rec.mean(l) == 4.5);
    CHECK(rec.sd(l) == 0.0);
    CHECK(rec.q025(l) == 4.5);
    CHECK(rec.q975(l) == 4.5);
  }
}

TEST_CASE("fewer than 2 draws is an error") {
  Eigen::MatrixXd one(1, 1);
  one << 3.0;
  CHECK_THROWS_AS(summarize(centered_draws(one, Eigen::VectorXd::Zero(1))),
                  InsufficientDataError);
}

TEST_CASE("interpolated percentiles on 1..100 (hand-evaluated rule)") {
  Eigen::MatrixXd draws(100, 1);
  for (int i = 0; i < 100; ++i) draws(i, 0) = i + 1;
  const auto rec = summarize(centered_draws(draws, Eigen::VectorXd::Zero(1)));
  CHECK(rec.q025(0) == doctest::Approx(3.475).epsilon(1e-12));
  CHECK(rec.q975(0) == doctest::Approx(97.525).epsilon(1e-12));
  CHECK(rec.mean(0) == doctest::Approx(50.5).epsilon(1e-12));
}

TEST_CASE("standard normal draws: q975 ~ 1.96, sd ~ 1") {
  Rng rng(SeedSpec{70, 0});
  Eigen::MatrixXd draws(100000, 1);
  for (Eigen::Index i = 0; i < draws.rows(); ++i) draws(i, 0) = rng.next_normal();
  const auto rec = summarize(centered_draws(draws, Eigen::VectorXd::Zero(1)));
  CHECK(std::abs(rec.q975(0) - 1.96) < 0.02);
  CHECK(std::abs(rec.sd(0) - 1.0) < 0.01);
}

TEST_CASE("summarize is affine-equivariant per coordinate") {
  Rng rng(SeedSpec{8, 0});
  Eigen::MatrixXd draws(500, 1);
  for (Eigen::Index i = 0; i < 500; ++i) draws(i, 0) = rng.next_normal();
  const auto base = summarize(centered_draws(draws, Eigen::VectorXd::Zero(1)));
  const double a = -2.5, c = 0.75;
  const auto mapped = summarize(centered_draws(a * draws.array() + c, Eigen::VectorXd::Zero(1)));
  CHECK(mapped.mean(0) == doctest::Approx(a * base.mean(0) + c).epsilon(1e-12));
  CHECK(mapped.sd(0) == doctest::Approx(std::abs(a) * base.sd(0)).epsilon(1e-12));
  // negative scale flips the quantiles
  CHECK(mapped.q025(0) == doctest::Approx(a * base.q975(0) + c).epsilon(1e-12));
  CHECK(mapped.q975(0) == doctest::Approx(a * base.q025(0) + c).epsilon(1e-12));
}

TEST_CASE("combine_average: identity, arithmetic, and the flattening property") {
  Rng rng(SeedSpec{9, 0});
  std::vector<SummaryRecord> records;
  for (int k = 0; k < 6; ++k) {
    Eigen::MatrixXd draws(40, 2);
    for (Eigen::Index i = 0; i < 40; ++i) {
      draws(i, 0) = rng.next_normal();
      draws(i, 1) = 2.0 * rng.next_normal() + 1.0;
    }
    records.push_back(summarize(centered_draws(draws, Eigen::VectorXd::Ones(2))));
  }

  const auto single = combine_average({records[0]});
  CHECK(single.sd == records[0].sd);
  CHECK(single.mean == records[0].mean);

  SummaryRecord a = records[0], b = records[1];
  a.sd.setConstant(0.1);
  b.sd.setConstant(0.3);
  const auto ab = combine_average({a, b});
  CHECK(ab.sd(0) == doctest::Approx(0.2).epsilon(1e-12));

  // direct recomputation oracle for the field mean
  const auto all = combine_average(records);
  double manual = 0.0;
  for (const auto& r : records) manual += r.q975(1);
  CHECK(all.q975(1) == doctest::Approx(manual / 6.0).epsilon(1e-12));

  // combining equal-size group combines equals combining all at once
  const auto g1 = combine_average({records[0], records[1], records[2]});
  const auto g2 = combine_average({records[3], records[4], records[5]});
  const auto nested = combine_average({g1, g2});
  CHECK((nested.mean - all.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((nested.sd - all.sd).cwiseAbs().maxCoeff() <= 1e-12);

  SummaryRecord wrong = records[0];
  wrong.mean.resize(3);
  wrong.q025.resize(3);
  CHECK_THROWS_AS(combine_average({records[0], wrong}), CombineError);
}

TEST_CASE("credible intervals uncenter and use half the quantile spread") {
  SummaryRecord rec;
  rec.mean = Eigen::VectorXd::Zero(1);
  rec.sd = Eigen::VectorXd::Ones(1);
  rec.q025 = Eigen::VectorXd::Constant(1, -1.96);
  rec.q975 = Eigen::VectorXd::Constant(1, 1.96);
  rec.center = Eigen::VectorXd::Constant(1, 5.0);
  rec.n_draws = 100;
  const auto ci = credible_interval(rec);
  CHECK(ci[0].first == doctest::Approx(5.0 - 1.96).epsilon(1e-12));
  CHECK(ci[0].second == doctest::Approx(5.0 + 1.96).epsilon(1e-12));
}

TEST_CASE("credible intervals cover the generating coefficients at ~95%") {
  // one replicate of the wide linear regime; coverage counted across the
  // 101 coordinates (binomial se ~ 2%, generous band)
  DgpSpec dgp;
  dgp.model = FunctionalKind::Linear;
  dgp.n = 10000;
  dgp.p = 100;
  dgp.seed = 515;
  const auto ds = generate(dgp);
  EngineConfig cfg;
  cfg.method = Method::BB;
  cfg.r = 500;
  cfg.seed = 516;
  const auto rec = summarize(run_bb(ds, dgp.functional(), cfg));
  const auto intervals = credible_interval(rec);
  int covered = 0;
  for (const auto& [lo, hi] : intervals) {
    if (lo <= 1.0 && 1.0 <= hi) ++covered;
  }
  const double coverage = covered / static_cast<double>(intervals.size());
  CHECK(coverage >= 0.89);
  CHECK(coverage <= 1.0);
}

TEST_CASE("relative errors: identities, doubling, degenerate reference") {
  SummaryRecord ref;
  ref.mean = Eigen::VectorXd::Zero(3);
  ref.sd = Eigen::VectorXd::Constant(3, 0.5);
  ref.q025 = Eigen::VectorXd::Constant(3, -1.0);
  ref.q975 = Eigen::VectorXd::Constant(3, 1.0);
  ref.center = Eigen::VectorXd::Zero(3);

  CHECK(relative_error_cil(ref, ref) == 0.0);
  CHECK(relative_error_sd(ref, ref) == 0.0);

  SummaryRecord doubled = ref;
  doubled.q025 *= 2.0;
  doubled.q975 *= 2.0;
  CHECK(relative_error_cil(doubled, ref) == doctest::Approx(1.0).epsilon(1e-12));

  // scale invariance under common rescaling of both records
  SummaryRecord ref_scaled = ref, doubled_scaled = doubled;
  ref_scaled.q025 *= 3.0;
  ref_scaled.q975 *= 3.0;
  doubled_scaled.q025 *= 3.0;
  doubled_scaled.q975 *= 3.0;
  CHECK(relative_error_cil(doubled_scaled, ref_scaled) ==
        doctest::Approx(relative_error_cil(doubled, ref)).epsilon(1e-12));

  SummaryRecord degenerate = ref;
  degenerate.q975(1) = degenerate.q025(1);
  CHECK_THROWS_AS(relative_error_cil(ref, degenerate), DegenerateReferenceError);

  SummaryRecord short_rec = ref;
  short_rec.mean.resize(2);
  short_rec.q025.resize(2);
  short_rec.q975.resize(2);
  short_rec.sd.resize(2);
  short_rec.center.resize(2);
  CHECK_THROWS_AS(relative_error_cil(short_rec, ref), CombineError);
}

TEST_CASE("absolute mean error: raw L1 and per-coordinate readings") {
  SummaryRecord ref;
  const int q = 101;
  ref.mean = Eigen::VectorXd::Zero(q);
  ref.sd = Eigen::VectorXd::Ones(q);
  ref.q025 = Eigen::VectorXd::Constant(q, -1.0);
  ref.q975 = Eigen::VectorXd::Constant(q, 1.0);
  ref.center = Eigen::VectorXd::Zero(q);

  CHECK(absolute_error_mean(ref, ref).raw == 0.0);

  SummaryRecord shifted = ref;
  shifted.mean.array() += 0.01;
  const auto err = absolute_error_mean(shifted, ref);
  CHECK(err.raw == doctest::Approx(1.01).epsilon(1e-12));
  CHECK(err.per_coordinate == doctest::Approx(0.01).epsilon(1e-12));

  // uncentering: moving mass between center and mean changes nothing
  SummaryRecord recentered = shifted;
  recentered.center.array() += 0.25;
  recentered.mean.array() -= 0.25;
  CHECK(absolute_error_mean(recentered, ref).raw == doctest::Approx(1.01).epsilon(1e-9));
}

}  // TEST_SUITE
