#include "scalebb/rng.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace scalebb {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(SeedSpec spec) {
  // Expand (master_seed, stream_id) through SplitMix64, the seeding scheme
  // recommended for the xoshiro family.
  std::uint64_t sm = mix64(spec.master_seed) ^ mix64(mix64(spec.stream_id) + 0x632be59bd9b4e019ULL);
  for (auto& word : s_) {
    sm += 0x9e3779b97f4a7c15ULL;
    word = mix64(sm);
  }
  // The all-zero state is the one invalid state.
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_open() {
  double u;
  do {
    u = next_double();
  } while (u == 0.0);
  return u;
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
  if (bound == 0) throw InvalidParameterError("next_below: bound must be >= 1");
  if (bound == 1) return 0;
  std::uint64_t mask = ~std::uint64_t{0} >> __builtin_clzll(bound - 1);
  std::uint64_t x;
  do {
    x = next_u64() & mask;
  } while (x >= bound);
  return x;
}

double Rng::next_normal() {
  for (;;) {
    const double u = 2.0 * next_double() - 1.0;
    const double v = 2.0 * next_double() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
}

double sample_gamma(double shape, Rng& rng) {
  if (!(shape > 0.0)) {
    throw InvalidParameterError("sample_gamma: shape must be > 0");
  }
  if (shape < 1.0) {
    // Boosting identity: G(a) = G(a+1) * U^(1/a).
    for (;;) {
      const double g = sample_gamma(shape + 1.0, rng);
      const double boosted = g * std::pow(rng.next_open(), 1.0 / shape);
      if (boosted > 0.0) return boosted;
    }
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.next_normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.next_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;  // squeeze
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_beta(double a, double b, Rng& rng) {
  if (a < 0.0 || !(b > 0.0) || std::isnan(a)) {
    throw InvalidParameterError("sample_beta: requires a >= 0 and b > 0");
  }
  if (a == 0.0) return 0.0;  // degenerate convention: Beta(0, b) == 0
  const double ga = sample_gamma(a, rng);
  const double gb = sample_gamma(b, rng);
  return ga / (ga + gb);
}

double sample_skew_normal(double location, double scale, double slant, Rng& rng) {
  if (!(scale > 0.0)) {
    throw InvalidParameterError("sample_skew_normal: scale must be > 0");
  }
  const double delta = slant / std::sqrt(1.0 + slant * slant);
  const double z0 = rng.next_normal();
  const double z1 = rng.next_normal();
  const double z = delta * std::abs(z0) + std::sqrt(1.0 - delta * delta) * z1;
  return location + scale * z;
}

double sample_student_t(double df, Rng& rng) {
  if (!(df > 0.0)) {
    throw InvalidParameterError("sample_student_t: df must be > 0");
  }
  const double z = rng.next_normal();
  const double chi2 = 2.0 * sample_gamma(0.5 * df, rng);
  return z / std::sqrt(chi2 / df);
}

namespace {

std::vector<double> normalized_gammas(std::size_t m, double shape, Rng& rng) {
  if (m < 1) throw InvalidParameterError("dirichlet: m must be >= 1");
  std::vector<double> w(m);
  for (auto& wi : w) wi = sample_gamma(shape, rng);
  const double total = kahan_sum(w);
  for (auto& wi : w) wi /= total;
  // Exact zeros have probability zero; redraw the offending component so the
  // simplex-interior invariant holds unconditionally.
  for (auto& wi : w) {
    while (wi <= 0.0) wi = sample_gamma(shape, rng) / total;
  }
  return w;
}

}  // namespace

std::vector<double> dirichlet_flat(std::size_t m, Rng& rng) {
  return normalized_gammas(m, 1.0, rng);
}

std::vector<double> dirichlet_rescaled(std::size_t m, double c, Rng& rng) {
  if (!(c >= 1.0)) {
    throw InvalidParameterError("dirichlet_rescaled: concentration must be >= 1");
  }
  return normalized_gammas(m, c, rng);
}

double kahan_sum(const std::vector<double>& xs) {
  double sum = 0.0, carry = 0.0;
  for (double x : xs) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return sum;
}

void WeightVector::validate() const {
  if (indices.size() != weights.size()) {
    throw InvalidParameterError("WeightVector: indices/weights size mismatch");
  }
  if (weights.empty()) {
    throw InvalidParameterError("WeightVector: empty");
  }
  for (double w : weights) {
    if (!(w > 0.0)) throw InvalidParameterError("WeightVector: weights must be strictly positive");
  }
  const double total = kahan_sum(weights);
  if (std::abs(total - 1.0) > 1e-12) {
    throw InvalidParameterError("WeightVector: weights must sum to 1 within 1e-12");
  }
  std::unordered_set<std::int64_t> seen(indices.begin(), indices.end());
  if (seen.size() != indices.size()) {
    throw InvalidParameterError("WeightVector: indices must be distinct");
  }
}

}  // namespace scalebb
