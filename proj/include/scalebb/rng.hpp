#pragma once

#include <cstdint>
#include <vector>

#include "scalebb/errors.hpp"

namespace scalebb {

/// Identifies one reproducible variate stream.
///
/// The same (master_seed, stream_id) pair always yields the bit-identical
/// variate sequence; distinct stream_ids give statistically independent
/// streams, so parallel workers can derive their own streams without
/// coordination.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
};

/// SplitMix64 finalizer; used for seeding and stream-id derivation.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a stream id from a structured key (method tag, subset index,
/// replicate index, attempt). Collision-free in practice: the words are
/// chained through the SplitMix64 finalizer.
constexpr std::uint64_t derive_stream(std::uint64_t tag, std::uint64_t a = 0,
                                      std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(tag);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

/// xoshiro256++ generator seeded from a SeedSpec.
///
/// All sampling in the library flows through this type. Instances are cheap
/// to create (engines make one per Monte Carlo work item) and hold no shared
/// state, so draws are reproducible under any thread schedule.
class Rng {
 public:
  explicit Rng(SeedSpec spec);

  std::uint64_t next_u64();

  /// Uniform on [0, 1), 53-bit resolution.
  double next_double();

  /// Uniform on (0, 1); never returns 0 (safe under log).
  double next_open();

  /// Uniform integer in [0, bound); bound >= 1. Unbiased (masked rejection).
  std::uint64_t next_below(std::uint64_t bound);

  /// Standard normal via the Marsaglia polar method (no cached spare).
  double next_normal();

 private:
  std::uint64_t s_[4];
};

// ---------------------------------------------------------------------------
// Distributions. Each sampler validates its parameters and throws
// InvalidParameterError outside the documented domain.

/// One Gamma(shape, scale 1) draw, shape > 0. Marsaglia-Tsang squeeze
/// rejection; shapes below 1 are boosted through Gamma(shape+1) * U^(1/shape)
/// so there is a single code path with no accuracy cliff at shape = 1.
/// The result is strictly positive (exact zeros are redrawn).
double sample_gamma(double shape, Rng& rng);

/// Beta(a, b) via two Gammas. a = 0 is accepted and returns exactly 0,
/// the noninformative limit used when a Dirichlet-process engine degrades
/// to the plain Bayesian bootstrap.
double sample_beta(double a, double b, Rng& rng);

/// Skew-normal draw through the two-normal convolution representation:
/// delta*|Z0| + sqrt(1-delta^2)*Z1 with delta = slant/sqrt(1+slant^2).
double sample_skew_normal(double location, double scale, double slant, Rng& rng);

/// Student-t with df > 0 degrees of freedom (normal over scaled chi-square).
double sample_student_t(double df, Rng& rng);

/// m weights from the flat Dirichlet(1,...,1): Gamma(1,1) draws normalized
/// by their (compensated) sum. All weights strictly positive, sum 1 within
/// 1e-12.
std::vector<double> dirichlet_flat(std::size_t m, Rng& rng);

/// m weights from Dirichlet(c,...,c), c >= 1. c is the concentration that
/// makes a size-b subset's weight law mimic a size-n bootstrap (c = n/b);
/// rescaling never shrinks concentration here, hence the c >= 1 domain.
std::vector<double> dirichlet_rescaled(std::size_t m, double c, Rng& rng);

// Convenience overloads with a one-shot stream.
inline double sample_gamma(double shape, SeedSpec stream) {
  Rng rng(stream);
  return sample_gamma(shape, rng);
}
inline double sample_beta(double a, double b, SeedSpec stream) {
  Rng rng(stream);
  return sample_beta(a, b, rng);
}
inline std::vector<double> dirichlet_flat(std::size_t m, SeedSpec stream) {
  Rng rng(stream);
  return dirichlet_flat(m, rng);
}
inline std::vector<double> dirichlet_rescaled(std::size_t m, double c, SeedSpec stream) {
  Rng rng(stream);
  return dirichlet_rescaled(m, c, rng);
}

/// Compensated (Kahan) sum; keeps weight-vector normalization checks exact
/// to a few ulps even for block sizes near 1e6.
double kahan_sum(const std::vector<double>& xs);

/// A point on the probability simplex attached to a set of row ids.
struct WeightVector {
  std::vector<std::int64_t> indices;
  std::vector<double> weights;

  /// Throws InvalidParameterError unless: sizes match, indices are distinct,
  /// all weights are strictly positive and sum to 1 within 1e-12.
  void validate() const;
};

}  // namespace scalebb
