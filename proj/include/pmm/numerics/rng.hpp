#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace pmm {

/// Reproducible random stream keyed by (seed, stream id).
///
/// The engine is std::mt19937_64 seeded through std::seed_seq, both of which
/// the standard pins bit-for-bit. Uniform and normal variates are derived
/// here rather than through std::*_distribution, whose algorithms are
/// implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Marsaglia polar method).
  double normal();
  void fill_normal(std::span<double> out);

  /// Independent child stream; deterministic in (this stream's key, index).
  RngStream split(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::vector<double> gaussian_draws(RngStream& rng, std::size_t n);

/// Mixes coordinates into a stream id (for grid cells and workers).
std::uint64_t derive_stream_id(std::uint64_t base,
                               std::span<const std::uint64_t> coords);

}  // namespace pmm
