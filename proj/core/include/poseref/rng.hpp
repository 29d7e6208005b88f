#pragma once

#include <cstdint>
#include <string_view>

namespace poseref {

// Deterministic random stream (xoshiro256++ seeded via splitmix64). Hand-rolled so
// that identical seeds give identical streams regardless of the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; the spare value is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Inclusive range.
  int uniform_int(int lo, int hi);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a over raw bytes; used for dataset blob checksums and for deriving
// per-sequence seeds from a base seed plus string tags.
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t basis = 1469598103934665603ull);
std::uint64_t mix_seed(std::uint64_t base, std::string_view tag);

}  // namespace poseref
