#pragma once

#include <cstdint>

#include "ndtfuse/types.hpp"

namespace ndtfuse::sim {

/// Counter-based random stream (splitmix64 core). Every (seed, stream)
/// pair yields an independent, platform-stable sequence, so per-timestep
/// streams can be drawn in any order without changing the dataset.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  double normal(double sigma) { return sigma == 0.0 ? 0.0 : sigma * normal(); }
  Vec3 normal3(double sigma);

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace ndtfuse::sim
