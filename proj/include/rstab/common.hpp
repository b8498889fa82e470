#ifndef RSTAB_COMMON_HPP
#define RSTAB_COMMON_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rstab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Deterministic stream splitting: sub-seed i of a base seed is stable across
// platforms and independent of evaluation order.
inline std::uint64_t split_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// Run fn(i) for i in [0, count). Results must be written to index-keyed
// storage by the caller so the schedule cannot affect output.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace rstab

#endif
