#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace rapidash {

// Tensor/model scalar. Geometry always runs in double regardless of this.
#ifdef RAPIDASH_REAL32
using real_t = float;
#else
using real_t = double;
#endif

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using Mat3X = Eigen::Matrix<double, Eigen::Dynamic, 3>;  // rows of 3-vectors
using ArrayX = Eigen::Array<real_t, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Uniform in [0,1) with 53 random bits, same on every standard library.
template <class Generator>
double uniform_double(Generator& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Generator>
double uniform_double(Generator& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_double(rng);
}

// Single Box-Muller draw (cosine branch only, keeps the stream stateless).
template <class Generator>
double normal_double(Generator& rng) {
  double u1 = uniform_double(rng);
  double u2 = uniform_double(rng);
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
}

template <class Generator>
int uniform_int(Generator& rng, int n) {
  return static_cast<int>(uniform_double(rng) * n) % n;
}

// splitmix64; used to derive independent sub-seeds from one config seed.
inline uint64_t split_seed(uint64_t base, uint64_t stream) {
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace rapidash
