// Deterministic random number generator (splitmix64 based).
//
// All randomness in the library flows through this generator so that runs are
// bit-reproducible across platforms and independent of thread scheduling.
// Copying an Rng copies its state: passing by value gives every callee the
// same stream, which is how common random numbers are implemented.
#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace nashdyn {

struct Rng {
  std::uint64_t state = 0;

  Rng() = default;
  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Derives an independent stream from (seed, index) pairs.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
    Rng r(seed);
    std::uint64_t a = r.next_u64();
    Rng r2(a ^ (index * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
    return r2.next_u64();
  }

  Rng fork(std::uint64_t index) const { return Rng(derive(state, index)); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1] (never zero; safe for logs).
  double uniform01_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (two uniforms per draw; stateless).
  double gaussian() {
    double u1 = uniform01_open();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  Eigen::VectorXd gaussian_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  // Filled in Eigen's (column-major) storage order.
  Eigen::MatrixXd gaussian_matrix(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = gaussian();
    return m;
  }
};

}  // namespace nashdyn
