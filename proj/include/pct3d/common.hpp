#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pct3d {

// Dense row-major coordinate blocks (n x 3). All geometry APIs take these so
// that flat tensor storage can be mapped without copies.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using PointsRef = Eigen::Ref<const PointMatrix>;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class RunMode { kTrain, kEval };

// Dimension/extent mismatches between operands.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid argument values (counts out of range, bad labels, ...).
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Index outside its valid range.
struct BoundsError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// API used against its contract (non-scalar loss, task mismatch, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// A kernel produced NaN/Inf.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; carries the 1-based offending line.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"),
        line_number(line) {}
  int line_number;
};

// Bad configuration (unknown key, inconsistent dimensions). The CLI maps
// these to usage errors (exit 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic random stream. Draws are derived from raw mt19937_64 words
// instead of std distributions so that sequences are identical across
// standard libraries.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t next_u64() { return rng_(); }

  // [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    return static_cast<int>(rng_() % static_cast<std::uint64_t>(n));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * EIGEN_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = rng_() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  // Uniform rotation via Shoemake's quaternion method.
  Eigen::Matrix3d rotation() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double u3 = uniform();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    const Eigen::Quaterniond q(b * std::cos(2.0 * EIGEN_PI * u3),
                               a * std::sin(2.0 * EIGEN_PI * u2),
                               a * std::cos(2.0 * EIGEN_PI * u2),
                               b * std::sin(2.0 * EIGEN_PI * u3));
    return q.toRotationMatrix();
  }

 private:
  std::mt19937_64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pct3d
