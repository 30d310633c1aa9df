#pragma once
// Dense numeric types shared by every module.
//
// Sequence feature maps are stored time-major: row = timestep (or token),
// column = channel. Row-major storage keeps row windows contiguous, which is
// what the convolution kernels slice over.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmsd {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

/// Generic library error. Hard errors named in the contracts throw this (or a
/// subclass) with a message that names the offending entity.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// A named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

using ParamRefs = std::vector<Param*>;
using ConstParamRefs = std::vector<const Param*>;

// fan-in scaled uniform, the usual U(-1/sqrt(fan_in), 1/sqrt(fan_in))
inline void init_fan_in(Param& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
}

/// FNV-1a over raw bytes. Used for parameter fingerprints and config hashes.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_params(const ConstParamRefs& ps) {
  Fnv1a h;
  for (const Param* p : ps) {
    h.update(p->name);
    const std::int64_t shape[2] = {p->value.rows(), p->value.cols()};
    h.update(shape, sizeof(shape));
    h.update(p->value.data(), sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
  return h.digest();
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

// Row-wise softmax, numerically shifted.
inline Vec softmax(const Vec& z) {
  const double m = z.maxCoeff();
  Vec e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

inline double log_sum_exp(const Vec& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

}  // namespace lmsd
