#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgqa {

using Vec = std::vector<double>;

struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct lookup_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct capacity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Question has no alias-matching span / gold span not enumerable.
struct resolution_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG wrapper. mt19937_64 output is pinned by the standard;
// the distribution helpers are hand-rolled so streams are portable.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double next_double() { return (gen_() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) { return gen_() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// softmax with max-subtraction, in place over logits
inline Vec softmax(const Vec& logits) {
  if (logits.empty()) throw shape_error("softmax: empty logits");
  double mx = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Given y = softmax(logits) and dL/dy, returns dL/dlogits.
inline Vec softmax_backward(const Vec& y, const Vec& grad_y) {
  if (y.size() != grad_y.size()) throw shape_error("softmax_backward: size mismatch");
  double dot = 0.0;
  for (size_t i = 0; i < y.size(); ++i) dot += y[i] * grad_y[i];
  Vec out(y.size());
  for (size_t i = 0; i < y.size(); ++i) out[i] = y[i] * (grad_y[i] - dot);
  return out;
}

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw shape_error("dot: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw shape_error("axpy: size mismatch");
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace kgqa
