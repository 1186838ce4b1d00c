#pragma once

// Log-domain kernels. Values are natural-log probabilities; -inf encodes an
// exact zero. Exponentiation happens only here, after subtracting the running
// maximum, so underflow is delayed to the final ratio.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>

namespace tube {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline bool all_equal(std::span<const double> v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] != v[0]) return false;
  return true;
}

// log(sum_i exp(v_i)); -inf entries contribute zero mass.
inline double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v)
    if (x > m) m = x;
  if (m == kNegInf) return kNegInf;  // empty or all zeros
  double s = 0.0;
  for (double x : v)
    if (x > kNegInf) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_sum_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (a == kNegInf) return kNegInf;
  return a + std::log1p(std::exp(b - a));
}

// log((1/n) sum_i exp(v_i)). -inf entries are dropped from the sum but keep
// their weight in the denominator: they are true zero contributions.
// A constant span returns its value bit-exactly (s/n == 1, log(1) == 0).
inline double log_mean_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_mean_exp: empty input");
  double m = kNegInf;
  for (double x : v)
    if (x > m) m = x;
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v)
    if (x > kNegInf) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

// Normalized exp(v_i - max) weights; -inf maps to weight 0.
inline void softmax(std::span<const double> v, std::span<double> out) {
  if (v.size() != out.size()) throw std::invalid_argument("softmax: size mismatch");
  double m = kNegInf;
  for (double x : v)
    if (x > m) m = x;
  if (m == kNegInf) throw std::invalid_argument("softmax: all weights are zero");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = (v[i] > kNegInf) ? std::exp(v[i] - m) : 0.0;
    s += out[i];
  }
  for (double& w : out) w /= s;
}

}  // namespace tube
