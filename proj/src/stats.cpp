#include "bellsim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bellsim {

double tv_distance(const RVec& p, const RVec& q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: size mismatch");
  return 0.5 * (p - q).cwiseAbs().sum();
}

double multinomial_tv_bound(const RVec& p, int n_samples) {
  // E|emp_q - p_q| = sqrt(2 p(1-p)/(pi n)), Var = p(1-p)/n (1 - 2/pi).
  const double n = static_cast<double>(n_samples);
  double mean = 0.0, var = 0.0;
  for (int q = 0; q < p.size(); ++q) {
    const double v = p[q] * (1.0 - p[q]) / n;
    mean += std::sqrt(2.0 * v / M_PI);
    var += v * (1.0 - 2.0 / M_PI);
  }
  return 0.5 * mean + 3.0 * 0.5 * std::sqrt(var);
}

RVec standardized_residuals(const RVec& emp, const RVec& p, int n_samples) {
  RVec z(p.size());
  for (int q = 0; q < p.size(); ++q) {
    const double s = std::sqrt(std::max(p[q] * (1.0 - p[q]), 1e-300) / n_samples);
    z[q] = (emp[q] - p[q]) / s;
  }
  return z;
}

double ks_tail(double lambda) {
  if (lambda < 1e-8) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_pvalue_uniform(std::vector<double> u) {
  const int n = static_cast<int>(u.size());
  if (n == 0) throw std::invalid_argument("ks_pvalue_uniform: empty sample");
  std::sort(u.begin(), u.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    d = std::max(d, std::abs(u[i] - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - u[i]));
  }
  const double sn = std::sqrt(static_cast<double>(n));
  return ks_tail((sn + 0.12 + 0.11 / sn) * d);
}

double ks_pvalue_exponential(const std::vector<double>& samples, double rate) {
  std::vector<double> u(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) u[i] = -std::expm1(-rate * samples[i]);
  return ks_pvalue_uniform(std::move(u));
}

SummaryStats summarize(const std::vector<double>& xs) {
  SummaryStats s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -s.min;
  for (double x : xs) {
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
    const double d1 = x - s.mean;
    s.mean += d1 / ++s.n;
    s.variance += d1 * (x - s.mean);
  }
  if (s.n) s.variance /= s.n;
  return s;
}

}  // namespace bellsim
