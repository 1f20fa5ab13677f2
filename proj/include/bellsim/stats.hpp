#pragma once

#include <vector>

#include "bellsim/types.hpp"

namespace bellsim {

/// Total variation distance between two distributions on the same finite set.
double tv_distance(const RVec& p, const RVec& q);

/// Approximate 3-sigma bound on the TV distance of an n-sample multinomial
/// empirical distribution from its true distribution p (per-cell half-normal
/// moments, cells treated as independent).
double multinomial_tv_bound(const RVec& p, int n_samples);

/// Per-cell standardized residuals z_q = (emp_q - p_q) / sqrt(p_q(1-p_q)/n).
RVec standardized_residuals(const RVec& emp, const RVec& p, int n_samples);

/// Kolmogorov-Smirnov tail Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2).
double ks_tail(double lambda);

/// One-sample KS p-value for sorted uniform(0,1) transforms of the data.
double ks_pvalue_uniform(std::vector<double> u);

/// One-sample KS p-value against an exponential with the given rate.
double ks_pvalue_exponential(const std::vector<double>& samples, double rate);

struct SummaryStats {
  long long n = 0;
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double min = 0.0;
  double max = 0.0;
};

SummaryStats summarize(const std::vector<double>& xs);

}  // namespace bellsim
