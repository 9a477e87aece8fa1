#pragma once

namespace schoolrun::stats {

double normal_cdf(double z);
// Two-sided tail probability P(|Z| >= |z|).
double normal_two_sided_p(double z);

// Regularized incomplete beta I_x(a, b), continued fraction (Lentz).
double incomplete_beta(double a, double b, double x);

double t_cdf(double t, double df);
double t_two_sided_p(double t, double df);
// Inverse of t_cdf for p in (0, 1).
double t_quantile(double p, double df);

}  // namespace schoolrun::stats
