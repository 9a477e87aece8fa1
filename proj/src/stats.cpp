#include "schoolrun/stats.hpp"

#include <cmath>
#include <limits>

#include "schoolrun/error.hpp"

namespace schoolrun::stats {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;

double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "incomplete_beta needs a, b > 0");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double t_cdf(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::kInvalidArgument, "t_cdf needs df > 0");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t > 0 ? 1.0 - tail : tail;
}

double t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::kInvalidArgument, "t_two_sided_p needs df > 0");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

double t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::kInvalidArgument, "t_quantile needs p in (0,1)");
  if (p == 0.5) return 0.0;
  // Bracket, then Newton steps guarded by bisection.
  double lo = -1.0, hi = 1.0;
  while (t_cdf(lo, df) > p) lo *= 2.0;
  while (t_cdf(hi, df) < p) hi *= 2.0;
  double x = 0.5 * (lo + hi);
  const double log_norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
                          0.5 * std::log(df * M_PI);
  for (int it = 0; it < 200; ++it) {
    const double f = t_cdf(x, df) - p;
    if (f == 0.0) return x;
    if (f > 0.0) hi = x; else lo = x;
    const double dens = std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(x * x / df));
    double next = x - f / dens;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - x) <= 1e-15 * std::max(1.0, std::fabs(x))) return next;
    x = next;
  }
  return x;
}

}  // namespace schoolrun::stats
