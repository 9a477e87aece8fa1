#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "schoolrun/ols.hpp"
#include "schoolrun/stats.hpp"

using namespace schoolrun;

namespace {

std::vector<std::string> names_for(int k) {
  std::vector<std::string> n;
  for (int i = 0; i < k; ++i) n.push_back("x" + std::to_string(i + 1));
  return n;
}

}  // namespace

TEST_CASE("incomplete beta and t distribution against Boost") {
  for (double a : {0.5, 1.0, 2.5, 10.0, 421.5}) {
    for (double b : {0.5, 1.0, 3.0, 40.0}) {
      for (double x : {1e-6, 0.01, 0.3, 0.5, 0.77, 0.999}) {
        const double ref = boost::math::ibeta(a, b, x);
        CHECK(std::fabs(stats::incomplete_beta(a, b, x) - ref) <= 1e-12 * std::max(1.0, ref));
      }
    }
  }
  for (double df : {1.0, 3.0, 12.0, 820.0}) {
    boost::math::students_t dist(df);
    for (double t : {-40.0, -3.1, -1.0, 0.0, 0.4, 1.96, 7.5}) {
      CHECK(std::fabs(stats::t_cdf(t, df) - boost::math::cdf(dist, t)) < 1e-12);
      const double p2 = 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
      CHECK(std::fabs(stats::t_two_sided_p(t, df) - p2) < 1e-12);
    }
    for (double p : {0.001, 0.025, 0.5, 0.9, 0.975}) {
      CHECK(stats::t_quantile(p, df) == doctest::Approx(boost::math::quantile(dist, p)).epsilon(1e-10));
    }
  }
  CHECK(stats::normal_two_sided_p(1.96) == doctest::Approx(0.0499957902).epsilon(1e-8));
}

TEST_CASE("noiseless plane is recovered exactly") {
  Eigen::MatrixXd X(6, 2);
  X << 0, 1, 1, 0, 2, 3, 3, 1, 4, 4, 5, 2;
  Eigen::VectorXd y = 2 * X.col(0) - X.col(1) + Eigen::VectorXd::Constant(6, 3);
  const auto fit = fit_ols(X, y, names_for(2));
  CHECK(std::fabs(fit.betas[0] - 3) < 1e-8);
  CHECK(std::fabs(fit.betas[1] - 2) < 1e-8);
  CHECK(std::fabs(fit.betas[2] + 1) < 1e-8);
  CHECK(fit.r2 == doctest::Approx(1.0));
}

TEST_CASE("five-point hand dataset") {
  Eigen::MatrixXd X(5, 1);
  X << 1, 2, 3, 4, 5;
  Eigen::VectorXd y(5);
  y << 2, 4, 5, 4, 5;
  const auto fit = fit_ols(X, y, names_for(1));
  // Sxx = 10, Sxy = 6, RSS = 2.4, s^2 = 0.8.
  CHECK(fit.betas[0] == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(fit.betas[1] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(fit.std_errors[1] == doctest::Approx(std::sqrt(0.08)).epsilon(1e-12));
  CHECK(fit.std_errors[0] == doctest::Approx(std::sqrt(0.88)).epsilon(1e-12));
  CHECK(fit.r2 == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(fit.adj_r2 == doctest::Approx(1 - 0.4 * 4 / 3).epsilon(1e-12));
  CHECK(fit.adj_r2 <= fit.r2);
  CHECK(fit.df == 3);
  boost::math::students_t dist(3);
  const double t = 0.6 / std::sqrt(0.08);
  CHECK(fit.p_values[1] == doctest::Approx(2 * boost::math::cdf(boost::math::complement(dist, t))).epsilon(1e-10));
  const double q = boost::math::quantile(dist, 0.975);
  CHECK(fit.ci_low[1] == doctest::Approx(0.6 - q * std::sqrt(0.08)).epsilon(1e-10));
}

TEST_CASE("rank deficiency names the dependent columns") {
  Eigen::MatrixXd X(8, 3);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> N;
  for (int i = 0; i < 8; ++i) X.row(i) << N(gen), N(gen), 0.0;
  X.col(2) = X.col(0);
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(8, 0, 1);
  try {
    fit_ols(X, y, names_for(3));
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kRankDeficient);
    const std::string msg = e.what();
    CHECK(msg.find("x1") != std::string::npos);
    CHECK(msg.find("x3") != std::string::npos);
    CHECK(msg.find("x2") == std::string::npos);
  }
}

TEST_CASE("share fallback drops the configured column") {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> U(0.1, 1.0);
  const int n = 40;
  Eigen::MatrixXd X(n, 4);
  for (int i = 0; i < n; ++i) {
    const double a = U(gen), b = U(gen), c = U(gen), s = a + b + c;
    X.row(i) << U(gen), a / s, b / s, c / s;
  }
  Eigen::VectorXd y = X.col(0) + 0.5 * X.col(1) + Eigen::VectorXd::Constant(n, 0.1);
  const std::vector<std::string> names{"d", "s1", "s2", "s3"};
  const std::vector<std::string> shares{"s1", "s2", "s3"};
  Warnings w;
  const auto fit = fit_ols_with_share_fallback(X, y, names, shares, "s3", &w);
  CHECK(fit.dropped == std::vector<std::string>{"s3"});
  CHECK(fit.names == std::vector<std::string>{"intercept", "d", "s1", "s2"});
  REQUIRE(w.size() == 1);
  CHECK(w[0].code == WarningCode::kCollinearShareDropped);
}

TEST_CASE("residuals are orthogonal and row order does not matter") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> N;
  const int n = 200, k = 6;
  Eigen::MatrixXd X(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) X(i, j) = N(gen);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = 1 + X.row(i).sum() + N(gen);
  const auto fit = fit_ols(X, y, names_for(k));
  CHECK(std::fabs(fit.residuals.sum()) < 1e-8);
  for (int j = 0; j < k; ++j) CHECK(std::fabs(X.col(j).dot(fit.residuals)) < 1e-8);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  Eigen::MatrixXd Xp(n, k);
  Eigen::VectorXd yp(n);
  for (int i = 0; i < n; ++i) {
    Xp.row(i) = X.row(perm[i]);
    yp[i] = y[perm[i]];
  }
  const auto fit2 = fit_ols(Xp, yp, names_for(k));
  CHECK((fit2.betas - fit.betas).cwiseAbs().maxCoeff() < 1e-10);

  const auto back = OlsFit::from_json(fit.to_json());
  CHECK(back.betas == fit.betas);
  CHECK(back.p_values == fit.p_values);
  CHECK(back.names == fit.names);
}

TEST_CASE("p-values of true effects vanish as noise shrinks") {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> N;
  const int n = 100;
  Eigen::MatrixXd X(n, 2);
  for (int i = 0; i < n; ++i) X.row(i) << N(gen), N(gen);
  double prev = 1.0;
  for (double sd : {1e-1, 1e-3, 1e-6}) {
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = 0.3 * X(i, 0) - 0.2 * X(i, 1) + sd * N(gen);
    const auto fit = fit_ols(X, y, names_for(2));
    CHECK(fit.p_values[1] <= prev);
    prev = fit.p_values[1];
  }
  CHECK(prev < 1e-100);
}

TEST_CASE("VIF") {
  Eigen::MatrixXd O(4, 2);
  O << 1, 1, 1, -1, -1, 1, -1, -1;
  const auto ortho = vif(O, names_for(2));
  CHECK(ortho.values[0] == doctest::Approx(1.0));
  CHECK(ortho.values[1] == doctest::Approx(1.0));

  Eigen::MatrixXd D(6, 2);
  D << 1, 1, 2, 2, 3, 3, 5, 5, 7, 7, 8, 8;
  try {
    vif(D, names_for(2));
    FAIL("expected PerfectCollinearity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kPerfectCollinearity);
  }

  std::mt19937_64 gen(6);
  std::normal_distribution<double> N;
  const int n = 300;
  Eigen::MatrixXd X(n, 4);
  for (int i = 0; i < n; ++i) {
    const double a = N(gen);
    X.row(i) << a, a + 0.1 * N(gen), N(gen), 0.5 * N(gen) + 2;
  }
  const auto rep = vif(X, names_for(4));
  // Oracle 1: normal-equations auxiliary regression.
  for (int c = 0; c < 4; ++c) {
    Eigen::MatrixXd Z(n, 4);
    Z.col(0).setOnes();
    int w = 1;
    for (int o = 0; o < 4; ++o)
      if (o != c) Z.col(w++) = X.col(o);
    const Eigen::VectorXd b = (Z.transpose() * Z).ldlt().solve(Z.transpose() * X.col(c));
    const double rss = (X.col(c) - Z * b).squaredNorm();
    const double tss = (X.col(c).array() - X.col(c).mean()).matrix().squaredNorm();
    CHECK(std::fabs(rep.values[c] - tss / rss) < 1e-10 * std::max(1.0, rep.values[c]));
    CHECK(rep.values[c] >= 1.0 - 1e-10);
  }
  // Oracle 2: diagonal of the inverse correlation matrix.
  Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
  Eigen::VectorXd sd = (C.colwise().squaredNorm() / n).cwiseSqrt();
  C = C * sd.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd R = C.transpose() * C / n;
  const Eigen::MatrixXd Rinv = R.inverse();
  for (int c = 0; c < 4; ++c) CHECK(rep.values[c] == doctest::Approx(Rinv(c, c)).epsilon(1e-9));
  CHECK(rep.flagged() == std::vector<std::string>{"x1", "x2"});
}

TEST_CASE("significant subset") {
  OlsFit fit;
  fit.names = {"intercept", "a", "b", "c"};
  fit.p_values.resize(4);
  fit.p_values << 0.0, 0.09, 0.11, 0.01;
  CHECK(significant_subset(fit) == std::vector<std::string>{"a", "c"});
  fit.p_values << 0.0, 0.5, 0.5, 0.5;
  try {
    significant_subset(fit);
    FAIL("expected NoSignificantFeatures");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoSignificantFeatures);
  }
}
