#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "schoolrun/gologit.hpp"

using namespace schoolrun;

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

GologitFit make_fit(std::vector<double> alphas, std::vector<std::vector<double>> betas) {
  Eigen::VectorXd a = Eigen::Map<Eigen::VectorXd>(alphas.data(), alphas.size());
  Eigen::MatrixXd b(betas.size(), betas.empty() ? 0 : betas[0].size());
  for (std::size_t r = 0; r < betas.size(); ++r)
    for (std::size_t c = 0; c < betas[r].size(); ++c) b(r, c) = betas[r][c];
  return GologitFit::from_params(a, b);
}

// Inverse-CDF draw from explicit category probabilities.
GologitData draw(const Eigen::VectorXd& alphas, const Eigen::MatrixXd& betas, const Eigen::MatrixXd& X,
                 std::mt19937_64& gen) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  GologitData d;
  d.X = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double u = U(gen);
    int level = 1;
    for (Eigen::Index j = 0; j < alphas.size(); ++j) {
      if (u < sigmoid(alphas[j] + betas.row(j).dot(X.row(i)))) level = static_cast<int>(j) + 2;
    }
    d.y.push_back(level);
  }
  return d;
}

}  // namespace

TEST_CASE("cum_prob closed forms and saturation") {
  auto fit = make_fit({2, 0, -2}, {{0}, {0}, {0}});
  Eigen::VectorXd x(1);
  x << 3.7;
  CHECK(cum_prob(fit, x, 1) == doctest::Approx(0.8807970779778823).epsilon(1e-14));
  CHECK(cum_prob(fit, x, 2) == doctest::Approx(0.5));
  CHECK(cum_prob(fit, x, 3) == doctest::Approx(0.11920292202211755).epsilon(1e-14));
  auto big = make_fit({800}, {{0}});
  CHECK(cum_prob(big, x, 1) == 1.0);
  auto tiny = make_fit({-800}, {{0}});
  CHECK(cum_prob(tiny, x, 1) == 0.0);
  CHECK_THROWS_AS(cum_prob(fit, x, 0), Error);
  CHECK_THROWS_AS(cum_prob(fit, x, 4), Error);
  try {
    cum_prob(fit, x, 4);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIndexOutOfRange);
  }
}

TEST_CASE("category_probs") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  auto p = category_probs(make_fit({2, 0, -2}, {{0}, {0}, {0}}), x);
  CHECK(p[0] == doctest::Approx(0.119203).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.380797).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(0.380797).epsilon(1e-6));
  CHECK(p[3] == doctest::Approx(0.119203).epsilon(1e-6));
  CHECK(std::fabs(p.sum() - 1.0) < 1e-12);

  x[0] = 0.4;
  auto bin = category_probs(make_fit({0.3}, {{1.5}}), x);
  const double g = sigmoid(0.3 + 0.6);
  CHECK(bin.size() == 2);
  CHECK(bin[0] == doctest::Approx(1 - g));
  CHECK(bin[1] == doctest::Approx(g));

  try {
    category_probs(make_fit({-2, 0, 2}, {{0}, {0}, {0}}), x);
    FAIL("expected NegativeProbability");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNegativeProbability);
  }
}

TEST_CASE("log_likelihood value and errors") {
  GologitData d;
  d.X = Eigen::MatrixXd::Zero(1, 1);
  d.y = {2};
  Eigen::VectorXd theta(2);
  theta << 0.0, 0.0;  // M = 2, P(Y=2) = 0.5
  CHECK(log_likelihood(theta, d, 2).value == doctest::Approx(std::log(0.5)));

  Eigen::VectorXd bad(6);
  bad << -2, 0, 0, 0, 2, 0;
  d.y = {2};
  try {
    log_likelihood(bad, d, 4);
    FAIL("expected NonFiniteLikelihood");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteLikelihood);
  }
}

TEST_CASE("gradient and Hessian agree with central differences") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> N(0.0, 1.0);
  const int M = 4, K = 3;
  Eigen::MatrixXd X(100, K);
  for (int i = 0; i < 100; ++i)
    for (int k = 0; k < K; ++k) X(i, k) = N(gen);
  Eigen::VectorXd a(3);
  a << 1.5, 0.0, -1.5;
  Eigen::MatrixXd b = Eigen::MatrixXd::Constant(3, K, 0.2);
  GologitData d = draw(a, b, X, gen);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd theta((M - 1) * (K + 1));
    for (int j = 0; j < M - 1; ++j) {
      theta[j * (K + 1)] = 1.6 - 1.6 * j + 0.2 * N(gen);
      for (int k = 0; k < K; ++k) theta[j * (K + 1) + 1 + k] = 0.1 * N(gen);
    }
    const auto ll = log_likelihood(theta, d, M, true);
    const double h = 1e-5;
    for (Eigen::Index p = 0; p < theta.size(); ++p) {
      Eigen::VectorXd up = theta, dn = theta;
      up[p] += h;
      dn[p] -= h;
      const double fd = (log_likelihood(up, d, M).value - log_likelihood(dn, d, M).value) / (2 * h);
      CHECK(std::fabs(fd - ll.gradient[p]) <= 1e-6 * std::max(1.0, std::fabs(fd)));
      const Eigen::VectorXd gfd =
          (log_likelihood(up, d, M).gradient - log_likelihood(dn, d, M).gradient) / (2 * h);
      CHECK((gfd - ll.hessian.col(p)).cwiseAbs().maxCoeff() <= 1e-5 * std::max(1.0, gfd.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("intercept-only fit matches the closed form from any start") {
  const std::vector<double> counts{1314210, 41193, 39078, 6778};
  const double total = 1401259;
  const double closed = std::log(87049.0 / (total - 87049.0));
  const auto fit = fit_gologit_intercept_only(counts);
  CHECK(std::fabs(fit.alphas[0] - closed) < 1e-6);
  // Four-digit rounded reference value.
  CHECK(std::fabs(fit.alphas[0] - (-2.7147)) < 5e-4);

  GologitOptions opt;
  opt.start = Eigen::VectorXd::Zero(3);
  const auto cold = fit_gologit_intercept_only(counts, opt);
  CHECK(cold.iterations > 0);
  CHECK(std::fabs(cold.alphas[0] - closed) < 1e-6);
  CHECK(std::fabs(cold.alphas[1] - std::log((39078.0 + 6778.0) / (total - 45856.0))) < 1e-6);
  CHECK(std::fabs(cold.alphas[2] - std::log(6778.0 / (total - 6778.0))) < 1e-6);
  CHECK(cold.loglik <= 0.0);
}

TEST_CASE("fit errors") {
  GologitSpec spec;
  spec.feature_names = {"x"};
  GologitData d;
  d.X = Eigen::MatrixXd::Zero(5, 1);
  d.y = {1, 1, 1, 1, 1};
  try {
    fit_gologit(spec, d);
    FAIL("expected EmptyCategory");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyCategory);
  }

  // Level determined exactly by x: the slopes run off to infinity.
  GologitData sep;
  sep.X.resize(8, 1);
  for (int i = 0; i < 8; ++i) {
    sep.X(i, 0) = i;
    sep.y.push_back(i / 2 + 1);
  }
  try {
    fit_gologit(spec, sep);
    FAIL("expected SeparationDetected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSeparationDetected);
  }

  GologitSpec dup;
  dup.feature_names = {"a", "a"};
  CHECK_THROWS_AS(dup.validate(), Error);
}

TEST_CASE("iteration budget exhaustion reports the best iterate") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::MatrixXd X(2000, 2);
  for (int i = 0; i < X.rows(); ++i) X.row(i) << N(gen), N(gen);
  Eigen::VectorXd a(3);
  a << 1, 0, -1;
  Eigen::MatrixXd b = Eigen::MatrixXd::Constant(3, 2, 0.5);
  GologitSpec spec;
  spec.feature_names = {"u", "v"};
  spec.options.max_iter = 1;
  spec.options.start = Eigen::VectorXd::Zero(9);
  try {
    fit_gologit(spec, draw(a, b, X, gen));
    FAIL("expected NotConverged");
  } catch (const GologitNotConverged& e) {
    CHECK(e.code() == ErrorCode::kNotConverged);
    CHECK_FALSE(e.best().converged);
    CHECK(e.best().iterations == 1);
  }
}

TEST_CASE("binary case equals an independent logistic regression") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> N(0.0, 1.0);
  const int n = 3000, K = 2;
  Eigen::MatrixXd X(n, K);
  for (int i = 0; i < n; ++i) X.row(i) << N(gen), N(gen);
  Eigen::VectorXd a(1);
  a << -0.4;
  Eigen::MatrixXd b(1, K);
  b << 0.8, -0.5;
  GologitData d = draw(a, b, X, gen);

  // Newton-Raphson on P(y=1 | x) with y coded 0/1.
  Eigen::MatrixXd Z(n, K + 1);
  Z.col(0).setOnes();
  Z.rightCols(K) = X;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(K + 1);
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(K + 1);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(K + 1, K + 1);
    for (int i = 0; i < n; ++i) {
      const double p = sigmoid(Z.row(i).dot(w));
      grad += (double(d.y[i] == 2) - p) * Z.row(i).transpose();
      info += p * (1 - p) * Z.row(i).transpose() * Z.row(i);
    }
    w += info.ldlt().solve(grad);
  }
  GologitSpec spec;
  spec.M = 2;
  spec.feature_names = {"u", "v"};
  const auto fit = fit_gologit(spec, d);
  CHECK(std::fabs(fit.alphas[0] - w[0]) < 1e-8);
  CHECK(std::fabs(fit.betas(0, 0) - w[1]) < 1e-8);
  CHECK(std::fabs(fit.betas(0, 1) - w[2]) < 1e-8);
}

TEST_CASE("fit is invariant to observation order and recovers planted parameters") {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> N(0.0, 1.0);
  const int n = 50000, K = 3;
  Eigen::MatrixXd X(n, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) X(i, k) = N(gen);
  Eigen::VectorXd a(3);
  a << 1.8, 0.2, -1.6;
  Eigen::MatrixXd b(3, K);
  b << 0.5, -0.3, 0.2, 0.6, -0.2, 0.1, 0.4, -0.4, 0.3;
  GologitData d = draw(a, b, X, gen);
  GologitSpec spec;
  spec.feature_names = {"u", "v", "w"};
  const auto fit = fit_gologit(spec, d);
  CHECK(fit.converged);
  CHECK(fit.grad_max_norm < 1e-6);
  CHECK((fit.alphas - a).cwiseAbs().maxCoeff() < 0.05);
  CHECK((fit.betas - b).cwiseAbs().maxCoeff() < 0.05);

  const Eigen::MatrixXd cov = fit.covariance;
  CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-8);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  CHECK(eig.eigenvalues().minCoeff() > -1e-8);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  GologitData shuffled;
  shuffled.X.resize(n, K);
  for (int i = 0; i < n; ++i) {
    shuffled.X.row(i) = d.X.row(perm[i]);
    shuffled.y.push_back(d.y[perm[i]]);
  }
  const auto fit2 = fit_gologit(spec, shuffled);
  CHECK((fit2.theta() - fit.theta()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("marginal effects") {
  GologitData d;
  d.X = Eigen::MatrixXd::Zero(1, 1);
  d.y = {1};
  auto zero = make_fit({1, 0, -1}, {{0}, {0}, {0}});
  CHECK(marginal_effects(zero, d).effects.cwiseAbs().maxCoeff() == 0.0);

  auto one = make_fit({2, 0, -2}, {{1}, {1}, {1}});
  const auto me = marginal_effects(one, d, MarginalMode::kMEM);
  const double g2 = sigmoid(2.0);
  CHECK(me.effects(0, 0) == doctest::Approx(-g2 * (1 - g2)).epsilon(1e-12));
  CHECK(me.effects(0, 0) == doctest::Approx(-0.104994).epsilon(1e-5));
  CHECK(std::fabs(me.effects.col(0).sum()) < 1e-10);

  GologitFit unconverged = one;
  unconverged.converged = false;
  try {
    marginal_effects(unconverged, d);
    FAIL("expected UnconvergedFit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnconvergedFit);
  }
}

TEST_CASE("AME equals the derivative of the average probability, SEs follow the delta method") {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> N(0.0, 1.0);
  GologitData d;
  d.X.resize(50, 2);
  for (int i = 0; i < 50; ++i) {
    d.X.row(i) << N(gen), double(i % 2);
    d.y.push_back(1 + i % 4);
  }
  auto fit = make_fit({1.2, 0.1, -1.1}, {{0.4, -0.3}, {0.2, 0.5}, {0.6, 0.1}});
  fit.covariance = Eigen::MatrixXd::Identity(9, 9) * 0.01;
  fit.covariance(1, 5) = fit.covariance(5, 1) = 0.004;

  auto avg_probs = [&](const GologitFit& f, int k, double shift) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(4);
    for (int i = 0; i < 50; ++i) {
      Eigen::VectorXd x = d.X.row(i).transpose();
      x[k] += shift;
      acc += raw_category_probs(f, x);
    }
    return Eigen::VectorXd(acc / 50.0);
  };
  const auto me = marginal_effects(fit, d, MarginalMode::kAME);
  const double h = 1e-6;
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd fd = (avg_probs(fit, k, h) - avg_probs(fit, k, -h)) / (2 * h);
    for (int j = 0; j < 4; ++j) CHECK(me.effects(j, k) == doctest::Approx(fd[j]).epsilon(1e-7));
    CHECK(std::fabs(me.effects.col(k).sum()) < 1e-10);
  }
  // Delta method: numeric gradient of the AME with respect to theta.
  const Eigen::VectorXd theta = fit.theta();
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd grad(9);
      for (int p = 0; p < 9; ++p) {
        GologitFit up = fit, dn = fit;
        Eigen::VectorXd tu = theta, td = theta;
        tu[p] += 1e-6;
        td[p] -= 1e-6;
        up.set_theta(tu);
        dn.set_theta(td);
        grad[p] = (marginal_effects(up, d).effects(j, k) - marginal_effects(dn, d).effects(j, k)) / 2e-6;
      }
      const double se = std::sqrt(grad.dot(fit.covariance * grad));
      CHECK(me.std_errors(j, k) == doctest::Approx(se).epsilon(1e-6));
    }
  }

  const auto disc = marginal_effects(fit, d, MarginalMode::kDiscrete);
  Eigen::VectorXd on = Eigen::VectorXd::Zero(4), off = Eigen::VectorXd::Zero(4);
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd x = d.X.row(i).transpose();
    x[1] = 1;
    on += raw_category_probs(fit, x);
    x[1] = 0;
    off += raw_category_probs(fit, x);
  }
  for (int j = 0; j < 4; ++j) CHECK(disc.effects(j, 1) == doctest::Approx((on[j] - off[j]) / 50).epsilon(1e-12));
}

TEST_CASE("wald tests") {
  const auto r0 = wald_row("b", 0.0, 1.0);
  CHECK(r0.z == 0.0);
  CHECK(r0.p == doctest::Approx(1.0));
  const auto r1 = wald_row("b", 1.96, 1.0);
  CHECK(r1.p == doctest::Approx(0.04999579).epsilon(1e-6));
  CHECK(r1.ci_low == doctest::Approx(0.0));
  CHECK(r1.ci_high == doctest::Approx(3.92));

  auto fit = make_fit({0.5}, {{1.0}});
  fit.covariance = Eigen::MatrixXd::Identity(2, 2);
  const auto rows = wald_tests(fit);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].name == "alpha_1");
  CHECK(rows[1].name == "beta_1[x1]");
  fit.covariance << 1, 1, 1, 1;
  try {
    wald_tests(fit);
    FAIL("expected SingularCovariance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingularCovariance);
  }
}

TEST_CASE("fit JSON round-trip") {
  auto fit = make_fit({1.0, -1.0}, {{0.25, 0.5}, {0.75, -0.125}});
  fit.covariance = Eigen::MatrixXd::Identity(6, 6) * 0.1;
  fit.loglik = -12.5;
  fit.n_obs = 40;
  const auto back = GologitFit::from_json(fit.to_json());
  CHECK(back.theta() == fit.theta());
  CHECK(back.covariance == fit.covariance);
  CHECK(back.loglik == fit.loglik);
  CHECK(back.feature_names == fit.feature_names);
}
