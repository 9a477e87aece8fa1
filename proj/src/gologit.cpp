#include "schoolrun/gologit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "schoolrun/csv.hpp"
#include "schoolrun/stats.hpp"

namespace schoolrun {

using nlohmann::json;

const std::array<const char*, 4> kCongestionLabels = {"smooth", "slow", "congested",
                                                      "severely_congested"};

namespace {

constexpr double kLogFloor = 1e-12;

// Per-row cumulative probabilities g_0 = 1, g_1..g_{M-1}, g_M = 0.
void cumulative(const Eigen::VectorXd& theta, int M, const double* x, std::size_t K,
                std::vector<double>& g) {
  g.assign(static_cast<std::size_t>(M) + 1, 0.0);
  g[0] = 1.0;
  const std::size_t block = K + 1;
  for (int j = 1; j < M; ++j) {
    const std::size_t off = static_cast<std::size_t>(j - 1) * block;
    double eta = theta[off];
    for (std::size_t k = 0; k < K; ++k) eta += theta[off + 1 + k] * x[k];
    g[j] = logistic(eta);
  }
  g[M] = 0.0;
}

Eigen::VectorXd row_of(const Eigen::MatrixXd& X, std::size_t i) { return X.row(i).transpose(); }

}  // namespace

void GologitSpec::validate() const {
  if (M < 2) throw Error(ErrorCode::kInvalidArgument, "gologit needs M >= 2");
  if (feature_names.empty()) throw Error(ErrorCode::kInvalidArgument, "gologit needs features");
  std::set<std::string> seen(feature_names.begin(), feature_names.end());
  if (seen.size() != feature_names.size()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate gologit feature names");
  }
}

double GologitData::total_weight() const {
  if (weights.empty()) return static_cast<double>(y.size());
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

GologitData GologitData::collapsed() const {
  std::map<std::pair<std::vector<double>, int>, double> groups;
  std::vector<double> key(static_cast<std::size_t>(X.cols()));
  for (std::size_t i = 0; i < rows(); ++i) {
    for (Eigen::Index k = 0; k < X.cols(); ++k) key[k] = X(i, k);
    groups[{key, y[i]}] += weight(i);
  }
  GologitData out;
  out.X.resize(static_cast<Eigen::Index>(groups.size()), X.cols());
  Eigen::Index r = 0;
  for (const auto& [k, w] : groups) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) out.X(r, c) = k.first[c];
    out.y.push_back(k.second);
    out.weights.push_back(w);
    ++r;
  }
  return out;
}

Eigen::VectorXd GologitFit::theta() const {
  const std::size_t K = this->K();
  Eigen::VectorXd t((M - 1) * (K + 1));
  for (int j = 0; j < M - 1; ++j) {
    t[j * (K + 1)] = alphas[j];
    for (std::size_t k = 0; k < K; ++k) t[j * (K + 1) + 1 + k] = betas(j, k);
  }
  return t;
}

void GologitFit::set_theta(const Eigen::VectorXd& t) {
  const std::size_t K = this->K();
  for (int j = 0; j < M - 1; ++j) {
    alphas[j] = t[j * (K + 1)];
    for (std::size_t k = 0; k < K; ++k) betas(j, k) = t[j * (K + 1) + 1 + k];
  }
}

GologitFit GologitFit::from_params(const Eigen::VectorXd& alphas, const Eigen::MatrixXd& betas,
                                   std::vector<std::string> names) {
  if (betas.rows() != alphas.size()) {
    throw Error(ErrorCode::kInvalidArgument, "betas need one row per intercept");
  }
  GologitFit f;
  f.M = static_cast<int>(alphas.size()) + 1;
  f.alphas = alphas;
  f.betas = betas;
  if (names.empty()) {
    for (Eigen::Index k = 0; k < betas.cols(); ++k) names.push_back("x" + std::to_string(k + 1));
  }
  f.feature_names = std::move(names);
  f.converged = true;
  return f;
}

json GologitFit::to_json() const {
  json j;
  j["M"] = M;
  j["feature_names"] = feature_names;
  j["alphas"] = std::vector<double>(alphas.data(), alphas.data() + alphas.size());
  json b = json::array();
  for (Eigen::Index r = 0; r < betas.rows(); ++r) {
    std::vector<double> row(betas.cols());
    for (Eigen::Index c = 0; c < betas.cols(); ++c) row[c] = betas(r, c);
    b.push_back(row);
  }
  j["betas"] = b;
  json cov = json::array();
  for (Eigen::Index r = 0; r < covariance.rows(); ++r) {
    std::vector<double> row(covariance.cols());
    for (Eigen::Index c = 0; c < covariance.cols(); ++c) row[c] = covariance(r, c);
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["loglik"] = loglik;
  j["n_obs"] = n_obs;
  j["iterations"] = iterations;
  j["grad_max_norm"] = grad_max_norm;
  j["flags"] = {{"converged", converged},
                {"negative_probability_rows", negative_probability_rows}};
  return j;
}

GologitFit GologitFit::from_json(const json& j) {
  try {
    const auto a = j.at("alphas").get<std::vector<double>>();
    const auto b = j.at("betas").get<std::vector<std::vector<double>>>();
    const auto names = j.at("feature_names").get<std::vector<std::string>>();
    Eigen::VectorXd alphas = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    Eigen::MatrixXd betas(static_cast<Eigen::Index>(b.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t r = 0; r < b.size(); ++r) {
      if (b[r].size() != names.size()) throw Error(ErrorCode::kParseError, "gologit fit: ragged betas");
      for (std::size_t c = 0; c < names.size(); ++c) betas(r, c) = b[r][c];
    }
    GologitFit f = from_params(alphas, betas, names);
    const auto cov = j.at("covariance").get<std::vector<std::vector<double>>>();
    f.covariance.resize(static_cast<Eigen::Index>(cov.size()), static_cast<Eigen::Index>(cov.size()));
    for (std::size_t r = 0; r < cov.size(); ++r) {
      for (std::size_t c = 0; c < cov.size(); ++c) f.covariance(r, c) = cov[r].at(c);
    }
    f.loglik = j.at("loglik").get<double>();
    f.n_obs = j.at("n_obs").get<double>();
    f.iterations = j.value("iterations", 0);
    f.grad_max_norm = j.value("grad_max_norm", 0.0);
    f.converged = j.at("flags").at("converged").get<bool>();
    f.negative_probability_rows = j.at("flags").value("negative_probability_rows", std::size_t{0});
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("gologit fit: ") + e.what());
  }
}

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double cum_prob(const GologitFit& fit, const Eigen::VectorXd& x, int j) {
  if (j < 1 || j > fit.M - 1) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "split index " + std::to_string(j) + " outside 1.." + std::to_string(fit.M - 1));
  }
  if (x.size() != fit.betas.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "covariate vector has wrong length");
  }
  return logistic(fit.alphas[j - 1] + fit.betas.row(j - 1).dot(x));
}

Eigen::VectorXd raw_category_probs(const GologitFit& fit, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(fit.M + 1);
  g[0] = 1.0;
  for (int j = 1; j < fit.M; ++j) g[j] = cum_prob(fit, x, j);
  g[fit.M] = 0.0;
  Eigen::VectorXd p(fit.M);
  for (int j = 0; j < fit.M; ++j) p[j] = g[j] - g[j + 1];
  return p;
}

Eigen::VectorXd category_probs(const GologitFit& fit, const Eigen::VectorXd& x) {
  Eigen::VectorXd p = raw_category_probs(fit, x);
  for (int j = 0; j < fit.M; ++j) {
    if (p[j] < -1e-12) {
      throw Error(ErrorCode::kNegativeProbability,
                  "P(Y=" + std::to_string(j + 1) + ") = " + std::to_string(p[j]) + " is negative");
    }
  }
  return p;
}

namespace {

// Shared kernel. With `clamp`, probabilities below the floor are replaced by
// the floor instead of raising.
LogLikelihood evaluate(const Eigen::VectorXd& theta, const GologitData& data, int M,
                       bool with_hessian, bool clamp) {
  const std::size_t K = static_cast<std::size_t>(data.X.cols());
  const std::size_t block = K + 1;
  const std::size_t P = static_cast<std::size_t>(M - 1) * block;
  if (static_cast<std::size_t>(theta.size()) != P) {
    throw Error(ErrorCode::kInvalidArgument, "parameter vector has wrong length");
  }
  LogLikelihood out;
  out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P));
  if (with_hessian) out.hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));

  std::vector<double> g;
  std::vector<double> xt(block);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const int yi = data.y[i];
    if (yi < 1 || yi > M) throw Error(ErrorCode::kOutOfRange, "outcome level outside 1..M");
    const double w = data.weight(i);
    if (w == 0.0) continue;
    xt[0] = 1.0;
    for (std::size_t k = 0; k < K; ++k) xt[1 + k] = data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    cumulative(theta, M, xt.data() + 1, K, g);
    double p = g[yi - 1] - g[yi];
    if (!(p > 0.0)) {
      if (!clamp) {
        throw Error(ErrorCode::kNonFiniteLikelihood,
                    "row " + std::to_string(i) + " has probability " + std::to_string(p));
      }
    }
    const double pe = clamp ? std::max(p, kLogFloor) : p;
    out.value += w * std::log(pe);

    // Upper split (y-1) contributes +g', lower split (y) contributes -g'.
    const int up = yi - 1;  // split index or 0 when none
    const int lo = yi;      // split index or M when none
    const double dup = up >= 1 ? g[up] * (1.0 - g[up]) : 0.0;
    const double dlo = lo <= M - 1 ? -g[lo] * (1.0 - g[lo]) : 0.0;
    const std::size_t oup = up >= 1 ? static_cast<std::size_t>(up - 1) * block : 0;
    const std::size_t olo = lo <= M - 1 ? static_cast<std::size_t>(lo - 1) * block : 0;
    if (up >= 1) {
      for (std::size_t a = 0; a < block; ++a) out.gradient[oup + a] += w * dup * xt[a] / pe;
    }
    if (lo <= M - 1) {
      for (std::size_t a = 0; a < block; ++a) out.gradient[olo + a] += w * dlo * xt[a] / pe;
    }
    if (with_hessian) {
      // d2 log P = d2P / P - dP dP' / P^2
      const double cup = up >= 1 ? dup * (1.0 - 2.0 * g[up]) / pe : 0.0;
      const double clo = lo <= M - 1 ? -(-dlo) * (1.0 - 2.0 * g[lo]) / pe : 0.0;
      for (std::size_t a = 0; a < block; ++a) {
        for (std::size_t b = 0; b < block; ++b) {
          const double xx = w * xt[a] * xt[b];
          if (up >= 1) {
            out.hessian(oup + a, oup + b) += xx * (cup - dup * dup / (pe * pe));
          }
          if (lo <= M - 1) {
            out.hessian(olo + a, olo + b) += xx * (clo - dlo * dlo / (pe * pe));
          }
          if (up >= 1 && lo <= M - 1) {
            const double cross = -xx * dup * dlo / (pe * pe);
            out.hessian(oup + a, olo + b) += cross;
            out.hessian(olo + b, oup + a) += cross;
          }
        }
      }
    }
  }
  if (!std::isfinite(out.value)) {
    throw Error(ErrorCode::kNonFiniteLikelihood, "log-likelihood is not finite");
  }
  return out;
}

double max_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Inverse of -H when it is positive definite.
bool inverse_information(const Eigen::MatrixXd& hessian, Eigen::MatrixXd& inv) {
  const Eigen::MatrixXd info = -hessian;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) return false;
  inv = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  inv = 0.5 * (inv + inv.transpose()).eval();
  return inv.allFinite();
}

}  // namespace

LogLikelihood log_likelihood(const Eigen::VectorXd& theta, const GologitData& data, int M,
                             bool with_hessian) {
  return evaluate(theta, data, M, with_hessian, false);
}

namespace {

GologitFit fit_impl(const GologitSpec& spec, const GologitData& raw, Warnings* warnings) {
  const int M = spec.M;
  const auto K = static_cast<std::size_t>(raw.X.cols());
  if (K != spec.feature_names.size()) {
    throw Error(ErrorCode::kInvalidArgument, "design has " + std::to_string(K) +
                                                 " columns but spec names " +
                                                 std::to_string(spec.feature_names.size()));
  }
  if (raw.X.rows() != static_cast<Eigen::Index>(raw.y.size())) {
    throw Error(ErrorCode::kInvalidArgument, "design rows and outcomes differ in length");
  }
  const GologitData data = raw.collapsed();

  std::vector<double> counts(static_cast<std::size_t>(M), 0.0);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (data.y[i] < 1 || data.y[i] > M) throw Error(ErrorCode::kOutOfRange, "outcome level outside 1..M");
    counts[data.y[i] - 1] += data.weight(i);
  }
  for (int j = 0; j < M; ++j) {
    if (!(counts[j] > 0.0)) {
      throw Error(ErrorCode::kEmptyCategory, "category " + std::to_string(j + 1) + " never occurs");
    }
  }
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);

  GologitFit fit = GologitFit::from_params(Eigen::VectorXd::Zero(M - 1),
                                           Eigen::MatrixXd::Zero(M - 1, static_cast<Eigen::Index>(K)),
                                           spec.feature_names);
  fit.converged = false;
  fit.n_obs = total;
  {
    double above = total;
    for (int j = 1; j < M; ++j) {
      above -= counts[j - 1];
      fit.alphas[j - 1] = std::log(above / (total - above));
    }
  }

  if (spec.options.start) {
    if (spec.options.start->size() != fit.theta().size()) {
      throw Error(ErrorCode::kInvalidArgument, "start vector has wrong length");
    }
    fit.set_theta(*spec.options.start);
  }
  Eigen::VectorXd theta = fit.theta();
  const auto P = theta.size();
  LogLikelihood cur = evaluate(theta, data, M, true, true);
  Eigen::MatrixXd hinv;  // approximates the inverse of -H (we maximize)
  auto reset_hinv = [&](const LogLikelihood& at) {
    if (!inverse_information(at.hessian, hinv)) {
      hinv = Eigen::MatrixXd::Identity(P, P) / std::max(total, 1.0);
    }
  };
  reset_hinv(cur);

  const GologitOptions& opt = spec.options;
  int iter = 0;
  bool stalled = false;
  for (; iter < opt.max_iter; ++iter) {
    if (max_norm(cur.gradient) < opt.grad_tol) break;
    Eigen::VectorXd dir = hinv * cur.gradient;
    double slope = cur.gradient.dot(dir);
    if (!(slope > 0.0)) {
      cur = evaluate(theta, data, M, true, true);
      reset_hinv(cur);
      dir = hinv * cur.gradient;
      slope = cur.gradient.dot(dir);
    }
    double step = 1.0;
    bool accepted = false;
    LogLikelihood next;
    Eigen::VectorXd trial;
    const double slack = 1e-13 * std::max(1.0, std::fabs(cur.value));
    for (int ls = 0; ls < 60; ++ls) {
      trial = theta + step * dir;
      next = evaluate(trial, data, M, false, true);
      if (next.value >= cur.value + 1e-4 * step * slope - slack) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Close to the optimum the value may stop resolving; try a Newton step
      // judged by the gradient instead.
      cur = evaluate(theta, data, M, true, true);
      Eigen::MatrixXd newton;
      if (inverse_information(cur.hessian, newton)) {
        trial = theta + newton * cur.gradient;
        next = evaluate(trial, data, M, false, true);
        if (max_norm(next.gradient) < max_norm(cur.gradient)) {
          accepted = true;
          hinv = newton;
        }
      }
      if (!accepted) {
        stalled = true;
        break;
      }
    }
    const Eigen::VectorXd s = trial - theta;
    const Eigen::VectorXd yv = cur.gradient - next.gradient;  // gradient of -loglik
    theta = trial;
    if (max_norm(theta) > opt.divergence_bound) {
      fit.set_theta(theta);
      throw Error(ErrorCode::kSeparationDetected,
                  "coefficients diverge (max |theta| = " + std::to_string(max_norm(theta)) +
                      "); outcome is separated by the covariates");
    }
    const double sy = s.dot(yv);
    if (sy > 1e-300) {
      const Eigen::VectorXd hy = hinv * yv;
      const double rho = 1.0 / sy;
      hinv += (rho * rho * yv.dot(hy) + rho) * (s * s.transpose()) -
              rho * (hy * s.transpose() + s * hy.transpose());
    }
    cur = std::move(next);
  }

  fit.set_theta(theta);
  const LogLikelihood final_eval = evaluate(theta, data, M, true, true);
  fit.loglik = final_eval.value;
  fit.grad_max_norm = max_norm(final_eval.gradient);
  fit.iterations = iter;
  fit.converged = fit.grad_max_norm < opt.grad_tol;
  if (!inverse_information(final_eval.hessian, fit.covariance)) {
    fit.covariance = Eigen::MatrixXd::Constant(P, P, std::numeric_limits<double>::quiet_NaN());
  }

  fit.negative_probability_rows = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const Eigen::VectorXd p = raw_category_probs(fit, row_of(data.X, i));
    if ((p.array() < 0.0).any()) ++fit.negative_probability_rows;
  }
  if (fit.negative_probability_rows > 0 && warnings) {
    warnings->push_back({WarningCode::kNegativePredictedProbability,
                         std::to_string(fit.negative_probability_rows) +
                             " distinct training rows have a negative predicted probability"});
  }
  if (!fit.converged) {
    throw GologitNotConverged(
        std::string(stalled ? "line search stalled" : "iteration limit reached") +
            " with gradient max-norm " + std::to_string(fit.grad_max_norm),
        fit);
  }
  return fit;
}

}  // namespace

GologitFit fit_gologit(const GologitSpec& spec, const GologitData& data, Warnings* warnings) {
  spec.validate();
  return fit_impl(spec, data, warnings);
}

GologitFit fit_gologit_intercept_only(std::span<const double> level_counts,
                                      const GologitOptions& options) {
  GologitSpec spec;
  spec.M = static_cast<int>(level_counts.size());
  spec.feature_names.clear();
  spec.options = options;
  if (spec.M < 2) throw Error(ErrorCode::kInvalidArgument, "gologit needs M >= 2");
  GologitData d;
  d.X.resize(spec.M, 0);
  for (int j = 0; j < spec.M; ++j) {
    d.y.push_back(j + 1);
    d.weights.push_back(level_counts[j]);
  }
  return fit_impl(spec, d, nullptr);
}

// ---- marginal effects ------------------------------------------------------

namespace {

// Adds the effect matrix at x (weight w) and its parameter gradients.
void accumulate_effects(const GologitFit& fit, const Eigen::VectorXd& x, double w,
                        Eigen::MatrixXd& eff, std::vector<Eigen::VectorXd>& grads) {
  const int M = fit.M;
  const auto K = static_cast<Eigen::Index>(fit.K());
  const Eigen::Index block = K + 1;
  Eigen::VectorXd xt(block);
  xt[0] = 1.0;
  xt.tail(K) = x;
  std::vector<double> g(M + 1, 0.0), gp(M + 1, 0.0);
  g[0] = 1.0;
  for (int j = 1; j < M; ++j) {
    g[j] = cum_prob(fit, x, j);
    gp[j] = g[j] * (1.0 - g[j]);
  }
  for (int j = 1; j <= M; ++j) {   // category
    for (Eigen::Index k = 0; k < K; ++k) {
      double e = 0.0;
      Eigen::VectorXd& grad = grads[(j - 1) * K + k];
      if (j - 1 >= 1) {
        const int m = j - 1;
        const double b = fit.betas(m - 1, k);
        e += gp[m] * b;
        grad.segment((m - 1) * block, block) += w * gp[m] * (1.0 - 2.0 * g[m]) * b * xt;
        grad[(m - 1) * block + 1 + k] += w * gp[m];
      }
      if (j <= M - 1) {
        const int m = j;
        const double b = fit.betas(m - 1, k);
        e -= gp[m] * b;
        grad.segment((m - 1) * block, block) -= w * gp[m] * (1.0 - 2.0 * g[m]) * b * xt;
        grad[(m - 1) * block + 1 + k] -= w * gp[m];
      }
      eff(j - 1, k) += w * e;
    }
  }
}

// Adds w * (P(x with x_k = 1) - P(x with x_k = 0)) and gradients.
void accumulate_discrete(const GologitFit& fit, const Eigen::VectorXd& x, double w,
                         Eigen::MatrixXd& eff, std::vector<Eigen::VectorXd>& grads) {
  const int M = fit.M;
  const auto K = static_cast<Eigen::Index>(fit.K());
  const Eigen::Index block = K + 1;
  for (Eigen::Index k = 0; k < K; ++k) {
    for (int side = 0; side < 2; ++side) {
      Eigen::VectorXd xs = x;
      xs[k] = side;
      const double sign = side == 1 ? 1.0 : -1.0;
      Eigen::VectorXd xt(block);
      xt[0] = 1.0;
      xt.tail(K) = xs;
      std::vector<double> g(M + 1, 0.0);
      g[0] = 1.0;
      for (int j = 1; j < M; ++j) g[j] = cum_prob(fit, xs, j);
      for (int j = 1; j <= M; ++j) {
        eff(j - 1, k) += sign * w * (g[j - 1] - g[j]);
        Eigen::VectorXd& grad = grads[(j - 1) * K + k];
        if (j - 1 >= 1) grad.segment((j - 2) * block, block) += sign * w * g[j - 1] * (1.0 - g[j - 1]) * xt;
        if (j <= M - 1) grad.segment((j - 1) * block, block) -= sign * w * g[j] * (1.0 - g[j]) * xt;
      }
    }
  }
}

}  // namespace

MarginalEffects marginal_effects(const GologitFit& fit, const GologitData& data, MarginalMode mode) {
  if (!fit.converged) throw Error(ErrorCode::kUnconvergedFit, "marginal effects need a converged fit");
  if (data.X.cols() != fit.betas.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "design does not match the fit");
  }
  if (data.rows() == 0) throw Error(ErrorCode::kEmptyInput, "marginal effects need data rows");
  const int M = fit.M;
  const auto K = static_cast<Eigen::Index>(fit.K());
  const Eigen::Index P = (M - 1) * (K + 1);
  MarginalEffects me;
  me.mode = mode;
  me.feature_names = fit.feature_names;
  me.effects = Eigen::MatrixXd::Zero(M, K);
  std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(M * K), Eigen::VectorXd::Zero(P));
  const double W = data.total_weight();
  if (mode == MarginalMode::kMEM) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(K);
    for (std::size_t i = 0; i < data.rows(); ++i) mean += data.weight(i) * row_of(data.X, i);
    mean /= W;
    accumulate_effects(fit, mean, 1.0, me.effects, grads);
  } else {
    for (std::size_t i = 0; i < data.rows(); ++i) {
      const double w = data.weight(i) / W;
      if (mode == MarginalMode::kAME) {
        accumulate_effects(fit, row_of(data.X, i), w, me.effects, grads);
      } else {
        accumulate_discrete(fit, row_of(data.X, i), w, me.effects, grads);
      }
    }
  }
  me.std_errors = Eigen::MatrixXd::Constant(M, K, std::numeric_limits<double>::quiet_NaN());
  if (fit.covariance.rows() == P && fit.covariance.allFinite()) {
    for (int j = 0; j < M; ++j) {
      for (Eigen::Index k = 0; k < K; ++k) {
        const Eigen::VectorXd& gr = grads[j * K + k];
        me.std_errors(j, k) = std::sqrt(std::max(0.0, gr.dot(fit.covariance * gr)));
      }
    }
  }
  return me;
}

WaldRow wald_row(std::string name, double estimate, double se) {
  WaldRow r;
  r.name = std::move(name);
  r.estimate = estimate;
  r.se = se;
  r.z = estimate / se;
  r.p = stats::normal_two_sided_p(r.z);
  r.ci_low = estimate - 1.96 * se;
  r.ci_high = estimate + 1.96 * se;
  return r;
}

std::vector<WaldRow> wald_tests(const GologitFit& fit) {
  const Eigen::VectorXd theta = fit.theta();
  const auto P = theta.size();
  if (fit.covariance.rows() != P || fit.covariance.cols() != P || !fit.covariance.allFinite()) {
    throw Error(ErrorCode::kSingularCovariance, "covariance is unavailable");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.covariance);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1e-300))) {
    throw Error(ErrorCode::kSingularCovariance, "covariance is singular");
  }
  std::vector<WaldRow> out;
  const std::size_t K = fit.K();
  for (int j = 0; j < fit.M - 1; ++j) {
    for (std::size_t a = 0; a <= K; ++a) {
      const auto idx = static_cast<Eigen::Index>(j * (K + 1) + a);
      const std::string name = a == 0 ? "alpha_" + std::to_string(j + 1)
                                      : "beta_" + std::to_string(j + 1) + "[" + fit.feature_names[a - 1] + "]";
      out.push_back(wald_row(name, theta[idx], std::sqrt(fit.covariance(idx, idx))));
    }
  }
  return out;
}

// ---- DID designs -----------------------------------------------------------

GologitData did_design_a(const ObservationSet& observations) {
  GologitData d;
  const auto& all = observations.all();
  d.X.resize(static_cast<Eigen::Index>(all.size()), 3);
  d.y.reserve(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    const TimeSlot& s = all[i].slot;
    d.X(i, 0) = s.work();
    d.X(i, 1) = s.school();
    d.X(i, 2) = s.exam();
    d.y.push_back(all[i].level.value());
  }
  return d;
}

GologitData did_design_b(const ObservationSet& observations, const CalendarConfig& calendar) {
  std::vector<std::array<double, 2>> rows;
  std::vector<int> y;
  const int noon = 12 * 60;
  for (const auto& o : observations.all()) {
    const Timestamp& ts = o.slot.timestamp();
    if (!calendar.school_hours_am.contains(ts.minute_of_day)) continue;
    std::array<double, 2> x{0.0, 0.0};
    if (calendar.is_weekend(ts.day)) {
      // baseline
    } else if (calendar.is_school_run_day(ts.day)) {
      x[0] = 1.0;
    } else {
      bool morning_exam = false;
      for (const auto& w : calendar.exam_windows) {
        if (w.day == ts.day && w.hours.start < noon) morning_exam = true;
      }
      if (morning_exam) continue;
      x[1] = 1.0;
    }
    rows.push_back(x);
    y.push_back(o.level.value());
  }
  GologitData d;
  d.X.resize(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.X(i, 0) = rows[i][0];
    d.X(i, 1) = rows[i][1];
  }
  d.y = std::move(y);
  return d;
}

std::vector<DidRow> did_report(const GologitFit& fit_a, const GologitData& data_a,
                               const GologitFit& fit_b, const GologitData& data_b) {
  std::vector<DidRow> out;
  auto add_panel = [&](const char* panel, const GologitFit& fit, const GologitData& data) {
    const MarginalEffects me = marginal_effects(fit, data, MarginalMode::kAME);
    for (std::size_t k = 0; k < fit.K(); ++k) {
      for (int j = 0; j < fit.M; ++j) {
        DidRow r;
        r.panel = panel;
        r.dummy = fit.feature_names[k];
        r.category = j + 1;
        r.effect = me.effects(j, k);
        r.se = me.std_errors(j, k);
        r.p = std::isfinite(r.se) && r.se > 0 ? stats::normal_two_sided_p(r.effect / r.se)
                                              : std::numeric_limits<double>::quiet_NaN();
        out.push_back(r);
      }
    }
  };
  add_panel("a", fit_a, data_a);
  add_panel("b", fit_b, data_b);
  return out;
}

std::string did_report_csv(const std::vector<DidRow>& rows) {
  std::ostringstream os;
  os << "panel,dummy,category,label,effect_pct,se_pct,p\n";
  for (const auto& r : rows) {
    const char* label = r.category >= 1 && r.category <= 4 ? kCongestionLabels[r.category - 1] : "";
    os << r.panel << ',' << r.dummy << ',' << r.category << ',' << label << ','
       << csv::format_double(100.0 * r.effect) << ',' << csv::format_double(100.0 * r.se) << ','
       << csv::format_double(r.p) << '\n';
  }
  return os.str();
}

}  // namespace schoolrun
