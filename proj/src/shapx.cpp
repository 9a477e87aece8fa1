#include "schoolrun/shapx.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "schoolrun/error.hpp"
#include "schoolrun/rng.hpp"

namespace schoolrun {

using nlohmann::json;

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteModelOutput, "model returned a non-finite value");
  return v;
}

// w(s) = s! (m - s - 1)! / m!
std::vector<double> shapley_weights(std::size_t m) {
  std::vector<double> w(m);
  for (std::size_t s = 0; s < m; ++s) {
    w[s] = std::exp(std::lgamma(s + 1.0) + std::lgamma(double(m - s)) - std::lgamma(m + 1.0));
  }
  return w;
}

// v over every mask of `players`; other features fixed at x.
std::vector<double> coalition_values(const ValueFunction& vf, const Eigen::VectorXd& x,
                                     const std::vector<std::size_t>& players,
                                     const std::vector<bool>& base_present) {
  const std::size_t m = players.size();
  std::vector<double> v(std::size_t{1} << m);
  std::vector<bool> present = base_present;
  for (std::size_t mask = 0; mask < v.size(); ++mask) {
    for (std::size_t p = 0; p < m; ++p) present[players[p]] = (mask >> p) & 1U;
    v[mask] = vf.value(x, present);
  }
  return v;
}

}  // namespace

double ValueFunction::value(const Eigen::VectorXd& x, const std::vector<bool>& present) const {
  const auto d = background.cols();
  if (x.size() != d || present.size() != static_cast<std::size_t>(d)) {
    throw Error(ErrorCode::kInvalidArgument, "feature count does not match the background");
  }
  if (background.rows() == 0) throw Error(ErrorCode::kEmptyInput, "background is empty");
  std::vector<double> z(static_cast<std::size_t>(d));
  double sum = 0.0;
  for (Eigen::Index r = 0; r < background.rows(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) z[c] = present[c] ? x[c] : background(r, c);
    sum += checked(model(z));
  }
  return sum / static_cast<double>(background.rows());
}

LinearPredictor LinearPredictor::from_fit(const OlsFit& fit) {
  LinearPredictor p;
  p.intercept = fit.betas[0];
  p.coefs = fit.betas.tail(static_cast<Eigen::Index>(fit.k));
  return p;
}

double LinearPredictor::operator()(std::span<const double> x) const {
  double y = intercept;
  for (Eigen::Index i = 0; i < coefs.size(); ++i) y += coefs[i] * x[static_cast<std::size_t>(i)];
  for (const auto& t : products) y += t.c * x[t.a] * x[t.b];
  return y;
}

Model LinearPredictor::model() const {
  return [p = *this](std::span<const double> x) { return p(x); };
}

ShapExplanation shapley_exact(const ValueFunction& vf, const Eigen::VectorXd& x,
                              const ShapOptions& options) {
  const std::size_t m = vf.features();
  ShapExplanation e;
  e.phis = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  {
    std::vector<double> z(x.data(), x.data() + x.size());
    e.prediction = checked(vf.model(z));
  }
  e.phi0 = vf.value(x, std::vector<bool>(m, false));
  if (m <= options.exact_limit) {
    std::vector<std::size_t> players(m);
    std::iota(players.begin(), players.end(), 0);
    const auto v = coalition_values(vf, x, players, std::vector<bool>(m, false));
    const auto w = shapley_weights(m);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t bit = std::size_t{1} << i;
      // Marginal contributions are summed per coalition size before weighting,
      // so the result does not depend on the player's bit position.
      std::vector<double> by_size(m, 0.0);
      for (std::size_t mask = 0; mask < v.size(); ++mask) {
        if (mask & bit) continue;
        by_size[static_cast<std::size_t>(std::popcount(mask))] += v[mask | bit] - v[mask];
      }
      double phi = 0.0;
      for (std::size_t s = 0; s < m; ++s) phi += w[s] * by_size[s];
      e.phis[static_cast<Eigen::Index>(i)] = phi;
    }
    return e;
  }
  if (!options.allow_sampling) {
    throw Error(ErrorCode::kTooManyFeatures, std::to_string(m) + " features exceed exact enumeration limit " +
                                                 std::to_string(options.exact_limit));
  }
  if (options.permutations < 2) throw Error(ErrorCode::kInvalidArgument, "need at least 2 permutations");
  e.sampled = true;
  Rng rng(options.seed);
  std::vector<std::size_t> perm(m);
  const int pairs = options.permutations / 2;
  for (int p = 0; p < pairs; ++p) {
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = m - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<bool> present(m, false);
      double prev = e.phi0;
      for (std::size_t s = 0; s < m; ++s) {
        const std::size_t f = pass == 0 ? perm[s] : perm[m - 1 - s];
        present[f] = true;
        const double cur = vf.value(x, present);
        e.phis[static_cast<Eigen::Index>(f)] += cur - prev;
        prev = cur;
      }
    }
  }
  e.phis /= static_cast<double>(2 * pairs);
  return e;
}

ShapExplanation shapley_linear(const LinearPredictor& model, const Eigen::MatrixXd& background,
                               const Eigen::VectorXd& x) {
  if (!model.products.empty()) {
    throw Error(ErrorCode::kModelNotLinear, "model has product terms; use shapley_exact");
  }
  if (background.cols() != model.coefs.size() || x.size() != model.coefs.size()) {
    throw Error(ErrorCode::kInvalidArgument, "feature count does not match the model");
  }
  if (background.rows() == 0) throw Error(ErrorCode::kEmptyInput, "background is empty");
  const Eigen::VectorXd mean = background.colwise().mean().transpose();
  ShapExplanation e;
  e.phis = model.coefs.cwiseProduct(x - mean);
  e.phi0 = model.intercept + model.coefs.dot(mean);
  e.prediction = model(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  return e;
}

ShapExplanation shapley_linear(const OlsFit& fit, const Eigen::MatrixXd& background,
                               const Eigen::VectorXd& x) {
  return shapley_linear(LinearPredictor::from_fit(fit), background, x);
}

std::vector<ImportanceRow> shap_importance(std::span<const ShapExplanation> explanations,
                                           std::span<const std::string> names) {
  if (explanations.empty()) throw Error(ErrorCode::kEmptyInput, "importance needs at least one explanation");
  const auto m = explanations.front().phis.size();
  if (static_cast<std::size_t>(m) != names.size()) throw Error(ErrorCode::kInvalidArgument, "one name per feature required");
  std::vector<ImportanceRow> rows(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    double s = 0.0;
    for (const auto& e : explanations) s += std::fabs(e.phis[i]);
    rows[i] = {names[i], static_cast<std::size_t>(i), s / static_cast<double>(explanations.size())};
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ImportanceRow& a, const ImportanceRow& b) { return a.mean_abs_phi > b.mean_abs_phi; });
  return rows;
}

InteractionMatrix shap_interactions(const ValueFunction& vf, const Eigen::VectorXd& x,
                                    std::vector<std::size_t> features) {
  const std::size_t d = vf.features();
  if (features.empty()) {
    features.resize(d);
    std::iota(features.begin(), features.end(), 0);
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i] >= d) throw Error(ErrorCode::kIndexOutOfRange, "interaction feature index out of range");
    for (std::size_t j = 0; j < i; ++j) {
      if (features[j] == features[i]) throw Error(ErrorCode::kInvalidArgument, "duplicate interaction feature");
    }
  }
  const std::size_t m = features.size();
  if (m > kInteractionLimit) {
    throw Error(ErrorCode::kTooManyFeatures, std::to_string(m) + " features exceed the interaction limit of " +
                                                 std::to_string(kInteractionLimit));
  }
  if (m < 2) throw Error(ErrorCode::kInvalidArgument, "interactions need at least two features");
  std::vector<bool> base(d, true);
  for (auto f : features) base[f] = false;
  const auto v = coalition_values(vf, x, features, base);
  const auto mi = static_cast<Eigen::Index>(m);

  InteractionMatrix out;
  out.features = features;
  out.values = Eigen::MatrixXd::Zero(mi, mi);
  out.phis = Eigen::VectorXd::Zero(mi);
  const auto w = shapley_weights(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t bi = std::size_t{1} << i;
    for (std::size_t mask = 0; mask < v.size(); ++mask) {
      if (!(mask & bi)) out.phis[i] += w[std::popcount(mask)] * (v[mask | bi] - v[mask]);
    }
  }
  // |S|! (m - |S| - 2)! / (2 (m - 1)!)
  std::vector<double> wi(m - 1);
  for (std::size_t s = 0; s + 1 < m; ++s) {
    wi[s] = 0.5 * std::exp(std::lgamma(s + 1.0) + std::lgamma(double(m - s - 1)) - std::lgamma(double(m)));
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const std::size_t bi = std::size_t{1} << i, bj = std::size_t{1} << j;
      double acc = 0.0;
      for (std::size_t mask = 0; mask < v.size(); ++mask) {
        if (mask & (bi | bj)) continue;
        acc += wi[std::popcount(mask)] * (v[mask | bi | bj] - v[mask | bi] - v[mask | bj] + v[mask]);
      }
      out.values(i, j) = out.values(j, i) = acc;
    }
  }
  for (Eigen::Index i = 0; i < mi; ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < mi; ++j) {
      if (j != i) off += out.values(i, j);
    }
    out.values(i, i) = out.phis[i] - off;
  }
  return out;
}

AdditiveCheck additive_check(const ShapExplanation& explanation, const ValueFunction& vf,
                             const Eigen::VectorXd& x, const ShapExplanation* reference,
                             double tolerance) {
  AdditiveCheck c;
  c.tolerance = tolerance;
  std::vector<double> z(x.data(), x.data() + x.size());
  const double fx = checked(vf.model(z));
  c.residual = explanation.phi0 + explanation.phis.sum() - fx;
  c.pass = std::fabs(c.residual) < tolerance;
  if (reference) {
    c.reference_deviation = (explanation.phis - reference->phis).cwiseAbs().maxCoeff();
  }
  return c;
}

json importance_json(std::span<const ImportanceRow> rows) {
  json out = json::array();
  for (const auto& r : rows) out.push_back({{"feature", r.name}, {"mean_abs_phi", r.mean_abs_phi}});
  return out;
}

json interactions_json(const InteractionMatrix& m, std::span<const std::string> names) {
  std::vector<std::string> fnames;
  for (auto f : m.features) fnames.push_back(names[f]);
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    std::vector<double> row(m.values.cols());
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) row[j] = m.values(i, j);
    rows.push_back(row);
  }
  return {{"features", fnames},
          {"matrix", rows},
          {"phi", std::vector<double>(m.phis.data(), m.phis.data() + m.phis.size())}};
}

}  // namespace schoolrun
