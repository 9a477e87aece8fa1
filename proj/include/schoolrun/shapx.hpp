#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "schoolrun/ols.hpp"

namespace schoolrun {

using Model = std::function<double(std::span<const double>)>;

// Withheld features take background-row values; v(S) averages the model over
// the background rows.
struct ValueFunction {
  Model model;
  Eigen::MatrixXd background;  // rows are reference feature vectors

  std::size_t features() const noexcept { return static_cast<std::size_t>(background.cols()); }
  // Mean over background rows of model(x on `present`, background elsewhere).
  double value(const Eigen::VectorXd& x, const std::vector<bool>& present) const;
};

// Intercept + coefs . x + sum of c * x_a * x_b.
struct LinearPredictor {
  struct Product {
    std::size_t a;
    std::size_t b;
    double c;
  };
  double intercept = 0.0;
  Eigen::VectorXd coefs;
  std::vector<Product> products;

  static LinearPredictor from_fit(const OlsFit& fit);
  double operator()(std::span<const double> x) const;
  Model model() const;
};

struct ShapOptions {
  std::size_t exact_limit = 20;  // full enumeration up to this many features
  bool allow_sampling = true;
  int permutations = 2000;       // antithetic pairs count as two
  std::uint64_t seed = 0;
};

struct ShapExplanation {
  double phi0 = 0.0;
  Eigen::VectorXd phis;
  double prediction = 0.0;
  bool sampled = false;
};

// Exact coalition enumeration, or seeded antithetic permutation sampling above
// exact_limit. Throws TooManyFeatures, NonFiniteModelOutput.
ShapExplanation shapley_exact(const ValueFunction& vf, const Eigen::VectorXd& x,
                              const ShapOptions& options = {});

// phi_i = beta_i (x_i - mean of background column i). Throws ModelNotLinear.
ShapExplanation shapley_linear(const LinearPredictor& model, const Eigen::MatrixXd& background,
                               const Eigen::VectorXd& x);
ShapExplanation shapley_linear(const OlsFit& fit, const Eigen::MatrixXd& background,
                               const Eigen::VectorXd& x);

struct ImportanceRow {
  std::string name;
  std::size_t index = 0;
  double mean_abs_phi = 0.0;
};

// Descending mean |phi|, ties in input order. Throws EmptyInput.
std::vector<ImportanceRow> shap_importance(std::span<const ShapExplanation> explanations,
                                           std::span<const std::string> names);

struct InteractionMatrix {
  std::vector<std::size_t> features;  // indices into the full feature vector
  Eigen::MatrixXd values;             // symmetric; diagonal = main effect net of interactions
  Eigen::VectorXd phis;               // Shapley values of the same game
};

inline constexpr std::size_t kInteractionLimit = 14;

// Pairwise Shapley interaction index among `features` (default: all). The
// features outside the subset stay at their values in x. Throws
// TooManyFeatures above kInteractionLimit.
InteractionMatrix shap_interactions(const ValueFunction& vf, const Eigen::VectorXd& x,
                                    std::vector<std::size_t> features = {});

struct AdditiveCheck {
  bool pass = false;
  double residual = 0.0;  // phi0 + sum(phi) - model(x)
  double tolerance = 1e-8;
  std::optional<double> reference_deviation;  // max |phi - phi_reference|
};

// Efficiency check g(all ones) = phi0 + sum(phi) against model(x). With a
// reference explanation the largest attribution difference is also reported.
AdditiveCheck additive_check(const ShapExplanation& explanation, const ValueFunction& vf,
                             const Eigen::VectorXd& x,
                             const ShapExplanation* reference = nullptr, double tolerance = 1e-8);

nlohmann::json importance_json(std::span<const ImportanceRow> rows);
nlohmann::json interactions_json(const InteractionMatrix& m, std::span<const std::string> names);

}  // namespace schoolrun
