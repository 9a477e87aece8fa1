#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "schoolrun/error.hpp"

namespace schoolrun {

// Coefficient vectors have the intercept first, then features in input order.
struct OlsFit {
  std::vector<std::string> names;  // "intercept", features...
  Eigen::VectorXd betas;
  Eigen::VectorXd std_errors;
  Eigen::VectorXd t_stats;
  Eigen::VectorXd p_values;
  Eigen::VectorXd ci_low;
  Eigen::VectorXd ci_high;
  Eigen::VectorXd residuals;
  double r2 = 0.0;
  double adj_r2 = 0.0;
  double sigma = 0.0;  // residual standard error
  std::size_t n = 0;
  std::size_t k = 0;  // features, excluding the intercept
  double df = 0.0;
  // Rank diagnostics of the design (intercept included).
  std::size_t rank = 0;
  double condition_estimate = 0.0;  // |R_11| / |R_pp| of the pivoted QR
  std::vector<std::string> dropped;  // columns removed by a fallback, if any

  std::vector<std::string> feature_names() const { return {names.begin() + 1, names.end()}; }
  // Intercept plus x . beta; x in feature order.
  double predict(const Eigen::VectorXd& x) const;

  nlohmann::json to_json() const;
  static OlsFit from_json(const nlohmann::json& j);
  // name,coefficient,se,t,p,ci_low,ci_high
  std::string to_csv() const;
};

// Least squares with an intercept via column-pivoted Householder QR; classical
// standard errors from the R factor; two-sided t tests with n-k-1 df. Throws
// RankDeficient naming a dependent column set.
OlsFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               std::span<const std::string> names);

// fit_ols, and when the design is rank deficient because the scenescape
// shares sum to one, drops `fallback_drop` and refits. The drop is recorded
// in OlsFit::dropped with a CollinearShareDropped warning.
OlsFit fit_ols_with_share_fallback(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   std::span<const std::string> names,
                                   std::span<const std::string> share_names,
                                   const std::string& fallback_drop, Warnings* warnings = nullptr);

struct VifReport {
  std::vector<std::string> names;
  std::vector<double> values;
  double threshold = 10.0;
  std::vector<std::string> flagged() const;
  nlohmann::json to_json() const;
};

// VIF_k = 1 / (1 - R_k^2) from regressing column k on an intercept and the
// other columns. Throws PerfectCollinearity.
VifReport vif(const Eigen::MatrixXd& X, std::span<const std::string> names);

// Features with p < alpha in input order. Throws NoSignificantFeatures.
std::vector<std::string> significant_subset(const OlsFit& fit, double alpha = 0.1);

}  // namespace schoolrun
