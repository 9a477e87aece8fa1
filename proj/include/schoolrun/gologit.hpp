#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "schoolrun/calendar.hpp"
#include "schoolrun/error.hpp"
#include "schoolrun/ingest.hpp"

namespace schoolrun {

struct GologitOptions {
  double grad_tol = 1e-6;  // max-norm of the total log-likelihood gradient
  int max_iter = 500;
  double divergence_bound = 50.0;
  // Starting parameters in theta() layout; default is empirical cumulative
  // logits for the intercepts and zero slopes.
  std::optional<Eigen::VectorXd> start;
};

struct GologitSpec {
  int M = 4;
  std::vector<std::string> feature_names{"work", "school", "exam"};
  GologitOptions options;

  void validate() const;  // InvalidArgument
};

// Rows of covariates, outcome levels 1..M, optional frequency weights.
struct GologitData {
  Eigen::MatrixXd X;
  std::vector<int> y;
  std::vector<double> weights;  // empty means all 1

  std::size_t rows() const noexcept { return y.size(); }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
  double total_weight() const;
  // Merges identical (x, y) rows into weighted rows, sorted lexicographically.
  GologitData collapsed() const;
};

// Parameter vector layout: for each split j = 1..M-1, [alpha_j, beta_j1..beta_jK].
struct GologitFit {
  int M = 4;
  std::vector<std::string> feature_names;
  Eigen::VectorXd alphas;
  Eigen::MatrixXd betas;       // (M-1) x K
  Eigen::MatrixXd covariance;  // (M-1)(K+1) square, same layout as theta()
  double loglik = 0.0;
  double n_obs = 0.0;
  int iterations = 0;
  double grad_max_norm = 0.0;
  bool converged = false;
  std::size_t negative_probability_rows = 0;

  std::size_t K() const noexcept { return static_cast<std::size_t>(betas.cols()); }
  Eigen::VectorXd theta() const;
  void set_theta(const Eigen::VectorXd& theta);
  static GologitFit from_params(const Eigen::VectorXd& alphas, const Eigen::MatrixXd& betas,
                                std::vector<std::string> names = {});

  nlohmann::json to_json() const;
  static GologitFit from_json(const nlohmann::json& j);
};

// Thrown when the iteration budget runs out; carries the best iterate.
class GologitNotConverged : public Error {
 public:
  GologitNotConverged(const std::string& what, GologitFit best)
      : Error(ErrorCode::kNotConverged, what), best_(std::move(best)) {}
  const GologitFit& best() const noexcept { return best_; }

 private:
  GologitFit best_;
};

double logistic(double eta);

// P(Y > j) for 1 <= j <= M-1. Throws IndexOutOfRange.
double cum_prob(const GologitFit& fit, const Eigen::VectorXd& x, int j);

// Category probabilities without any sign check.
Eigen::VectorXd raw_category_probs(const GologitFit& fit, const Eigen::VectorXd& x);
// Throws NegativeProbability when some entry is below -1e-12.
Eigen::VectorXd category_probs(const GologitFit& fit, const Eigen::VectorXd& x);

struct LogLikelihood {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  // filled only on request
};

// Sum of weighted log P(y_i | x_i). Throws NonFiniteLikelihood when some data
// point has probability <= 0.
LogLikelihood log_likelihood(const Eigen::VectorXd& theta, const GologitData& data, int M,
                             bool with_hessian = false);

// Quasi-Newton (BFGS, backtracking line search) maximum likelihood. Throws
// EmptyCategory, SeparationDetected, GologitNotConverged.
GologitFit fit_gologit(const GologitSpec& spec, const GologitData& data,
                       Warnings* warnings = nullptr);

// Same estimator with no covariates, from per-level counts.
GologitFit fit_gologit_intercept_only(std::span<const double> level_counts,
                                      const GologitOptions& options = {});

enum class MarginalMode { kAME, kMEM, kDiscrete };

struct MarginalEffects {
  MarginalMode mode = MarginalMode::kAME;
  std::vector<std::string> feature_names;
  Eigen::MatrixXd effects;     // M x K
  Eigen::MatrixXd std_errors;  // M x K, delta method
};

// dP(Y=j)/dx_k = g'_{j-1} beta_{j-1,k} - g'_j beta_{j,k}, averaged over rows
// (AME) or evaluated at the weighted column means (MEM). kDiscrete gives the
// average change in P(Y=j) when x_k goes from 0 to 1. Throws UnconvergedFit.
MarginalEffects marginal_effects(const GologitFit& fit, const GologitData& data,
                                 MarginalMode mode = MarginalMode::kAME);

struct WaldRow {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// One row per parameter in theta() order. Throws SingularCovariance.
std::vector<WaldRow> wald_tests(const GologitFit& fit);
// Same statistics for a point estimate with a known standard error.
WaldRow wald_row(std::string name, double estimate, double se);

// ---- DID designs -----------------------------------------------------------

// Panel (a): every observation with covariates (work, school, exam).
GologitData did_design_a(const ObservationSet& observations);

// Panel (b): morning school-hour slots only; covariates
// (commute_school, commute_no_school). commute_school marks school-run days,
// commute_no_school workdays with no morning exam and no school run, and the
// weekend is the baseline. Other slots are dropped.
GologitData did_design_b(const ObservationSet& observations, const CalendarConfig& calendar);
inline const std::vector<std::string> kDidFeaturesB{"commute_school", "commute_no_school"};

struct DidRow {
  std::string panel;  // "a" or "b"
  std::string dummy;
  int category = 1;
  double effect = 0.0;  // probability units
  double se = 0.0;
  double p = 0.0;
};

extern const std::array<const char*, 4> kCongestionLabels;

// Marginal effects for both panels. Throws UnconvergedFit.
std::vector<DidRow> did_report(const GologitFit& fit_a, const GologitData& data_a,
                               const GologitFit& fit_b, const GologitData& data_b);
// panel,dummy,category,label,effect_pct,se_pct,p
std::string did_report_csv(const std::vector<DidRow>& rows);

}  // namespace schoolrun
