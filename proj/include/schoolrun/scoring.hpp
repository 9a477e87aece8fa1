#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "schoolrun/domain.hpp"
#include "schoolrun/ols.hpp"

namespace schoolrun {

inline constexpr double kDefaultScoreAlpha = 14.0;

struct Score {
  double env_score = 0.0;
  double jam_score = 0.0;
};

// env_score = alpha - sum beta'_i x_i over the significant Model 2 features,
// with beta' = beta / max|beta|. Inputs are Z-scores.
struct ScoringFunction {
  double alpha = kDefaultScoreAlpha;
  double p_threshold = 0.1;
  std::vector<std::string> features;
  Eigen::VectorXd coefficients;  // raw Model 2 betas of the selected features
  Eigen::VectorXd normalized;    // beta'

  // Throws MissingFeature when a selected feature is absent.
  Score score(const std::map<std::string, double>& z) const;
  Score score(const FeatureVector& z) const;

  nlohmann::json to_json() const;
  static ScoringFunction from_json(const nlohmann::json& j);
};

// Throws NoSignificantFeatures.
ScoringFunction build_scoring(const OlsFit& fit, double alpha = kDefaultScoreAlpha,
                              double p_threshold = 0.1);

// R^2 of the simple least-squares line of observed on scores. Throws
// DegenerateVariance; needs at least 3 schools.
double validate_scores(std::span<const double> jam_scores, std::span<const double> observed);

struct ScoreRow {
  std::string school_id;
  Score score;
};
// school_id,env_score,jam_score
std::string score_table_csv(std::span<const ScoreRow> rows);

}  // namespace schoolrun
