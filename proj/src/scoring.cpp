#include "schoolrun/scoring.hpp"

#include <cmath>
#include <sstream>

#include "schoolrun/csv.hpp"
#include "schoolrun/error.hpp"

namespace schoolrun {

using nlohmann::json;

ScoringFunction build_scoring(const OlsFit& fit, double alpha, double p_threshold) {
  ScoringFunction sf;
  sf.alpha = alpha;
  sf.p_threshold = p_threshold;
  sf.features = significant_subset(fit, p_threshold);
  sf.coefficients.resize(static_cast<Eigen::Index>(sf.features.size()));
  Eigen::Index w = 0;
  for (std::size_t i = 1; i < fit.names.size(); ++i) {
    if (fit.p_values[static_cast<Eigen::Index>(i)] < p_threshold) sf.coefficients[w++] = fit.betas[static_cast<Eigen::Index>(i)];
  }
  const double scale = sf.coefficients.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) {
    throw Error(ErrorCode::kNoSignificantFeatures, "all significant coefficients are zero");
  }
  sf.normalized = sf.coefficients / scale;
  // Division can leave the top entry a rounding step away from +-1.
  for (Eigen::Index i = 0; i < sf.normalized.size(); ++i) {
    if (std::fabs(sf.coefficients[i]) == scale) sf.normalized[i] = std::copysign(1.0, sf.coefficients[i]);
  }
  return sf;
}

Score ScoringFunction::score(const std::map<std::string, double>& z) const {
  double jam = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto it = z.find(features[i]);
    if (it == z.end()) throw Error(ErrorCode::kMissingFeature, "missing feature '" + features[i] + "'");
    jam += normalized[static_cast<Eigen::Index>(i)] * it->second;
  }
  return {alpha - jam, jam};
}

Score ScoringFunction::score(const FeatureVector& z) const {
  double jam = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    jam += normalized[static_cast<Eigen::Index>(i)] * z[features[i]];
  }
  return {alpha - jam, jam};
}

json ScoringFunction::to_json() const {
  json terms = json::array();
  for (std::size_t i = 0; i < features.size(); ++i) {
    terms.push_back({{"feature", features[i]},
                     {"beta", coefficients[static_cast<Eigen::Index>(i)]},
                     {"beta_normalized", normalized[static_cast<Eigen::Index>(i)]}});
  }
  return {{"alpha", alpha}, {"p_threshold", p_threshold}, {"terms", terms}};
}

ScoringFunction ScoringFunction::from_json(const json& j) {
  try {
    ScoringFunction sf;
    sf.alpha = j.at("alpha").get<double>();
    sf.p_threshold = j.at("p_threshold").get<double>();
    const auto& terms = j.at("terms");
    sf.coefficients.resize(static_cast<Eigen::Index>(terms.size()));
    sf.normalized.resize(static_cast<Eigen::Index>(terms.size()));
    for (std::size_t i = 0; i < terms.size(); ++i) {
      sf.features.push_back(terms[i].at("feature").get<std::string>());
      sf.coefficients[static_cast<Eigen::Index>(i)] = terms[i].at("beta").get<double>();
      sf.normalized[static_cast<Eigen::Index>(i)] = terms[i].at("beta_normalized").get<double>();
    }
    if (sf.features.empty()) throw Error(ErrorCode::kNoSignificantFeatures, "scoring function has no terms");
    return sf;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("scoring function: ") + e.what());
  }
}

double validate_scores(std::span<const double> scores, std::span<const double> observed) {
  if (scores.size() != observed.size()) throw Error(ErrorCode::kInvalidArgument, "score and observation counts differ");
  if (scores.size() < 3) throw Error(ErrorCode::kInvalidArgument, "validation needs at least 3 schools");
  const double n = static_cast<double>(scores.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    mx += scores[i];
    my += observed[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double dx = scores[i] - mx, dy = observed[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw Error(ErrorCode::kDegenerateVariance, "scores or observations have zero variance");
  }
  return sxy * sxy / (sxx * syy);
}

std::string score_table_csv(std::span<const ScoreRow> rows) {
  std::ostringstream os;
  os << "school_id,env_score,jam_score\n";
  for (const auto& r : rows) {
    os << r.school_id << ',' << csv::format_double(r.score.env_score) << ','
       << csv::format_double(r.score.jam_score) << '\n';
  }
  return os.str();
}

}  // namespace schoolrun
