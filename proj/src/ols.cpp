#include "schoolrun/ols.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "schoolrun/csv.hpp"
#include "schoolrun/stats.hpp"

namespace schoolrun {

using nlohmann::json;

namespace {

constexpr double kRankThreshold = 1e-10;

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  return Z;
}

// Names of one dependent set: the first column beyond the numerical rank and
// the earlier pivoted columns that reproduce it.
std::vector<std::string> dependent_set(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                                       const std::vector<std::string>& names) {
  const Eigen::Index r = qr.rank();
  const Eigen::MatrixXd R = qr.matrixR().template triangularView<Eigen::Upper>();
  const auto& perm = qr.colsPermutation().indices();
  const Eigen::VectorXd coef = R.topLeftCorner(r, r).triangularView<Eigen::Upper>().solve(R.col(r).head(r));
  std::vector<Eigen::Index> cols{perm[r]};
  for (Eigen::Index i = 0; i < r; ++i) {
    if (std::fabs(coef[i]) > 1e-8) cols.push_back(perm[i]);
  }
  std::sort(cols.begin(), cols.end());
  std::vector<std::string> out;
  for (auto c : cols) out.push_back(names[static_cast<std::size_t>(c)]);
  return out;
}

}  // namespace

double OlsFit::predict(const Eigen::VectorXd& x) const {
  if (x.size() != static_cast<Eigen::Index>(k)) {
    throw Error(ErrorCode::kInvalidArgument, "feature vector length does not match the fit");
  }
  return betas[0] + betas.tail(static_cast<Eigen::Index>(k)).dot(x);
}

OlsFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               std::span<const std::string> feature_names) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto k = static_cast<std::size_t>(X.cols());
  if (feature_names.size() != k) throw Error(ErrorCode::kInvalidArgument, "one name per column required");
  if (static_cast<std::size_t>(y.size()) != n) throw Error(ErrorCode::kInvalidArgument, "X and y differ in rows");
  if (n <= k + 1) {
    throw Error(ErrorCode::kInvalidArgument, "need n > k + 1 observations");
  }
  OlsFit fit;
  fit.names.push_back("intercept");
  fit.names.insert(fit.names.end(), feature_names.begin(), feature_names.end());
  fit.n = n;
  fit.k = k;
  fit.df = static_cast<double>(n - k - 1);

  const Eigen::MatrixXd Z = with_intercept(X);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  qr.setThreshold(kRankThreshold);
  fit.rank = static_cast<std::size_t>(qr.rank());
  const Eigen::Index p = Z.cols();
  {
    const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p);
    const double first = std::fabs(R(0, 0));
    const double last = std::fabs(R(p - 1, p - 1));
    fit.condition_estimate = last > 0 ? first / last : std::numeric_limits<double>::infinity();
  }
  if (qr.rank() < p) {
    const auto set = dependent_set(qr, fit.names);
    std::string msg = "design is rank deficient; dependent columns:";
    for (const auto& s : set) msg += " " + s;
    throw Error(ErrorCode::kRankDeficient, msg);
  }
  fit.betas = qr.solve(y);
  fit.residuals = y - Z * fit.betas;
  const double rss = fit.residuals.squaredNorm();
  const double tss = (y.array() - y.mean()).matrix().squaredNorm();
  fit.r2 = tss > 0 ? 1.0 - rss / tss : 1.0;
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * static_cast<double>(n - 1) / fit.df;
  const double s2 = rss / fit.df;
  fit.sigma = std::sqrt(s2);

  // diag((Z'Z)^-1) = row norms of P R^-1.
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const auto& perm = qr.colsPermutation().indices();
  fit.std_errors.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    fit.std_errors[perm[i]] = std::sqrt(s2 * Rinv.row(i).squaredNorm());
  }
  const double tcrit = stats::t_quantile(0.975, fit.df);
  fit.t_stats.resize(p);
  fit.p_values.resize(p);
  fit.ci_low.resize(p);
  fit.ci_high.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double se = fit.std_errors[i];
    fit.t_stats[i] = se > 0 ? fit.betas[i] / se : std::copysign(INFINITY, fit.betas[i]);
    fit.p_values[i] = se > 0 ? stats::t_two_sided_p(fit.t_stats[i], fit.df) : (fit.betas[i] == 0 ? 1.0 : 0.0);
    fit.ci_low[i] = fit.betas[i] - tcrit * se;
    fit.ci_high[i] = fit.betas[i] + tcrit * se;
  }
  return fit;
}

OlsFit fit_ols_with_share_fallback(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   std::span<const std::string> names,
                                   std::span<const std::string> share_names,
                                   const std::string& fallback_drop, Warnings* warnings) {
  try {
    return fit_ols(X, y, names);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kRankDeficient) throw;
    const auto drop = std::find(names.begin(), names.end(), fallback_drop);
    const bool share_involved = std::any_of(share_names.begin(), share_names.end(), [&](const std::string& s) {
      return std::string_view(e.what()).find(" " + s) != std::string_view::npos;
    });
    if (drop == names.end() || !share_involved) throw;
    const auto col = static_cast<Eigen::Index>(drop - names.begin());
    Eigen::MatrixXd Xd(X.rows(), X.cols() - 1);
    Xd.leftCols(col) = X.leftCols(col);
    Xd.rightCols(X.cols() - col - 1) = X.rightCols(X.cols() - col - 1);
    std::vector<std::string> kept(names.begin(), names.end());
    kept.erase(kept.begin() + col);
    OlsFit fit = fit_ols(Xd, y, kept);
    fit.dropped.push_back(fallback_drop);
    if (warnings) {
      warnings->push_back({WarningCode::kCollinearShareDropped,
                           "scenescape shares are collinear with the intercept; dropped " + fallback_drop +
                               " (" + e.what() + ")"});
    }
    return fit;
  }
}

json OlsFit::to_json() const {
  json j;
  json coefs = json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    coefs.push_back({{"name", names[i]},
                     {"coefficient", betas[i]},
                     {"se", std_errors[i]},
                     {"t", t_stats[i]},
                     {"p", p_values[i]},
                     {"ci95", {ci_low[i], ci_high[i]}}});
  }
  j["coefficients"] = coefs;
  j["r2"] = r2;
  j["adj_r2"] = adj_r2;
  j["sigma"] = sigma;
  j["n"] = n;
  j["k"] = k;
  j["df"] = df;
  j["rank"] = rank;
  j["condition_estimate"] = condition_estimate;
  j["dropped"] = dropped;
  j["residuals"] = to_vec(residuals);
  return j;
}

OlsFit OlsFit::from_json(const json& j) {
  try {
    OlsFit f;
    const auto& coefs = j.at("coefficients");
    const auto p = static_cast<Eigen::Index>(coefs.size());
    f.betas.resize(p);
    f.std_errors.resize(p);
    f.t_stats.resize(p);
    f.p_values.resize(p);
    f.ci_low.resize(p);
    f.ci_high.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto& c = coefs[static_cast<std::size_t>(i)];
      f.names.push_back(c.at("name").get<std::string>());
      f.betas[i] = c.at("coefficient").get<double>();
      f.std_errors[i] = c.at("se").get<double>();
      f.t_stats[i] = c.at("t").get<double>();
      f.p_values[i] = c.at("p").get<double>();
      f.ci_low[i] = c.at("ci95").at(0).get<double>();
      f.ci_high[i] = c.at("ci95").at(1).get<double>();
    }
    f.r2 = j.at("r2").get<double>();
    f.adj_r2 = j.at("adj_r2").get<double>();
    f.sigma = j.at("sigma").get<double>();
    f.n = j.at("n").get<std::size_t>();
    f.k = j.at("k").get<std::size_t>();
    f.df = j.at("df").get<double>();
    f.rank = j.value("rank", std::size_t{0});
    f.condition_estimate = j.value("condition_estimate", 0.0);
    f.dropped = j.value("dropped", std::vector<std::string>{});
    f.residuals = from_vec(j.value("residuals", std::vector<double>{}));
    if (f.names.empty() || f.names[0] != "intercept" || f.k + 1 != f.names.size()) {
      throw Error(ErrorCode::kParseError, "ols fit: malformed coefficient table");
    }
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("ols fit: ") + e.what());
  }
}

std::string OlsFit::to_csv() const {
  std::ostringstream os;
  os << "name,coefficient,se,t,p,ci_low,ci_high\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    os << names[i] << ',' << csv::format_double(betas[i]) << ',' << csv::format_double(std_errors[i])
       << ',' << csv::format_double(t_stats[i]) << ',' << csv::format_double(p_values[i]) << ','
       << csv::format_double(ci_low[i]) << ',' << csv::format_double(ci_high[i]) << '\n';
  }
  return os.str();
}

std::vector<std::string> VifReport::flagged() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (values[i] > threshold) out.push_back(names[i]);
  }
  return out;
}

json VifReport::to_json() const {
  json rows = json::array();
  for (std::size_t i = 0; i < names.size(); ++i) rows.push_back({{"name", names[i]}, {"vif", values[i]}});
  return {{"threshold", threshold}, {"vif", rows}, {"flagged", flagged()}};
}

VifReport vif(const Eigen::MatrixXd& X, std::span<const std::string> names) {
  const Eigen::Index k = X.cols();
  if (static_cast<std::size_t>(k) != names.size()) throw Error(ErrorCode::kInvalidArgument, "one name per column required");
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "VIF needs at least two columns");
  VifReport rep;
  rep.names.assign(names.begin(), names.end());
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::MatrixXd Z(X.rows(), k);
    Z.col(0).setOnes();
    Eigen::Index w = 1;
    for (Eigen::Index o = 0; o < k; ++o) {
      if (o != c) Z.col(w++) = X.col(o);
    }
    const Eigen::VectorXd y = X.col(c);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(kRankThreshold);
    const Eigen::VectorXd b = qr.solve(y);
    const double rss = (y - Z * b).squaredNorm();
    const double tss = (y.array() - y.mean()).matrix().squaredNorm();
    const double r2 = tss > 0 ? 1.0 - rss / tss : 1.0;
    if (r2 >= 1.0 - 1e-12) {
      throw Error(ErrorCode::kPerfectCollinearity,
                  "column '" + rep.names[static_cast<std::size_t>(c)] + "' is a linear combination of the others");
    }
    rep.values.push_back(1.0 / (1.0 - r2));
  }
  return rep;
}

std::vector<std::string> significant_subset(const OlsFit& fit, double alpha) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < fit.names.size(); ++i) {
    if (fit.p_values[static_cast<Eigen::Index>(i)] < alpha) out.push_back(fit.names[i]);
  }
  if (out.empty()) {
    throw Error(ErrorCode::kNoSignificantFeatures, "no feature has p < " + csv::format_double(alpha));
  }
  return out;
}

}  // namespace schoolrun
