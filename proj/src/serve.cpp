#include "schoolrun/serve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "schoolrun/hash.hpp"
#include "schoolrun/pipeline.hpp"
#include "schoolrun/shapx.hpp"

namespace schoolrun::serve {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
  return {status, json{{"error", std::string(code)}, {"message", message}}};
}

ApiResponse error_response(int status, const Error& e) {
  return error_response(status, error_code_name(e.code()), e.what());
}

std::string_view kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::kDummy: return "dummy";
    case FeatureKind::kAngle: return "angle";
    case FeatureKind::kShare: return "share";
    case FeatureKind::kContinuous: return "continuous";
  }
  return "continuous";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

// Every artifact reference recorded in a stage's meta must match the file now on
// disk, and all stages must agree on seed and raw-input hashes.
void verify_versions(const fs::path& dir, const std::vector<std::pair<std::string, json>>& artifacts) {
  std::map<std::string, std::pair<std::string, std::string>> raw_inputs;
  std::optional<std::uint64_t> seed;
  for (const auto& [name, j] : artifacts) {
    if (!j.contains("meta")) throw Error(ErrorCode::kArtifactMismatch, name + " carries no version metadata");
    const json& meta = j.at("meta");
    const auto s = meta.at("seed").get<std::uint64_t>();
    if (seed && *seed != s) {
      throw Error(ErrorCode::kArtifactMismatch, name + " was produced with a different seed");
    }
    seed = s;
    for (const auto& [key, hash] : meta.at("inputs").items()) {
      const auto h = hash.get<std::string>();
      if (key.rfind("inputs/", 0) == 0) {
        auto [it, fresh] = raw_inputs.emplace(key, std::make_pair(h, name));
        if (!fresh && it->second.first != h) {
          throw Error(ErrorCode::kArtifactMismatch,
                      name + " and " + it->second.second + " were built from different " + key);
        }
        continue;
      }
      const fs::path p = dir / key;
      if (!fs::exists(p)) throw Error(ErrorCode::kMissingArtifact, "missing artifact '" + key + "'");
      if (sha256_file(p) != h) {
        throw Error(ErrorCode::kArtifactMismatch, name + " was built from a different " + key);
      }
    }
  }
}

}  // namespace

ApiService ApiService::load(const fs::path& artifacts) {
  ApiService api;
  try {
    api.init(artifacts);
  } catch (const Error& e) {
    api.load_error_ = json{{"error", std::string(error_code_name(e.code()))}, {"message", e.what()}};
  } catch (const std::exception& e) {
    api.load_error_ = json{{"error", "ArtifactMismatch"}, {"message", e.what()}};
  }
  return api;
}

void ApiService::init(const fs::path& dir) {
  using namespace pipeline;
  std::vector<std::pair<std::string, json>> artifacts;
  for (const char* name : {kFeatures, kModel2, kShap, kScoring}) {
    artifacts.emplace_back(name, read_json_artifact(dir / name));
  }
  if (!fs::exists(dir / kPanel)) throw Error(ErrorCode::kMissingArtifact, "missing artifact 'panel.csv'");
  if (artifacts[0].second.at("panel_sha256").get<std::string>() != sha256_file(dir / kPanel)) {
    throw Error(ErrorCode::kArtifactMismatch, "panel.csv does not match features.json");
  }
  verify_versions(dir, artifacts);

  const json& m2 = artifacts[1].second;
  const json& shap = artifacts[2].second;
  const json& sc = artifacts[3].second;
  panel_ = NeighborhoodPanel::load(dir / kPanel);
  fit_ = OlsFit::from_json(m2.at("fit"));
  const json& zs = m2.at("zscore");
  stats_.names = zs.at("names").get<std::vector<std::string>>();
  stats_.mean = zs.at("mean").get<std::vector<double>>();
  stats_.stddev = zs.at("stddev").get<std::vector<double>>();
  if (stats_.names.size() != kFeatureCount || stats_.mean.size() != kFeatureCount ||
      stats_.stddev.size() != kFeatureCount) {
    throw Error(ErrorCode::kArtifactMismatch, "model2.json z-score statistics do not cover all features");
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (stats_.names[i] != kFeatureNames[i]) {
      throw Error(ErrorCode::kArtifactMismatch, "model2.json z-score statistics are out of feature order");
    }
  }
  scoring_ = ScoringFunction::from_json(sc.at("scoring"));
  precomputed_interactions_ = shap.at("interactions");

  for (const auto& name : fit_.feature_names()) model_columns_.push_back(require_feature_index(name));
  const auto n = static_cast<Eigen::Index>(panel_.rows.size());
  z_model_.resize(n, static_cast<Eigen::Index>(model_columns_.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd raw = Eigen::Map<const Eigen::VectorXd>(
        panel_.rows[static_cast<std::size_t>(i)].features.values.data(), kFeatureCount);
    z_model_.row(i) = model_z(stats_.apply(raw)).transpose();
  }
  background_mean_ = z_model_.colwise().mean().transpose();
  phi0_ = n > 0 ? fit_.predict(background_mean_) : fit_.betas[0];
}

Eigen::VectorXd ApiService::model_z(const Eigen::VectorXd& z_all) const {
  Eigen::VectorXd z(static_cast<Eigen::Index>(model_columns_.size()));
  for (std::size_t k = 0; k < model_columns_.size(); ++k) {
    z[static_cast<Eigen::Index>(k)] = z_all[static_cast<Eigen::Index>(model_columns_[k])];
  }
  return z;
}

json ApiService::evaluate(std::size_t row, const Eigen::VectorXd& z_all) const {
  const Eigen::VectorXd raw = stats_.invert(z_all);
  json raw_j = json::object(), z_j = json::object(), phi = json::object();
  std::map<std::string, double> zmap;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const std::string name(kFeatureNames[i]);
    raw_j[name] = raw[static_cast<Eigen::Index>(i)];
    z_j[name] = z_all[static_cast<Eigen::Index>(i)];
    zmap[name] = z_all[static_cast<Eigen::Index>(i)];
  }
  const Eigen::VectorXd zm = model_z(z_all);
  const auto names = fit_.feature_names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    phi[names[k]] = fit_.betas[c + 1] * (zm[c] - background_mean_[c]);
  }
  const Score s = scoring_.score(zmap);
  return {{"school_id", panel_.rows[row].school_id},
          {"jam", panel_.rows[row].jam},
          {"predicted_jam", fit_.predict(zm)},
          {"env_score", s.env_score},
          {"jam_score", s.jam_score},
          {"features", {{"raw", raw_j}, {"z", z_j}}},
          {"phi", phi},
          {"phi0", phi0_}};
}

ApiResponse ApiService::handle(std::string_view method, std::string_view path,
                               const std::map<std::string, std::string>& query,
                               std::string_view body) const {
  const auto route = [&](std::string_view want) -> std::optional<ApiResponse> {
    if (method == want) return std::nullopt;
    return error_response(405, "MethodNotAllowed", std::string(method) + " not allowed on " + std::string(path));
  };
  const bool known = path == "/schools" || path == "/model" || path == "/interactions" ||
                     path == "/whatif" || (path.rfind("/schools/", 0) == 0 && path.size() > 9);
  if (!known) return error_response(404, "NotFound", "no route " + std::string(path));
  if (load_error_) return {409, *load_error_};
  try {
    if (path == "/schools") {
      if (auto r = route("GET")) return *r;
      return schools();
    }
    if (path == "/model") {
      if (auto r = route("GET")) return *r;
      return model();
    }
    if (path == "/interactions") {
      if (auto r = route("GET")) return *r;
      return interactions(query);
    }
    if (path == "/whatif") {
      if (auto r = route("POST")) return *r;
      return whatif(body);
    }
    if (auto r = route("GET")) return *r;
    return school(std::string(path.substr(9)));
  } catch (const Error& e) {
    return error_response(422, e);
  }
}

ApiResponse ApiService::schools() const {
  json list = json::array();
  for (std::size_t i = 0; i < panel_.rows.size(); ++i) {
    const Eigen::VectorXd raw =
        Eigen::Map<const Eigen::VectorXd>(panel_.rows[i].features.values.data(), kFeatureCount);
    const json e = evaluate(i, stats_.apply(raw));
    list.push_back({{"school_id", e["school_id"]},
                    {"jam", e["jam"]},
                    {"predicted_jam", e["predicted_jam"]},
                    {"env_score", e["env_score"]},
                    {"jam_score", e["jam_score"]}});
  }
  return {200, json{{"schools", list}}};
}

ApiResponse ApiService::school(const std::string& id) const {
  const auto row = panel_.find(id);
  if (!row) return error_response(404, "UnknownSchool", "no school '" + id + "'");
  const Eigen::VectorXd raw =
      Eigen::Map<const Eigen::VectorXd>(panel_.rows[*row].features.values.data(), kFeatureCount);
  return {200, evaluate(*row, stats_.apply(raw))};
}

ApiResponse ApiService::whatif(std::string_view body) const {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    return error_response(422, "ParseError", std::string("request body: ") + e.what());
  }
  if (!req.is_object() || !req.contains("school_id") || !req["school_id"].is_string()) {
    return error_response(422, "InvalidArgument", "school_id is required");
  }
  const std::string id = req["school_id"].get<std::string>();
  const auto row = panel_.find(id);
  if (!row) return error_response(404, "UnknownSchool", "no school '" + id + "'");
  const std::string units = req.value("units", std::string("raw"));
  if (units != "raw" && units != "z") {
    return error_response(422, "InvalidArgument", "units must be 'raw' or 'z'");
  }
  const json overrides = req.value("overrides", json::object());
  if (!overrides.is_object()) return error_response(422, "InvalidArgument", "overrides must be an object");

  const auto& base_raw = panel_.rows[*row].features;
  const Eigen::VectorXd base_z =
      stats_.apply(Eigen::Map<const Eigen::VectorXd>(base_raw.values.data(), kFeatureCount));
  Eigen::VectorXd z = base_z;
  FeatureVector raw = base_raw;
  for (const auto& [name, value] : overrides.items()) {
    const auto idx = feature_index(name);
    if (!idx) return error_response(422, "MissingFeature", "unknown feature '" + name + "'");
    if (!value.is_number()) return error_response(422, "InvalidArgument", "override '" + name + "' is not a number");
    const double v = value.get<double>();
    if (!std::isfinite(v)) return error_response(422, "OutOfRange", "override '" + name + "' is not finite");
    if (units == "raw") {
      raw.values[*idx] = v;
    } else {
      z[static_cast<Eigen::Index>(*idx)] = v;
    }
  }
  if (units == "raw") {
    try {
      validate_feature_vector(raw);
    } catch (const Error& e) {
      return error_response(422, e);
    }
    for (const auto& [name, value] : overrides.items()) {
      const auto i = *feature_index(name);
      z[static_cast<Eigen::Index>(i)] = (raw.values[i] - stats_.mean[i]) / stats_.stddev[i];
    }
  }
  const json baseline = evaluate(*row, base_z);
  json out = evaluate(*row, z);
  json delta;
  for (const char* key : {"env_score", "jam_score", "predicted_jam"}) {
    delta[key] = out[key].get<double>() - baseline[key].get<double>();
  }
  json dphi = json::object();
  for (const auto& [name, v] : out["phi"].items()) dphi[name] = v.get<double>() - baseline["phi"][name].get<double>();
  delta["phi"] = dphi;
  out["delta"] = delta;
  out["units"] = units;
  return {200, out};
}

ApiResponse ApiService::model() const {
  json features = json::array();
  const auto names = fit_.feature_names();
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const std::string name(kFeatureNames[i]);
    json f{{"name", name},
           {"kind", std::string(kind_name(feature_kind(i)))},
           {"mean", stats_.mean[i]},
           {"sd", stats_.stddev[i]},
           {"in_model", false},
           {"coefficient", nullptr},
           {"se", nullptr},
           {"p", nullptr},
           {"ci95", nullptr},
           {"selected", false},
           {"beta_normalized", nullptr}};
    const auto it = std::find(names.begin(), names.end(), name);
    if (it != names.end()) {
      const auto c = static_cast<Eigen::Index>(it - names.begin()) + 1;
      f["in_model"] = true;
      f["coefficient"] = fit_.betas[c];
      f["se"] = fit_.std_errors[c];
      f["p"] = fit_.p_values[c];
      f["ci95"] = {fit_.ci_low[c], fit_.ci_high[c]};
    }
    const auto s = std::find(scoring_.features.begin(), scoring_.features.end(), name);
    if (s != scoring_.features.end()) {
      f["selected"] = true;
      f["beta_normalized"] = scoring_.normalized[static_cast<Eigen::Index>(s - scoring_.features.begin())];
    }
    features.push_back(f);
  }
  json body;
  body["kind"] = "ols";
  body["intercept"] = {{"coefficient", fit_.betas[0]}, {"se", fit_.std_errors[0]}, {"p", fit_.p_values[0]},
                       {"ci95", {fit_.ci_low[0], fit_.ci_high[0]}}};
  body["features"] = features;
  body["r2"] = fit_.r2;
  body["adj_r2"] = fit_.adj_r2;
  body["n"] = fit_.n;
  body["dropped"] = fit_.dropped;
  body["score_alpha"] = scoring_.alpha;
  body["p_threshold"] = scoring_.p_threshold;
  return {200, body};
}

ApiResponse ApiService::interactions(const std::map<std::string, std::string>& query) const {
  const auto fq = query.find("features");
  if (fq == query.end() || fq->second.empty()) {
    return {200, json{{"scope", "mean"}, {"interactions", precomputed_interactions_}}};
  }
  const auto names = fit_.feature_names();
  std::vector<std::size_t> subset;
  std::set<std::string> seen;
  for (const auto& name : split(fq->second, ',')) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return error_response(422, "MissingFeature", "feature '" + name + "' is not in the model");
    if (!seen.insert(name).second) return error_response(422, "InvalidArgument", "duplicate feature '" + name + "'");
    subset.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  if (subset.size() > kInteractionLimit) {
    return error_response(422, "TooManyFeatures", "at most " + std::to_string(kInteractionLimit) + " features");
  }
  // The fitted predictor is linear, so averaging over the background equals
  // evaluating at the background mean.
  const ValueFunction vf{LinearPredictor::from_fit(fit_).model(), background_mean_.transpose()};
  std::vector<Eigen::Index> rows;
  std::string scope = "mean";
  if (const auto sq = query.find("school_id"); sq != query.end()) {
    const auto row = panel_.find(sq->second);
    if (!row) return error_response(404, "UnknownSchool", "no school '" + sq->second + "'");
    rows.push_back(static_cast<Eigen::Index>(*row));
    scope = sq->second;
  } else {
    for (Eigen::Index i = 0; i < z_model_.rows(); ++i) rows.push_back(i);
  }
  InteractionMatrix mean;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto m = shap_interactions(vf, z_model_.row(rows[r]).transpose(), subset);
    if (r == 0) {
      mean = m;
    } else {
      mean.values += m.values;
      mean.phis += m.phis;
    }
  }
  mean.values /= static_cast<double>(rows.size());
  mean.phis /= static_cast<double>(rows.size());
  return {200, json{{"scope", scope}, {"interactions", interactions_json(mean, names)}}};
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  std::string host = colon == std::string::npos ? bind : bind.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? "" : bind.substr(colon + 1);
  if (host.empty()) host = "127.0.0.1";
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "bind address '" + bind + "' needs host:port");
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range in '" + bind + "'");
  return {host, port};
}

}  // namespace schoolrun::serve
