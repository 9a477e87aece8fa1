#include "schoolrun/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include "schoolrun/calendar.hpp"
#include "schoolrun/csv.hpp"
#include "schoolrun/gologit.hpp"
#include "schoolrun/hash.hpp"
#include "schoolrun/ingest.hpp"
#include "schoolrun/network.hpp"
#include "schoolrun/ols.hpp"
#include "schoolrun/scenescape.hpp"
#include "schoolrun/scoring.hpp"
#include "schoolrun/shapx.hpp"

namespace schoolrun::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kWorkspace = "workspace.json";
constexpr const char* kManifestDir = "manifests";
constexpr const char* kLayerFiles[] = {"poi.csv", "buildings.csv", "landuse.csv", "population.csv",
                                       "syntax.csv"};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "missing artifact '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kMissingArtifact, "cannot write '" + path.string() + "'");
  out << text;
}

json warnings_json(const Warnings& w, std::size_t from = 0) {
  json out = json::array();
  for (std::size_t i = from; i < w.size(); ++i) {
    out.push_back({{"code", std::string(warning_code_name(w[i].code))}, {"message", w[i].message}});
  }
  return out;
}

json zscore_json(const ZScoreStats& s) {
  return {{"names", s.names}, {"mean", s.mean}, {"stddev", s.stddev}};
}

ZScoreStats zscore_from_json(const json& j) {
  ZScoreStats s;
  s.names = j.at("names").get<std::vector<std::string>>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("stddev").get<std::vector<double>>();
  if (s.mean.size() != s.names.size() || s.stddev.size() != s.names.size()) {
    throw Error(ErrorCode::kArtifactMismatch, "z-score statistics have inconsistent lengths");
  }
  return s;
}

std::vector<std::string> feature_names() { return {kFeatureNames.begin(), kFeatureNames.end()}; }

std::vector<std::string> share_names() {
  return {kFeatureNames.begin() + kFirstShareIndex, kFeatureNames.end()};
}

fs::path resolve_inputs(const Context& ctx) {
  if (!ctx.inputs_dir.empty()) return ctx.inputs_dir;
  const fs::path ws = ctx.out_dir / kWorkspace;
  if (!fs::exists(ws)) {
    throw Error(ErrorCode::kMissingArtifact,
                "no inputs directory given and no '" + ws.string() + "' from a prior ingest");
  }
  return json::parse(read_file(ws)).at("inputs").get<std::string>();
}

// Tracks the hashed inputs and outputs of one stage and stamps artifacts.
class Stage {
 public:
  Stage(Context& ctx, std::string name)
      : ctx_(ctx), name_(std::move(name)), warnings_from_(ctx.warnings.size()) {
    fs::create_directories(ctx_.out_dir);
  }

  fs::path input(const fs::path& path, const std::string& key) {
    if (!fs::exists(path)) {
      throw Error(ErrorCode::kMissingArtifact, "stage " + name_ + " needs '" + path.string() + "'");
    }
    inputs_[key] = sha256_file(path);
    return path;
  }

  std::optional<fs::path> optional_input(const fs::path& path, const std::string& key) {
    if (!fs::exists(path)) return std::nullopt;
    return input(path, key);
  }

  fs::path artifact(const char* name) { return input(ctx_.out_dir / name, name); }

  json read_artifact(const char* name) { return json::parse(read_file(artifact(name))); }

  json meta() const {
    return {{"stage", name_}, {"seed", ctx_.seed}, {"source_hash", source_hash()}, {"inputs", inputs_}};
  }

  void write_json(const std::string& name, json body) {
    body["meta"] = meta();
    write_text(name, body.dump(2) + "\n");
  }

  void write_text(const std::string& name, const std::string& text) {
    const fs::path p = ctx_.out_dir / name;
    write_file(p, text);
    outputs_[name] = sha256_hex(text);
  }

  void record_output(const std::string& name) { outputs_[name] = sha256_file(ctx_.out_dir / name); }

  void finish() {
    json m = meta();
    m["outputs"] = outputs_;
    m["warnings"] = warnings_json(ctx_.warnings, warnings_from_);
    write_file(ctx_.out_dir / kManifestDir / (name_ + ".json"), m.dump(2) + "\n");
    json run;
    run["stages"] = json::object();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(ctx_.out_dir / kManifestDir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      json s = json::parse(read_file(f));
      run["stages"][s.at("stage").get<std::string>()] = s;
    }
    write_file(ctx_.out_dir / kRunManifest, run.dump(2) + "\n");
  }

 private:
  std::string source_hash() const {
    std::string joined;
    for (const auto& [k, v] : inputs_) joined += k + "=" + v + "\n";
    return sha256_hex(joined);
  }

  Context& ctx_;
  std::string name_;
  std::size_t warnings_from_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

struct IngestView {
  CityFrame frame;
  double buffer_m = kDefaultNeighborhoodRadiusM;
  CalendarConfig calendar;
  std::vector<School> schools;
  std::vector<std::vector<std::string>> road_ids;
  std::vector<GraphMetrics> graph;
  std::vector<std::optional<double>> jam;
};

IngestView parse_ingest(const json& j) {
  IngestView v;
  v.frame.center = {j.at("frame").at("x").get<double>(), j.at("frame").at("y").get<double>()};
  v.buffer_m = j.at("buffer_m").get<double>();
  v.calendar = CalendarConfig::from_json(j.at("calendar").dump());
  for (const auto& s : j.at("schools")) {
    v.schools.emplace_back(s.at("id").get<std::string>(), Point{s.at("x").get<double>(), s.at("y").get<double>()},
                           v.frame);
    v.road_ids.push_back(s.at("roads").get<std::vector<std::string>>());
    v.graph.push_back({s.at("mean_betweenness").get<double>(), s.at("intersections").get<int>()});
    v.jam.push_back(s.at("jam").is_null() ? std::nullopt : std::optional<double>(s.at("jam").get<double>()));
  }
  return v;
}

std::vector<Neighborhood> neighborhoods_of(const IngestView& v, const RoadNetwork& net) {
  std::vector<Neighborhood> out;
  for (std::size_t s = 0; s < v.schools.size(); ++s) {
    Neighborhood nb{v.schools[s].id(), v.buffer_m, {}};
    for (const auto& id : v.road_ids[s]) nb.roads.push_back(net.require(id));
    std::sort(nb.roads.begin(), nb.roads.end());
    out.push_back(std::move(nb));
  }
  return out;
}

struct Model2View {
  OlsFit fit;
  ZScoreStats zscore;
};

Model2View parse_model2(const json& j) {
  return {OlsFit::from_json(j.at("fit")), zscore_from_json(j.at("zscore"))};
}

// Z-scored values of `names` for one panel row.
Eigen::VectorXd z_row(const ZScoreStats& stats, const FeatureVector& raw,
                      const std::vector<std::string>& names) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto it = std::find(stats.names.begin(), stats.names.end(), names[k]);
    if (it == stats.names.end()) {
      throw Error(ErrorCode::kArtifactMismatch, "no z-score statistics for '" + names[k] + "'");
    }
    const auto i = static_cast<std::size_t>(it - stats.names.begin());
    z[static_cast<Eigen::Index>(k)] = (raw[names[k]] - stats.mean[i]) / stats.stddev[i];
  }
  return z;
}

Eigen::MatrixXd z_matrix(const ZScoreStats& stats, const NeighborhoodPanel& panel,
                         const std::vector<std::string>& names) {
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(panel.rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < panel.rows.size(); ++i) {
    Z.row(static_cast<Eigen::Index>(i)) = z_row(stats, panel.rows[i].features, names).transpose();
  }
  return Z;
}

template <class T>
T config_value(const Context& ctx, const char* key, T fallback) {
  if (ctx.config.contains(key)) return ctx.config.at(key).get<T>();
  return fallback;
}

}  // namespace

json load_config(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, "config '" + path.string() + "': " + e.what());
  }
}

json read_json_artifact(const fs::path& path) { return json::parse(read_file(path)); }

// ---- ingest ---------------------------------------------------------------

void run_ingest(Context& ctx) {
  const fs::path in = resolve_inputs(ctx);
  Stage st(ctx, "ingest");

  json city = json::object();
  if (auto p = st.optional_input(in / "city.json", "inputs/city.json")) city = json::parse(read_file(*p));
  CityFrame frame;  // placeholder centre (0, 0) unless configured
  const json* center = ctx.config.contains("center") ? &ctx.config["center"]
                       : city.contains("center")     ? &city["center"]
                                                     : nullptr;
  if (center) frame.center = {center->at("x").get<double>(), center->at("y").get<double>()};
  const double buffer = ctx.config.contains("buffer_m") ? ctx.config["buffer_m"].get<double>()
                        : city.contains("buffer_m")     ? city["buffer_m"].get<double>()
                                                        : kDefaultNeighborhoodRadiusM;

  CalendarConfig calendar = CalendarConfig::study_week_2023();
  if (auto p = st.optional_input(in / "calendar.json", "inputs/calendar.json")) calendar = CalendarConfig::load(*p);

  const auto network = load_roads(st.input(in / "roads.geojson", "inputs/roads.geojson"));
  const auto schools = load_schools(st.input(in / "schools.csv", "inputs/schools.csv"), frame);
  const auto obs = load_observations(st.input(in / "observations.csv", "inputs/observations.csv"), network, calendar);
  const auto nbhds = build_neighborhoods(schools, network, buffer, &ctx.warnings);
  const auto bc = edge_betweenness(network);

  json rows = json::array();
  for (std::size_t s = 0; s < schools.size(); ++s) {
    const auto gm = graph_metrics(network, bc, schools[s], nbhds[s], &ctx.warnings);
    json jam = nullptr;
    try {
      jam = congestion_frequency(obs, nbhds[s], school_run_slot);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoObservations) throw;
      ctx.warnings.push_back({WarningCode::kEmptyNeighborhood,
                              "school " + schools[s].id() + " has no school-run observations; excluded"});
    }
    json ids = json::array();
    for (auto r : nbhds[s].roads) ids.push_back(network.segments()[r].id());
    rows.push_back({{"id", schools[s].id()},
                    {"x", schools[s].location().x},
                    {"y", schools[s].location().y},
                    {"angle_deg", schools[s].angle_deg()},
                    {"distance_km", schools[s].distance_km()},
                    {"roads", ids},
                    {"mean_betweenness", gm.mean_betweenness},
                    {"intersections", gm.intersections},
                    {"jam", jam}});
  }

  std::string share = "timestamp,category,has_school,roads,congested,percent\n";
  for (const auto& r : congested_road_share(obs, network, nbhds)) {
    share += format_timestamp(r.timestamp) + "," + std::string(to_string(r.group.category)) + "," +
             (r.group.has_school ? "1" : "0") + "," + std::to_string(r.roads) + "," +
             std::to_string(r.congested) + "," + csv::format_double(r.percent) + "\n";
  }
  st.write_text(kRoadShare, share);

  json body;
  body["frame"] = {{"x", frame.center.x}, {"y", frame.center.y}};
  body["buffer_m"] = buffer;
  body["calendar"] = json::parse(calendar.to_json());
  body["counts"] = {{"roads", network.segments().size()},
                    {"nodes", network.nodes().size()},
                    {"schools", schools.size()},
                    {"observations", obs.size()}};
  body["schools"] = rows;
  st.write_json(kIngest, body);

  // Local pointer for later stages; not an artifact.
  write_file(ctx.out_dir / kWorkspace, json{{"inputs", fs::absolute(in).string()}}.dump(2) + "\n");
  st.finish();
}

// ---- scenescape -----------------------------------------------------------

void run_scenescape(Context& ctx) {
  const fs::path in = resolve_inputs(ctx);
  Stage st(ctx, "scenescape");
  st.artifact(kIngest);
  bool placeholder = true;
  LabelMask mask = LabelMask::evenly_spaced();
  if (auto p = st.optional_input(in / "label_mask.txt", "inputs/label_mask.txt")) {
    mask = LabelMask::load(*p);
    placeholder = false;
  }
  const auto network = load_roads(st.input(in / "roads.geojson", "inputs/roads.geojson"));
  const auto vectors = load_scene_vectors(st.input(in / "scenes.csv", "inputs/scenes.csv"), network, mask);
  const auto model = fit_scenescapes(vectors, ctx.seed, config_value<int>(ctx, "n_init", 10));
  json body;
  body["model"] = model.to_json();
  body["mask"] = {{"indices", mask.indices()}, {"placeholder", placeholder}};
  body["vectors"] = vectors.size();
  st.write_json(kScenescape, body);
  st.finish();
}

// ---- features -------------------------------------------------------------

void run_features(Context& ctx) {
  const fs::path in = resolve_inputs(ctx);
  Stage st(ctx, "features");
  const auto ingest = parse_ingest(st.read_artifact(kIngest));
  const json sj = st.read_artifact(kScenescape);
  const auto model = ScenescapeModel::from_json(sj.at("model"));
  const LabelMask mask(sj.at("mask").at("indices").get<std::vector<std::size_t>>());
  for (const char* f : kLayerFiles) st.input(in / f, std::string("inputs/") + f);
  const auto layers = FeatureLayers::load(in);
  const auto network = load_roads(st.input(in / "roads.geojson", "inputs/roads.geojson"));
  const auto vectors = load_scene_vectors(st.input(in / "scenes.csv", "inputs/scenes.csv"), network, mask);
  const auto nbhds = neighborhoods_of(ingest, network);

  std::vector<School> schools;
  std::vector<Neighborhood> kept;
  std::vector<std::size_t> index;
  json excluded = json::array();
  for (std::size_t s = 0; s < ingest.schools.size(); ++s) {
    if (!ingest.jam[s]) {
      excluded.push_back(ingest.schools[s].id());
      continue;
    }
    schools.push_back(ingest.schools[s]);
    kept.push_back(nbhds[s]);
    index.push_back(s);
  }
  const auto shares = all_neighborhood_shares(model, vectors, schools, kept);

  NeighborhoodPanel panel;
  for (std::size_t i = 0; i < schools.size(); ++i) {
    Table1Inputs t1 = layers.inputs_for(schools[i].id());
    t1.graph = ingest.graph[index[i]];
    PanelRow row;
    row.school_id = schools[i].id();
    row.jam = *ingest.jam[index[i]];
    row.features = derive_table1_features(schools[i], t1);
    for (std::size_t g = 0; g < kScenescapeCount; ++g) row.features[kFirstShareIndex + g] = shares[i][g];
    validate_feature_vector(row.features);
    panel.rows.push_back(row);
  }
  panel.save(ctx.out_dir / kPanel);
  st.record_output(kPanel);
  json body;
  body["schools"] = panel.rows.size();
  body["excluded"] = excluded;
  body["feature_names"] = feature_names();
  body["panel_sha256"] = sha256_file(ctx.out_dir / kPanel);
  st.write_json(kFeatures, body);
  st.finish();
}

// ---- Model 1 --------------------------------------------------------------

void run_fit_m1(Context& ctx) {
  const fs::path in = resolve_inputs(ctx);
  Stage st(ctx, "fit-m1");
  const auto ingest = parse_ingest(st.read_artifact(kIngest));
  const auto network = load_roads(st.input(in / "roads.geojson", "inputs/roads.geojson"));
  const auto obs = load_observations(st.input(in / "observations.csv", "inputs/observations.csv"), network,
                                     ingest.calendar);
  const auto data_a = did_design_a(obs);
  const auto fit_a = fit_gologit(GologitSpec{}, data_a, &ctx.warnings);
  const auto data_b = did_design_b(obs, ingest.calendar);
  GologitSpec spec_b;
  spec_b.feature_names = kDidFeaturesB;
  const auto fit_b = fit_gologit(spec_b, data_b, &ctx.warnings);
  const auto rows = did_report(fit_a, data_a, fit_b, data_b);

  auto wald = [](const GologitFit& f) {
    json out = json::array();
    for (const auto& w : wald_tests(f)) {
      out.push_back({{"name", w.name}, {"estimate", w.estimate}, {"se", w.se}, {"z", w.z}, {"p", w.p},
                     {"ci95", {w.ci_low, w.ci_high}}});
    }
    return out;
  };
  json effects = json::array();
  for (const auto& r : rows) {
    effects.push_back({{"panel", r.panel}, {"dummy", r.dummy}, {"category", r.category},
                       {"label", kCongestionLabels[static_cast<std::size_t>(r.category - 1)]},
                       {"effect", r.effect}, {"se", r.se}, {"p", r.p}});
  }
  json body;
  body["design_a"] = {{"fit", fit_a.to_json()}, {"wald", wald(fit_a)}, {"rows", data_a.rows()}};
  body["design_b"] = {{"fit", fit_b.to_json()}, {"wald", wald(fit_b)}, {"rows", data_b.rows()}};
  body["marginal_effects"] = effects;
  st.write_text(kDidCsv, did_report_csv(rows));
  st.write_json(kModel1, body);
  st.finish();
}

// ---- Model 2 --------------------------------------------------------------

void run_fit_m2(Context& ctx) {
  Stage st(ctx, "fit-m2");
  st.artifact(kFeatures);
  const auto panel = NeighborhoodPanel::load(st.artifact(kPanel));
  const auto names = feature_names();
  const auto zs = zscore(panel.feature_matrix(), names);
  const auto shares = share_names();
  const auto fit = fit_ols_with_share_fallback(zs.z, panel.jam_vector(), names, shares, "BRH", &ctx.warnings);
  const auto kept = fit.feature_names();
  Eigen::MatrixXd Zfit = z_matrix(zs.stats, panel, kept);
  json body;
  body["fit"] = fit.to_json();
  body["zscore"] = zscore_json(zs.stats);
  body["vif"] = vif(Zfit, kept).to_json();
  st.write_text(kModel2Csv, fit.to_csv());
  st.write_json(kModel2, body);
  st.finish();
}

// ---- Shapley --------------------------------------------------------------

void run_shap(Context& ctx) {
  Stage st(ctx, "shap");
  const auto m2 = parse_model2(st.read_artifact(kModel2));
  const auto panel = NeighborhoodPanel::load(st.artifact(kPanel));
  const auto names = m2.fit.feature_names();
  const Eigen::MatrixXd Z = z_matrix(m2.zscore, panel, names);
  const ValueFunction vf{LinearPredictor::from_fit(m2.fit).model(), Z};

  std::vector<ShapExplanation> expl;
  json schools = json::array();
  double max_residual = 0.0;
  for (std::size_t i = 0; i < panel.rows.size(); ++i) {
    const Eigen::VectorXd x = Z.row(static_cast<Eigen::Index>(i)).transpose();
    auto e = shapley_linear(m2.fit, Z, x);
    max_residual = std::max(max_residual, std::abs(e.phi0 + e.phis.sum() - e.prediction));
    schools.push_back({{"id", panel.rows[i].school_id},
                       {"prediction", e.prediction},
                       {"phi", std::vector<double>(e.phis.data(), e.phis.data() + e.phis.size())}});
    expl.push_back(std::move(e));
  }
  const auto importance = shap_importance(expl, names);

  const auto top = std::min<std::size_t>(config_value<std::size_t>(ctx, "interaction_features", 5),
                                         std::min(names.size(), kInteractionLimit));
  std::vector<std::size_t> subset;
  for (std::size_t k = 0; k < top; ++k) subset.push_back(importance[k].index);
  InteractionMatrix mean;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const auto m = shap_interactions(vf, Z.row(i).transpose(), subset);
    if (i == 0) {
      mean = m;
    } else {
      mean.values += m.values;
      mean.phis += m.phis;
    }
  }
  if (Z.rows() > 0) {
    mean.values /= static_cast<double>(Z.rows());
    mean.phis /= static_cast<double>(Z.rows());
  }

  std::string csv_text = "rank,name,mean_abs_phi\n";
  for (std::size_t r = 0; r < importance.size(); ++r) {
    csv_text += std::to_string(r + 1) + "," + importance[r].name + "," +
                csv::format_double(importance[r].mean_abs_phi) + "\n";
  }
  json body;
  body["feature_names"] = names;
  body["phi0"] = expl.empty() ? 0.0 : expl.front().phi0;
  body["schools"] = schools;
  body["importance"] = importance_json(importance);
  body["interactions"] = interactions_json(mean, names);
  body["max_efficiency_residual"] = max_residual;
  st.write_text(kShapCsv, csv_text);
  st.write_json(kShap, body);
  st.finish();
}

// ---- scoring --------------------------------------------------------------

void run_score(Context& ctx) {
  Stage st(ctx, "score");
  const auto m2 = parse_model2(st.read_artifact(kModel2));
  const auto panel = NeighborhoodPanel::load(st.artifact(kPanel));
  const auto sf = build_scoring(m2.fit, config_value<double>(ctx, "score_alpha", kDefaultScoreAlpha),
                                config_value<double>(ctx, "p_threshold", 0.1));
  std::vector<ScoreRow> rows;
  std::vector<double> jam_scores, observed;
  for (const auto& r : panel.rows) {
    const Eigen::VectorXd z = z_row(m2.zscore, r.features, sf.features);
    std::map<std::string, double> m;
    for (std::size_t k = 0; k < sf.features.size(); ++k) m[sf.features[k]] = z[static_cast<Eigen::Index>(k)];
    const Score s = sf.score(m);
    rows.push_back({r.school_id, s});
    jam_scores.push_back(s.jam_score);
    observed.push_back(r.jam);
  }
  json body;
  body["scoring"] = sf.to_json();
  body["validation"] = {{"r2", validate_scores(jam_scores, observed)}, {"n", rows.size()}};
  st.write_text(kScores, score_table_csv(rows));
  st.write_json(kScoring, body);
  st.finish();
}

// ---- report ---------------------------------------------------------------

void run_report(Context& ctx) {
  Stage st(ctx, "report");
  const json m1 = st.read_artifact(kModel1);
  const json m2 = st.read_artifact(kModel2);
  const json shap = st.read_artifact(kShap);
  const json scoring = st.read_artifact(kScoring);
  const fs::path dir = fs::path(kReportDir);
  for (const char* f : {kDidCsv, kModel2Csv, kShapCsv, kScores, kRoadShare}) {
    st.write_text((dir / f).string(), read_file(st.artifact(f)));
  }
  const auto& fit = m2.at("fit");
  json top = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(10, shap.at("importance").size()); ++i) {
    top.push_back(shap.at("importance")[i].at("feature"));
  }
  json summary;
  summary["model1"] = {{"did_rows", m1.at("marginal_effects").size()},
                       {"converged_a", m1.at("design_a").at("fit").at("flags").at("converged")},
                       {"converged_b", m1.at("design_b").at("fit").at("flags").at("converged")}};
  summary["model2"] = {{"r2", fit.at("r2")}, {"adj_r2", fit.at("adj_r2")}, {"n", fit.at("n")},
                       {"k", fit.at("k")}, {"dropped", fit.at("dropped")}};
  json selected = json::array();
  for (const auto& t : scoring.at("scoring").at("terms")) selected.push_back(t.at("feature"));
  summary["scoring"] = {{"selected", selected}, {"validation_r2", scoring.at("validation").at("r2")}};
  summary["shap"] = {{"top_features", top}, {"max_efficiency_residual", shap.at("max_efficiency_residual")}};
  st.write_json((dir / "summary.json").string(), summary);
  st.finish();
}

void run_all(Context& ctx) {
  run_ingest(ctx);
  run_scenescape(ctx);
  run_features(ctx);
  run_fit_m1(ctx);
  run_fit_m2(ctx);
  run_shap(ctx);
  run_score(ctx);
  run_report(ctx);
}

std::map<std::string, std::map<std::string, std::string>> artifact_hashes(const fs::path& out_dir) {
  const json run = read_json_artifact(out_dir / kRunManifest);
  std::map<std::string, std::map<std::string, std::string>> out;
  for (const auto& [stage, m] : run.at("stages").items()) {
    out[stage] = m.at("outputs").get<std::map<std::string, std::string>>();
  }
  return out;
}

}  // namespace schoolrun::pipeline
