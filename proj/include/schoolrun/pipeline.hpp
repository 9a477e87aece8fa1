#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "schoolrun/error.hpp"

namespace schoolrun::pipeline {

// Artifact file names inside the run directory.
inline constexpr const char* kIngest = "ingest.json";
inline constexpr const char* kRoadShare = "road_share.csv";
inline constexpr const char* kScenescape = "scenescape.json";
inline constexpr const char* kPanel = "panel.csv";
inline constexpr const char* kFeatures = "features.json";
inline constexpr const char* kModel1 = "model1.json";
inline constexpr const char* kDidCsv = "did_effects.csv";
inline constexpr const char* kModel2 = "model2.json";
inline constexpr const char* kModel2Csv = "model2_coefficients.csv";
inline constexpr const char* kShap = "shap.json";
inline constexpr const char* kShapCsv = "shap_importance.csv";
inline constexpr const char* kScoring = "scoring.json";
inline constexpr const char* kScores = "scores.csv";
inline constexpr const char* kReportDir = "report";
inline constexpr const char* kRunManifest = "run_manifest.json";

// Run settings. Keys of `config` (all optional): center {x, y}, buffer_m,
// n_init, score_alpha, p_threshold, interaction_features.
struct Context {
  std::filesystem::path out_dir;
  std::filesystem::path inputs_dir;  // empty: taken from the run's workspace.json
  std::uint64_t seed = 7;
  nlohmann::json config = nlohmann::json::object();
  Warnings warnings;
};

// Reads a JSON config file; throws MissingArtifact or ParseError.
nlohmann::json load_config(const std::filesystem::path& path);

void run_ingest(Context& ctx);
void run_scenescape(Context& ctx);
void run_features(Context& ctx);
void run_fit_m1(Context& ctx);
void run_fit_m2(Context& ctx);
void run_shap(Context& ctx);
void run_score(Context& ctx);
void run_report(Context& ctx);

// ingest through report in order.
void run_all(Context& ctx);

// Stage name -> {output file -> sha256}, from run_manifest.json.
std::map<std::string, std::map<std::string, std::string>> artifact_hashes(
    const std::filesystem::path& out_dir);

// Parses an artifact, throwing MissingArtifact when it is absent.
nlohmann::json read_json_artifact(const std::filesystem::path& path);

}  // namespace schoolrun::pipeline
