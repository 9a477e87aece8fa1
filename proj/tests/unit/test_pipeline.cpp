#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "schoolrun/hash.hpp"
#include "schoolrun/pipeline.hpp"
#include "small_city.hpp"

using namespace schoolrun;
using nlohmann::json;
namespace fs = std::filesystem;
using testing_support::ScratchDir;
using testing_support::small_inputs;

namespace {

using Table = std::vector<std::vector<std::string>>;

Table read_csv(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  Table out;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    out.push_back(row);
  }
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return json::parse(in);
}

pipeline::Context context(const fs::path& out) {
  pipeline::Context ctx;
  ctx.out_dir = out;
  ctx.inputs_dir = small_inputs();
  ctx.seed = 3;
  return ctx;
}

// One completed run shared by the read-only checks below.
const fs::path& full_run() {
  static ScratchDir dir("run");
  static const bool done = [] {
    auto ctx = context(dir.path);
    pipeline::run_all(ctx);
    return true;
  }();
  (void)done;
  return dir.path;
}

struct Exec {
  int status;
  std::string err;
};

Exec run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(SCHOOLRUN_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

}  // namespace

TEST_CASE("every stage writes versioned artifacts and a manifest") {
  const auto& dir = full_run();
  const json run = read_json(dir / pipeline::kRunManifest);
  std::set<std::string> stages;
  for (const auto& [name, m] : run.at("stages").items()) {
    stages.insert(name);
    CHECK(m.at("seed") == 3);
    CHECK(m.at("source_hash").get<std::string>().size() == 64);
    for (const auto& [file, hash] : m.at("outputs").items()) {
      CHECK(fs::exists(dir / file));
      CHECK(sha256_file(dir / file) == hash.get<std::string>());
    }
  }
  CHECK(stages == std::set<std::string>{"ingest", "scenescape", "features", "fit-m1", "fit-m2",
                                        "shap", "score", "report"});
  for (const char* f : {pipeline::kIngest, pipeline::kScenescape, pipeline::kFeatures, pipeline::kModel1,
                        pipeline::kModel2, pipeline::kShap, pipeline::kScoring}) {
    const json j = read_json(dir / f);
    REQUIRE(j.contains("meta"));
    CHECK(j["meta"]["seed"] == 3);
    CHECK(!j["meta"]["inputs"].empty());
  }
  // Artifacts reference their upstream files by hash.
  const json m2 = read_json(dir / pipeline::kModel2);
  CHECK(m2["meta"]["inputs"]["panel.csv"] == sha256_file(dir / pipeline::kPanel));
  const json ingest = read_json(dir / pipeline::kIngest);
  CHECK(ingest["meta"]["inputs"]["inputs/roads.geojson"] == sha256_file(small_inputs() / "roads.geojson"));
}

TEST_CASE("identical runs in different directories hash identically") {
  ScratchDir other("rerun");
  auto ctx = context(other.path);
  pipeline::run_all(ctx);
  const auto a = pipeline::artifact_hashes(full_run());
  const auto b = pipeline::artifact_hashes(other.path);
  CHECK(a.size() == 8);
  CHECK(a == b);
}

TEST_CASE("later stages find inputs through the ingest workspace") {
  ScratchDir dir("workspace");
  auto ctx = context(dir.path);
  pipeline::run_ingest(ctx);
  ctx.inputs_dir.clear();
  pipeline::run_scenescape(ctx);
  pipeline::run_features(ctx);
  CHECK(sha256_file(dir.path / pipeline::kPanel) == sha256_file(full_run() / pipeline::kPanel));
}

TEST_CASE("missing upstream artifact raises MissingArtifact") {
  ScratchDir dir("missing");
  auto ctx = context(dir.path);
  try {
    pipeline::run_fit_m2(ctx);
    FAIL("expected MissingArtifact");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingArtifact);
  }
}

TEST_CASE("report tables match an independent recomputation") {
  const auto& dir = full_run();
  const fs::path rep = dir / pipeline::kReportDir;
  for (const char* f : {"did_effects.csv", "model2_coefficients.csv", "shap_importance.csv", "scores.csv",
                        "road_share.csv", "summary.json"}) {
    CHECK(fs::exists(rep / f));
  }

  // Panel as plain numbers.
  const Table panel = read_csv(dir / pipeline::kPanel);
  const std::vector<std::string> header = panel[0];
  const std::size_t n = panel.size() - 1;
  std::map<std::string, std::vector<double>> col;
  for (std::size_t c = 1; c < header.size(); ++c) {
    for (std::size_t r = 1; r <= n; ++r) col[header[c]].push_back(std::stod(panel[r][c]));
  }
  auto zcol = [&](const std::string& name) {
    const auto& v = col.at(name);
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) s += (x - m) * (x - m);
    s = std::sqrt(s / static_cast<double>(v.size()));
    std::vector<double> z;
    for (double x : v) z.push_back((x - m) / s);
    return z;
  };

  // Coefficients: normal equations on the Z-scored panel without BRH.
  const Table coef = read_csv(rep / "model2_coefficients.csv");
  CHECK(coef[0] == std::vector<std::string>{"name", "coefficient", "se", "t", "p", "ci_low", "ci_high"});
  std::vector<std::string> names;
  for (std::size_t r = 2; r < coef.size(); ++r) names.push_back(coef[r][0]);
  CHECK(std::find(names.begin(), names.end(), "BRH") == names.end());
  CHECK(names.size() == 24);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size() + 1));
  X.col(0).setOnes();
  std::vector<std::vector<double>> z(names.size());
  for (std::size_t k = 0; k < names.size(); ++k) {
    z[k] = zcol(names[k]);
    for (std::size_t r = 0; r < n; ++r) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k + 1)) = z[k][r];
  }
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(col.at("jam").data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  std::map<std::string, double> b, p;
  for (std::size_t r = 1; r < coef.size(); ++r) {
    CHECK(std::fabs(std::stod(coef[r][1]) - beta[static_cast<Eigen::Index>(r - 1)]) < 1e-8);
    b[coef[r][0]] = std::stod(coef[r][1]);
    p[coef[r][0]] = std::stod(coef[r][4]);
  }

  // Importance: mean |beta (z - mean z)| in descending order.
  const Table imp = read_csv(rep / "shap_importance.csv");
  std::vector<std::pair<double, std::string>> expect;
  for (std::size_t k = 0; k < names.size(); ++k) {
    double s = 0;
    for (double v : z[k]) s += std::fabs(b[names[k]] * v);
    expect.emplace_back(s / static_cast<double>(n), names[k]);
  }
  std::stable_sort(expect.begin(), expect.end(), [](auto& l, auto& r) { return l.first > r.first; });
  REQUIRE(imp.size() == names.size() + 1);
  for (std::size_t r = 0; r < names.size(); ++r) {
    CHECK(imp[r + 1][1] == expect[r].second);
    CHECK(std::stod(imp[r + 1][2]) == doctest::Approx(expect[r].first).epsilon(1e-9));
  }

  // Scores: 14 - sum beta' z over features with p < 0.1.
  double scale = 0;
  for (const auto& [name, v] : b) {
    if (name != "intercept" && p[name] < 0.1) scale = std::max(scale, std::fabs(v));
  }
  const Table scores = read_csv(rep / "scores.csv");
  REQUIRE(scores.size() == n + 1);
  for (std::size_t r = 0; r < n; ++r) {
    double jam = 0;
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (p[names[k]] < 0.1) jam += b[names[k]] / scale * z[k][r];
    }
    CHECK(scores[r + 1][0] == panel[r + 1][0]);
    CHECK(std::stod(scores[r + 1][2]) == doctest::Approx(jam).epsilon(1e-9));
    CHECK(std::stod(scores[r + 1][1]) == doctest::Approx(14.0 - jam).epsilon(1e-9));
  }

  // Congested-road shares tallied straight from the observation file.
  std::map<std::string, std::string> category;
  const json roads = read_json(small_inputs() / "roads.geojson");
  for (const auto& f : roads["features"]) {
    category[f["properties"]["id"].get<std::string>()] = f["properties"]["category"].get<std::string>();
  }
  std::set<std::string> school_roads;
  const json ingest = read_json(dir / pipeline::kIngest);
  for (const auto& s : ingest["schools"]) {
    for (const auto& r : s["roads"]) school_roads.insert(r.get<std::string>());
  }
  std::map<std::string, std::pair<int, int>> tally;  // key -> roads, congested
  const Table obs = read_csv(small_inputs() / "observations.csv");
  for (std::size_t r = 1; r < obs.size(); ++r) {
    const std::string key = obs[r][1] + "," + category[obs[r][0]] + "," + (school_roads.count(obs[r][0]) ? "1" : "0");
    auto& t = tally[key];
    ++t.first;
    if (std::stoi(obs[r][2]) >= 3) ++t.second;
  }
  const Table share = read_csv(rep / "road_share.csv");
  CHECK(share[0] == std::vector<std::string>{"timestamp", "category", "has_school", "roads", "congested", "percent"});
  CHECK(share.size() == tally.size() + 1);
  for (std::size_t r = 1; r < share.size(); ++r) {
    const auto& t = tally.at(share[r][0] + "," + share[r][1] + "," + share[r][2]);
    CHECK(std::stoi(share[r][3]) == t.first);
    CHECK(std::stoi(share[r][4]) == t.second);
    CHECK(std::stod(share[r][5]) == doctest::Approx(100.0 * t.second / t.first).epsilon(1e-12));
  }

  // Marginal effects: both panels, four categories per dummy, summing to zero.
  const Table did = read_csv(rep / "did_effects.csv");
  CHECK(did[0] == std::vector<std::string>{"panel", "dummy", "category", "label", "effect_pct", "se_pct", "p"});
  std::map<std::string, std::pair<int, double>> sums;
  for (std::size_t r = 1; r < did.size(); ++r) {
    auto& s = sums[did[r][0] + "/" + did[r][1]];
    ++s.first;
    s.second += std::stod(did[r][4]);
  }
  CHECK(sums.size() == 5);
  for (const auto& [key, s] : sums) {
    CAPTURE(key);
    CHECK(s.first == 4);
    CHECK(std::fabs(s.second) < 1e-8);
  }
}

TEST_CASE("cli exits 2 with JSON error when an artifact is missing") {
  ScratchDir dir("cli-missing");
  const auto r = run_cli("fit-m2 --out-dir " + (dir.path / "run").string(), dir.path);
  CHECK(r.status == 2);
  const json err = json::parse(r.err.substr(0, r.err.find('\n')));
  CHECK(err["error"] == "MissingArtifact");
  CHECK(err["message"].get<std::string>().find("features.json") != std::string::npos);
}

TEST_CASE("cli reports bad configs and usage as JSON with exit 1") {
  ScratchDir dir("cli-bad");
  {
    std::ofstream(dir.path / "bad.json") << "{not json";
  }
  auto r = run_cli("--config " + (dir.path / "bad.json").string() + " ingest --out-dir " +
                       (dir.path / "run").string() + " --inputs " + small_inputs().string(),
                   dir.path);
  CHECK(r.status == 1);
  CHECK(json::parse(r.err.substr(0, r.err.find('\n')))["error"] == "ParseError");
  r = run_cli("no-such-stage", dir.path);
  CHECK(r.status == 1);
  CHECK(json::parse(r.err.substr(0, r.err.find('\n')))["error"] == "UsageError");
}

TEST_CASE("cli synth then run reproduces artifact hashes") {
  ScratchDir dir("cli-run");
  {
    std::ofstream(dir.path / "cfg.json")
        << R"({"synth": {"n_schools": 80, "cell_cols": 10, "cell_rows": 9, "model1_observations": 20000}})";
  }
  const std::string cfg = " --seed 5 --config " + (dir.path / "cfg.json").string();
  REQUIRE(run_cli(cfg + " synth --out-dir " + (dir.path / "in").string(), dir.path).status == 0);
  for (const char* out : {"a", "b"}) {
    const auto r = run_cli(cfg + " run --out-dir " + (dir.path / out).string() + " --inputs " +
                               (dir.path / "in").string(),
                           dir.path);
    REQUIRE(r.status == 0);
  }
  CHECK(pipeline::artifact_hashes(dir.path / "a") == pipeline::artifact_hashes(dir.path / "b"));
  CHECK(read_json(dir.path / "a" / pipeline::kModel2)["meta"]["seed"] == 5);
}
