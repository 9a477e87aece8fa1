#include <cmath>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "schoolrun/pipeline.hpp"
#include "schoolrun/serve.hpp"
#include "small_city.hpp"

#include "httplib.h"

using namespace schoolrun;
using nlohmann::json;
namespace fs = std::filesystem;
using serve::ApiService;
using testing_support::ScratchDir;
using testing_support::small_inputs;

namespace {

const fs::path& run_dir() {
  static ScratchDir dir("serve-run");
  static const bool done = [] {
    pipeline::Context ctx;
    ctx.out_dir = dir.path;
    ctx.inputs_dir = small_inputs();
    ctx.seed = 3;
    pipeline::run_all(ctx);
    return true;
  }();
  (void)done;
  return dir.path;
}

const ApiService& api() {
  static const ApiService service = ApiService::load(run_dir());
  return service;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

json whatif(const std::string& id, const json& overrides, const std::string& units = "raw") {
  const auto r = api().handle("POST", "/whatif", {},
                              json{{"school_id", id}, {"overrides", overrides}, {"units", units}}.dump());
  REQUIRE(r.status == 200);
  return r.body;
}

std::string first_school() { return api().handle("GET", "/schools").body["schools"][0]["school_id"]; }

}  // namespace

TEST_CASE("service loads a complete run") {
  REQUIRE(api().ready());
  const auto r = api().handle("GET", "/schools");
  CHECK(r.status == 200);
  const auto panel = NeighborhoodPanel::load(run_dir() / pipeline::kPanel);
  REQUIRE(r.body["schools"].size() == panel.rows.size());
  for (std::size_t i = 0; i < panel.rows.size(); ++i) {
    CHECK(r.body["schools"][i]["school_id"] == panel.rows[i].school_id);
  }
}

TEST_CASE("missing artifacts answer 409 on every endpoint") {
  ScratchDir empty("serve-empty");
  const auto svc = ApiService::load(empty.path);
  CHECK_FALSE(svc.ready());
  for (const auto& [method, path] : std::vector<std::pair<std::string, std::string>>{
           {"GET", "/schools"}, {"GET", "/schools/S0001"}, {"POST", "/whatif"}, {"GET", "/model"},
           {"GET", "/interactions"}}) {
    const auto r = svc.handle(method, path, {}, "{}");
    CHECK(r.status == 409);
    CHECK(r.body["error"] == "MissingArtifact");
  }
  CHECK(svc.handle("GET", "/nope").status == 404);
}

TEST_CASE("mixed-version artifact sets are refused") {
  ScratchDir copy("serve-mixed");
  fs::copy(run_dir(), copy.path, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  REQUIRE(ApiService::load(copy.path).ready());

  SUBCASE("panel edited after fitting") {
    std::ofstream(copy.path / pipeline::kPanel, std::ios::app) << "\n";
  }
  SUBCASE("scoring from another seed") {
    auto j = read_json(copy.path / pipeline::kScoring);
    j["meta"]["seed"] = 99;
    std::ofstream(copy.path / pipeline::kScoring) << j.dump(2);
  }
  SUBCASE("model refit on different inputs") {
    auto j = read_json(copy.path / pipeline::kModel2);
    j["fit"]["r2"] = 0.0;
    std::ofstream(copy.path / pipeline::kModel2) << j.dump(2);
  }
  const auto svc = ApiService::load(copy.path);
  CHECK_FALSE(svc.ready());
  const auto r = svc.handle("GET", "/model");
  CHECK(r.status == 409);
  CHECK(r.body["error"] == "ArtifactMismatch");
}

TEST_CASE("school detail carries features, scores and attributions") {
  const auto panel = NeighborhoodPanel::load(run_dir() / pipeline::kPanel);
  const auto m2 = read_json(run_dir() / pipeline::kModel2);
  const OlsFit fit = OlsFit::from_json(m2["fit"]);
  const auto& row = panel.rows[5];
  const auto r = api().handle("GET", "/schools/" + row.school_id);
  REQUIRE(r.status == 200);
  CHECK(r.body["jam"] == row.jam);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const std::string name(kFeatureNames[i]);
    CHECK(r.body["features"]["raw"][name].get<double>() == doctest::Approx(row.features.values[i]).epsilon(1e-12));
  }
  double sum = r.body["phi0"].get<double>();
  for (const auto& [name, v] : r.body["phi"].items()) sum += v.get<double>();
  CHECK(std::fabs(sum - r.body["predicted_jam"].get<double>()) < 1e-10);
  CHECK(r.body["phi"].size() == fit.feature_names().size());
  CHECK(r.body["env_score"].get<double>() + r.body["jam_score"].get<double>() == doctest::Approx(14.0));

  CHECK(api().handle("GET", "/schools/NOPE").status == 404);
  CHECK(api().handle("POST", "/schools/" + row.school_id).status == 405);
}

TEST_CASE("empty what-if reproduces the baseline") {
  const std::string id = first_school();
  const json base = api().handle("GET", "/schools/" + id).body;
  const json w = whatif(id, json::object());
  for (const auto& [key, v] : base.items()) CHECK(w[key] == v);
  CHECK(w["delta"]["env_score"] == 0.0);
  CHECK(w["delta"]["jam_score"] == 0.0);
}

TEST_CASE("training means give the score offset") {
  const json model = api().handle("GET", "/model").body;
  json z0 = json::object();
  for (const auto& f : model["features"]) {
    if (f["selected"]) z0[f["name"].get<std::string>()] = 0.0;
  }
  REQUIRE(!z0.empty());
  const std::string id = first_school();
  CHECK(std::fabs(whatif(id, z0, "z")["env_score"].get<double>() - 14.0) < 1e-12);
}

TEST_CASE("one Z unit moves the jam score by the normalized coefficient") {
  const json model = api().handle("GET", "/model").body;
  const std::string id = first_school();
  const json base = api().handle("GET", "/schools/" + id).body;
  std::vector<std::string> selected;
  for (const auto& f : model["features"]) {
    if (!f["selected"]) continue;
    const std::string name = f["name"];
    selected.push_back(name);
    const double z = base["features"]["z"][name].get<double>();
    const json w = whatif(id, {{name, z + 1.0}}, "z");
    CHECK(std::fabs(w["delta"]["jam_score"].get<double>() - f["beta_normalized"].get<double>()) < 1e-10);
    CHECK(std::fabs(w["delta"]["env_score"].get<double>() + f["beta_normalized"].get<double>()) < 1e-10);
  }
  // Pairwise additivity of single-feature deltas.
  for (std::size_t a = 0; a < selected.size(); ++a) {
    for (std::size_t b = a + 1; b < selected.size(); ++b) {
      const double za = base["features"]["z"][selected[a]].get<double>() + 0.7;
      const double zb = base["features"]["z"][selected[b]].get<double>() - 1.3;
      const double da = whatif(id, {{selected[a], za}}, "z")["delta"]["jam_score"];
      const double db = whatif(id, {{selected[b], zb}}, "z")["delta"]["jam_score"];
      const double dab = whatif(id, {{selected[a], za}, {selected[b], zb}}, "z")["delta"]["jam_score"];
      CHECK(std::fabs(dab - (da + db)) < 1e-12);
    }
  }
}

TEST_CASE("raw overrides are Z-scored with the training statistics") {
  const json model = api().handle("GET", "/model").body;
  const std::string id = first_school();
  const json base = api().handle("GET", "/schools/" + id).body;
  for (const auto& f : model["features"]) {
    if (!f["selected"] || f["kind"] != "continuous") continue;
    const std::string name = f["name"];
    const double raw = base["features"]["raw"][name].get<double>() + f["sd"].get<double>();
    const json w = whatif(id, {{name, raw}});
    CHECK(w["delta"]["jam_score"].get<double>() == doctest::Approx(f["beta_normalized"].get<double>()).epsilon(1e-9));
    CHECK(w["features"]["raw"][name].get<double>() == doctest::Approx(raw).epsilon(1e-12));
  }
}

TEST_CASE("invalid what-if requests are rejected") {
  const std::string id = first_school();
  auto post = [](const std::string& body) { return api().handle("POST", "/whatif", {}, body); };
  CHECK(post(json{{"school_id", id}, {"overrides", {{"bus_stop", 0.5}}}}.dump()).status == 422);
  CHECK(post(json{{"school_id", id}, {"overrides", {{"angle", 400.0}}}}.dump()).status == 422);
  CHECK(post(json{{"school_id", id}, {"overrides", {{"UFB", 1.5}}}}.dump()).status == 422);
  CHECK(post(json{{"school_id", id}, {"overrides", {{"nonsense", 1.0}}}}.dump()).status == 422);
  CHECK(post(json{{"school_id", id}, {"overrides", {{"bus_stop", "x"}}}}.dump()).status == 422);
  CHECK(post(json{{"school_id", id}, {"units", "miles"}}.dump()).status == 422);
  CHECK(post("{broken").status == 422);
  CHECK(post(json{{"overrides", json::object()}}.dump()).status == 422);
  CHECK(post(json{{"school_id", "NOPE"}}.dump()).status == 404);
  const auto r = post(json{{"school_id", id}, {"overrides", {{"bus_stop", 0.5}}}}.dump());
  CHECK(r.body["error"] == "OutOfRange");
  CHECK(api().handle("GET", "/whatif").status == 405);
}

TEST_CASE("model endpoint mirrors the fitted coefficients") {
  const json m2 = read_json(run_dir() / pipeline::kModel2);
  const OlsFit fit = OlsFit::from_json(m2["fit"]);
  const json sc = read_json(run_dir() / pipeline::kScoring);
  const json model = api().handle("GET", "/model").body;
  REQUIRE(model["features"].size() == kFeatureCount);
  const auto names = fit.feature_names();
  for (const auto& f : model["features"]) {
    const auto it = std::find(names.begin(), names.end(), f["name"].get<std::string>());
    if (it == names.end()) {
      CHECK(f["name"] == "BRH");
      CHECK(f["coefficient"].is_null());
      continue;
    }
    const auto c = static_cast<Eigen::Index>(it - names.begin()) + 1;
    CHECK(f["coefficient"] == fit.betas[c]);
    CHECK(f["p"] == fit.p_values[c]);
    CHECK(f["ci95"][0] == fit.ci_low[c]);
    CHECK(f["selected"] == (fit.p_values[c] < 0.1));
  }
  for (const auto& t : sc["scoring"]["terms"]) {
    for (const auto& f : model["features"]) {
      if (f["name"] == t["feature"]) CHECK(f["beta_normalized"] == t["beta_normalized"]);
    }
  }
  CHECK(model["score_alpha"] == 14.0);
}

TEST_CASE("interactions of the linear model vanish off the diagonal") {
  const json model = api().handle("GET", "/model").body;
  std::vector<std::string> picked;
  for (const auto& f : model["features"]) {
    if (f["in_model"] && picked.size() < 3) picked.push_back(f["name"]);
  }
  const std::string q = picked[0] + "," + picked[1] + "," + picked[2];
  for (const auto& query : std::vector<std::map<std::string, std::string>>{
           {{"features", q}}, {{"features", q}, {"school_id", first_school()}}}) {
    const auto r = api().handle("GET", "/interactions", query);
    REQUIRE(r.status == 200);
    const json& m = r.body["interactions"];
    CHECK(m["features"] == picked);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        if (i != j) CHECK(std::fabs(m["matrix"][i][j].get<double>()) < 1e-12);
      }
    }
  }
  // Per-school diagonal equals that school's attribution.
  const std::string id = first_school();
  const json detail = api().handle("GET", "/schools/" + id).body;
  const auto r = api().handle("GET", "/interactions", {{"features", q}, {"school_id", id}});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.body["interactions"]["matrix"][i][i].get<double>() ==
          doctest::Approx(detail["phi"][picked[i]].get<double>()).epsilon(1e-9));
  }
  CHECK(api().handle("GET", "/interactions", {{"features", "nope"}}).status == 422);
  CHECK(api().handle("GET", "/interactions", {{"features", picked[0]}}).status == 422);
  CHECK(api().handle("GET", "/interactions", {{"features", picked[0] + "," + picked[0]}}).status == 422);
  CHECK(api().handle("GET", "/interactions", {{"features", q}, {"school_id", "NOPE"}}).status == 404);
  CHECK(api().handle("GET", "/interactions").status == 200);
}

TEST_CASE("responses are pure functions of the request") {
  const std::string id = first_school();
  const std::string body = json{{"school_id", id}, {"overrides", {{"betweeness", 0.02}}}}.dump();
  CHECK(api().handle("POST", "/whatif", {}, body).body.dump() == api().handle("POST", "/whatif", {}, body).body.dump());
  CHECK(api().handle("GET", "/model").body.dump() == api().handle("GET", "/model").body.dump());
}

TEST_CASE("http front end serves the same bodies concurrently") {
  serve::HttpServer server(api(), "127.0.0.1", 0);
  const int port = server.bind();
  std::thread listener([&] { server.listen(); });
  const std::string id = first_school();
  const std::string body = json{{"school_id", id}, {"overrides", {{"betweeness", 0.01}}}}.dump();
  const std::string expect_whatif = api().handle("POST", "/whatif", {}, body).body.dump();
  const std::string expect_schools = api().handle("GET", "/schools").body.dump();

  std::vector<std::string> got(8);
  std::vector<std::thread> clients;
  for (std::size_t t = 0; t < got.size(); ++t) {
    clients.emplace_back([&, t] {
      httplib::Client cli("127.0.0.1", port);
      if (t % 2 == 0) {
        auto res = cli.Post("/whatif", body, "application/json");
        got[t] = res && res->status == 200 ? res->body : "";
      } else {
        auto res = cli.Get("/schools");
        got[t] = res && res->status == 200 ? res->body : "";
      }
    });
  }
  for (auto& c : clients) c.join();
  {
    httplib::Client cli("127.0.0.1", port);
    auto res = cli.Get("/schools/NOPE");
    REQUIRE(res);
    CHECK(res->status == 404);
    CHECK(res->get_header_value("Content-Type").find("application/json") == 0);
    const json features = api().handle("GET", "/model").body["features"];
    res = cli.Get("/interactions?features=" + features[2]["name"].get<std::string>() + "," +
                  features[3]["name"].get<std::string>());
    REQUIRE(res);
    CAPTURE(res->body);
    CHECK(res->status == 200);
  }
  server.stop();
  listener.join();
  for (std::size_t t = 0; t < got.size(); ++t) CHECK(got[t] == (t % 2 == 0 ? expect_whatif : expect_schools));
}

TEST_CASE("bind addresses") {
  CHECK(serve::parse_bind("0.0.0.0:9000") == std::pair<std::string, int>{"0.0.0.0", 9000});
  CHECK(serve::parse_bind(":8081") == std::pair<std::string, int>{"127.0.0.1", 8081});
  CHECK_THROWS_AS(serve::parse_bind("localhost"), Error);
  CHECK_THROWS_AS(serve::parse_bind("h:99999"), Error);
}
