#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "schoolrun/gologit.hpp"
#include "schoolrun/hash.hpp"
#include "schoolrun/ols.hpp"
#include "schoolrun/rng.hpp"
#include "schoolrun/synth.hpp"

using namespace schoolrun;
namespace fs = std::filesystem;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kInvalidArgument;
}

synth::SynthSpec small_spec(std::uint64_t seed = 3) {
  auto s = synth::SynthSpec::defaults();
  s.seed = seed;
  s.cell_cols = 6;
  s.cell_rows = 5;
  s.n_schools = 24;
  s.model1_observations = 3000;
  return s;
}

std::vector<TimeSlot> week_slots() {
  const auto cal = CalendarConfig::study_week_2023();
  std::vector<TimeSlot> out;
  for (const auto& ts : cal.observed_timestamps()) out.push_back(label_timeslot(ts, cal));
  return out;
}

std::map<std::string, std::string> hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = sha256_file(e.path());
  return out;
}

}  // namespace

TEST_CASE("grid network combinatorics") {
  const auto net = synth::grid_network({});
  CHECK(net.segments().size() == 24);
  CHECK(net.nodes().size() == 16);
  CHECK(net.component_count() == 1);
  synth::GridSpec wide{.nx = 7, .ny = 3};
  const auto w = synth::grid_network(wide);
  CHECK(w.segments().size() == 6 * 3 + 7 * 2);
  CHECK(w.nodes().size() == 21);
  // One category per full grid line.
  std::map<std::string, RoadCategory> line;
  for (const auto& s : w.segments()) {
    const std::string key = s.id().substr(0, s.id().find('-'));
    auto [it, fresh] = line.emplace(key, s.category());
    CHECK(it->second == s.category());
  }
  CHECK(code_of([] { synth::grid_network({.nx = 1, .ny = 4}); }) == ErrorCode::kSpecInfeasible);
  CHECK(code_of([] { synth::grid_network({.category_shares = {0.5, 0.5, 0.5}}); }) ==
        ErrorCode::kSpecInfeasible);
  synth::GridSpec holey{.nx = 20, .ny = 20, .drop_probability = 0.2, .seed = 5};
  const auto h = synth::grid_network(holey);
  CHECK(h.segments().size() < 2 * 19 * 20);
  CHECK(roads_to_geojson(h) == roads_to_geojson(synth::grid_network(holey)));
}

TEST_CASE("spec validation and JSON") {
  auto s = synth::SynthSpec::defaults();
  CHECK_NOTHROW(s.validate());
  CHECK(s.linear.coefficients.size() == 12);
  CHECK(s.linear.coefficients.count("BRH") == 0);
  const auto back = synth::SynthSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  auto part = synth::SynthSpec::from_json(nlohmann::json{{"seed", 11}, {"n_schools", 5}});
  CHECK(part.seed == 11);
  CHECK(part.n_schools == 5);
  CHECK(part.cell_cols == s.cell_cols);

  auto bad = s;
  bad.gologit.alphas << 1.0, 1.0, -2.0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kInvalidParams);
  bad = s;
  bad.scene_jitter = 0.0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kInvalidParams);
  bad = s;
  bad.linear.coefficients["colour"] = 1.0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kInvalidParams);
  bad = s;
  bad.n_schools = 10000;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kSpecInfeasible);
  bad = small_spec();
  bad.buffer_m = 800.0;
  CHECK(code_of([&] { synth::gen_city(bad); }) == ErrorCode::kSpecInfeasible);
}

TEST_CASE("observation sampling matches the closed-form distribution") {
  Eigen::VectorXd a(3);
  a << 2.0, 0.0, -2.0;
  const auto fit = GologitFit::from_params(a, Eigen::MatrixXd::Zero(3, 3), {"work", "school", "exam"});
  const auto slots = week_slots();
  std::vector<synth::ObservationSite> sites;
  for (std::uint32_t i = 0; i < 100000; ++i) sites.push_back({i % 500, slots[i % slots.size()]});
  const auto obs = synth::gen_observations(fit, sites, 99);
  REQUIRE(obs.size() == sites.size());
  std::array<double, 4> share{};
  for (const auto& o : obs) share[o.level.value() - 1] += 1.0 / obs.size();
  const double g2 = 1.0 / (1.0 + std::exp(-2.0));
  const std::array<double, 4> want{1 - g2, g2 - 0.5, 0.5 - (1 - g2), 1 - g2};
  for (int j = 0; j < 4; ++j) CHECK(std::fabs(share[j] - want[j]) < 0.01);
  CHECK(std::fabs(want[0] - 0.119) < 1e-3);
  CHECK(std::fabs(want[1] - 0.381) < 1e-3);

  const auto again = synth::gen_observations(fit, sites, 99);
  for (std::size_t i = 0; i < obs.size(); ++i) CHECK(obs[i].level == again[i].level);

  Eigen::MatrixXd crossing = Eigen::MatrixXd::Zero(3, 3);
  crossing(1, 1) = 3.0;  // split 2 overtakes split 1 on school slots
  Eigen::VectorXd a2(3);
  a2 << 1.0, 0.0, -1.0;
  const auto bad = GologitFit::from_params(a2, crossing, {"work", "school", "exam"});
  CHECK(code_of([&] { synth::gen_observations(bad, sites, 1); }) == ErrorCode::kInvalidParams);
}

TEST_CASE("planted school effect is recovered by the fitted marginal effects") {
  const auto planted = synth::SynthSpec::defaults().gologit;
  const auto slots = week_slots();
  std::vector<synth::ObservationSite> sites;
  for (std::uint32_t r = 0; r < 10000; ++r)
    for (const auto& s : slots) sites.push_back({r, s});
  const auto obs = synth::gen_observations(planted, sites, 2024);
  const ObservationSet set(obs, 10000);
  const auto data = did_design_a(set);
  const auto fit = fit_gologit(GologitSpec{}, data);
  REQUIRE(fit.converged);
  const auto want = marginal_effects(planted, data, MarginalMode::kAME);
  const auto got = marginal_effects(fit, data, MarginalMode::kAME);
  CHECK((want.effects - got.effects).cwiseAbs().maxCoeff() < 0.005);
}

TEST_CASE("jam generation") {
  Rng rng(5);
  const std::vector<std::string> names{"a", "b", "c", "d"};
  Eigen::MatrixXd z(846, 4);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < 4; ++j) z(i, j) = rng.normal();
  synth::PlantedLinear pl;
  pl.intercept = 0.5;
  pl.coefficients = {{"a", 0.05}, {"b", -0.03}, {"d", 0.04}};
  pl.noise_sigma = 0.0;
  const auto exact = synth::gen_jam(pl, z, names, 1);
  CHECK(exact.clipped == 0);
  const auto ols = fit_ols(z, exact.jam, names);
  CHECK(std::fabs(ols.betas[0] - 0.5) < 1e-8);
  CHECK(std::fabs(ols.betas[1] - 0.05) < 1e-8);
  CHECK(std::fabs(ols.betas[2] + 0.03) < 1e-8);
  CHECK(std::fabs(ols.betas[3]) < 1e-8);
  CHECK(std::fabs(ols.betas[4] - 0.04) < 1e-8);

  pl.noise_sigma.reset();
  Warnings w;
  const auto noisy = synth::gen_jam(pl, z, names, 2, &w);
  CHECK(noisy.analytic_r2 == doctest::Approx(0.45));
  CHECK(w.empty());
  CHECK(std::fabs(fit_ols(z, noisy.jam, names).adj_r2 - 0.45) < 0.05);

  pl.intercept = 0.02;
  const auto clipped = synth::gen_jam(pl, z, names, 3, &w);
  CHECK(clipped.clipped > 8);
  REQUIRE(w.size() == 1);
  CHECK(w[0].code == WarningCode::kClippingActive);
  for (Eigen::Index i = 0; i < clipped.jam.size(); ++i) {
    CHECK(clipped.jam[i] >= 0.0);
    CHECK(clipped.jam[i] <= 1.0);
  }
  pl.coefficients["zz"] = 1.0;
  CHECK(code_of([&] { synth::gen_jam(pl, z, names, 3); }) == ErrorCode::kInvalidParams);
}

TEST_CASE("synthetic city structure") {
  const auto spec = small_spec();
  Warnings w;
  const auto data = synth::generate(spec, &w);
  const auto& city = data.city;
  CHECK(city.schools.size() == 24);
  CHECK(city.network.nodes().size() <= 19 * 16);
  std::set<std::size_t> seen;
  for (const auto& nb : city.neighborhoods) {
    CHECK_FALSE(nb.roads.empty());
    for (auto r : nb.roads) CHECK(seen.insert(r).second);
  }
  for (const auto& f : city.features) {
    CHECK_NOTHROW(validate_feature_vector(f));
    double shares = 0;
    for (std::size_t g = 0; g < kScenescapeCount; ++g) shares += f[kFirstShareIndex + g];
    CHECK(shares == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < 50; ++i) {
    const auto p = synth::scene_probabilities(spec, city, i);
    REQUIRE(p.size() == kSceneLabelCount);
    double sum = 0;
    for (double x : p) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-3);
    CHECK(city.network.segments()[city.scene_points[i].road].category() ==
          static_cast<RoadCategory>(city.scene_points[i].scenescape <= 4 ? 0 : city.scene_points[i].scenescape <= 7 ? 1 : 2));
  }

  // Realized frequencies follow the allocation through the ingest path.
  ObservationSet set(data.observations, city.network.segments().size());
  for (std::size_t s = 0; s < city.schools.size(); ++s) {
    const double f = congestion_frequency(set, city.neighborhoods[s], school_run_slot);
    CHECK(f == doctest::Approx(data.realized_jam[static_cast<Eigen::Index>(s)]).epsilon(1e-12));
    CHECK(std::fabs(f - data.jam.jam[static_cast<Eigen::Index>(s)]) <=
          0.5 / (8.0 * city.neighborhoods[s].roads.size()) + 1e-12);
  }
  std::size_t school_obs = 0;
  for (const auto& o : data.observations) school_obs += o.slot.school();
  std::size_t roads = 0;
  for (const auto& nb : city.neighborhoods) roads += nb.roads.size();
  CHECK(school_obs >= roads * 8);
  CHECK(data.observations.size() == roads * 8 + 3000);
}

TEST_CASE("planted scenescapes are recovered by k-means") {
  auto spec = small_spec();
  spec.scene_jitter = 0.01;
  const auto city = synth::gen_city(spec);
  std::vector<synth::ScenePoint> labels;
  for (int id = 1; id <= 10; ++id) {
    const int first = id <= 4 ? 1 : (id <= 7 ? 5 : 8);
    const int copies = 400 - 20 * (id - first);  // descending within each category
    for (int c = 0; c < copies; ++c) labels.push_back({0, {0, 0}, id});
  }
  const auto vectors = synth::planted_scene_vectors(spec, city, labels);
  const auto model = fit_scenescapes(vectors, 17);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& fitted = model.categories[c];
    const auto& truth = city.planted_scenescapes.categories[c];
    for (Eigen::Index j = 0; j < fitted.centroids.rows(); ++j) {
      CHECK(fitted.ids[j] == truth.ids[j]);
      CHECK((fitted.centroids.row(j) - truth.centroids.row(j)).norm() < 0.05);
    }
  }
}

TEST_CASE("written inputs are byte-identical for a fixed seed") {
  const auto spec = small_spec(21);
  const fs::path a = fs::temp_directory_path() / "schoolrun_synth_a";
  const fs::path b = fs::temp_directory_path() / "schoolrun_synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  synth::write_inputs(synth::generate(spec), a);
  synth::write_inputs(synth::generate(spec), b);
  const auto ha = hashes(a);
  CHECK(ha.size() == 13);
  CHECK(ha == hashes(b));
  const fs::path c = fs::temp_directory_path() / "schoolrun_synth_c";
  fs::remove_all(c);
  synth::write_inputs(synth::generate(small_spec(22)), c);
  CHECK(hashes(c).at("observations.csv") != ha.at("observations.csv"));

  // The written files load through the ingest readers.
  const auto net = load_roads(a / "roads.geojson");
  const auto cal = CalendarConfig::load(a / "calendar.json");
  const auto obs = load_observations(a / "observations.csv", net, cal);
  CHECK(obs.size() == synth::generate(spec).observations.size());
  const auto scenes = load_scene_vectors(a / "scenes.csv", net, LabelMask::load(a / "label_mask.txt"));
  CHECK(scenes.size() == synth::gen_city(spec).scene_points.size());
  const auto layers = FeatureLayers::load(a);
  CHECK(layers.poi.size() == 24);
}
