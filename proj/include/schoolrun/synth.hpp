#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "schoolrun/calendar.hpp"
#include "schoolrun/domain.hpp"
#include "schoolrun/gologit.hpp"
#include "schoolrun/ingest.hpp"
#include "schoolrun/network.hpp"
#include "schoolrun/scenescape.hpp"

namespace schoolrun::synth {

// Regular lattice of nx x ny nodes at `spacing_m`. Each full grid line gets one
// category; segments are then dropped independently with `drop_probability`.
struct GridSpec {
  std::size_t nx = 4;
  std::size_t ny = 4;
  double spacing_m = 400.0;
  std::array<double, 3> category_shares{0.6, 0.25, 0.15};
  double drop_probability = 0.0;
  std::uint64_t seed = 0;
};

// Throws SpecInfeasible for grids smaller than 2 x 2 or invalid shares.
RoadNetwork grid_network(const GridSpec& grid);

// Model 2 ground truth on Z-scored features.
struct PlantedLinear {
  double intercept = 0.49;
  std::map<std::string, double> coefficients;
  double target_r2 = 0.45;
  // When unset, sigma is derived from target_r2 and the realized var(X beta).
  std::optional<double> noise_sigma;
};

struct SynthSpec {
  std::uint64_t seed = 7;
  std::size_t n_schools = 846;
  std::size_t cell_cols = 30;
  std::size_t cell_rows = 29;
  std::size_t blocks_per_cell = 3;
  double block_m = 400.0;
  double drop_probability = 0.10;
  double school_jitter_m = 50.0;
  std::array<double, 3> category_shares{0.6, 0.25, 0.15};
  double buffer_m = 500.0;

  // work, school, exam
  GologitFit gologit;
  PlantedLinear linear;

  double scene_jitter = 0.01;
  double svi_interval_m = 50.0;
  std::size_t model1_observations = 50000;
  bool full_scale = false;

  // Throws InvalidParams (thresholds not strictly decreasing, bad variances,
  // unknown feature names) or SpecInfeasible (geometry).
  void validate() const;

  static SynthSpec defaults();
  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static SynthSpec from_json(const nlohmann::json& j);
};

struct ScenePoint {
  std::size_t road = 0;
  Point point;
  int scenescape = 0;  // planted global id, 1..10
};

struct SyntheticCity {
  CityFrame frame;
  RoadNetwork network;
  std::vector<School> schools;
  std::vector<Neighborhood> neighborhoods;
  std::vector<double> betweenness;
  FeatureLayers layers;
  LabelMask mask = LabelMask::evenly_spaced();
  // Ten 365-label probability vectors, index = global id - 1.
  std::vector<std::vector<double>> centroids;
  ScenescapeModel planted_scenescapes;
  std::vector<ScenePoint> scene_points;
  std::vector<FeatureVector> features;  // raw, parallel to schools
};

// Throws SpecInfeasible when neighborhoods overlap or come out empty.
SyntheticCity gen_city(const SynthSpec& spec, Warnings* warnings = nullptr);

// Full probability vector of scene point `i`, regenerated from its own stream.
std::vector<double> scene_probabilities(const SynthSpec& spec, const SyntheticCity& city,
                                        std::size_t i);

// Scene vectors drawn around the planted centroids of `city` for an explicit
// label sequence; used by recovery tests that do not need a street grid.
std::vector<SceneVector> planted_scene_vectors(const SynthSpec& spec, const SyntheticCity& city,
                                               std::span<const ScenePoint> points);

struct JamDraw {
  Eigen::VectorXd signal;  // intercept + X beta
  Eigen::VectorXd jam;     // clipped to [0, 1]
  double sigma = 0.0;
  double signal_variance = 0.0;
  double analytic_r2 = 0.0;
  std::size_t clipped = 0;
};

// jam = clip(intercept + z beta + eps, 0, 1). Columns of z follow `names`.
JamDraw gen_jam(const PlantedLinear& planted, const Eigen::MatrixXd& z,
                std::span<const std::string> names, std::uint64_t seed,
                Warnings* warnings = nullptr);

struct ObservationSite {
  std::uint32_t road = 0;
  TimeSlot slot;
};

// One level per site from the planted category distribution at the slot's
// work/school/exam dummies. Throws InvalidParams on a negative probability.
std::vector<CongestionObservation> gen_observations(const GologitFit& planted,
                                                    std::span<const ObservationSite> sites,
                                                    std::uint64_t seed);

struct SyntheticData {
  SynthSpec spec;
  CalendarConfig calendar;
  SyntheticCity city;
  JamDraw jam;          // target frequency per school
  Eigen::VectorXd realized_jam;  // after allocation to school-run slots
  std::vector<CongestionObservation> observations;
};

// City, jam and the observation stream. School-run slots on neighborhood
// roads carry levels allocated so that each school's congestion frequency
// equals its jam target up to 1 / (8 x roads).
SyntheticData generate(const SynthSpec& spec, Warnings* warnings = nullptr);

// Writes roads.geojson, schools.csv, calendar.json, observations.csv, the
// feature layer CSVs, scenes.csv, label_mask.txt, city.json and truth.json.
void write_inputs(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace schoolrun::synth
