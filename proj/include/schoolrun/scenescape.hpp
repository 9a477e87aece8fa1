#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "schoolrun/domain.hpp"
#include "schoolrun/network.hpp"

namespace schoolrun {

inline constexpr std::size_t kSceneLabelCount = 365;
inline constexpr std::size_t kMaskedLabelCount = 159;
inline constexpr std::array<std::size_t, 3> kScenescapesPerCategory = {4, 3, 3};

// Indices of the outdoor man-made labels kept for clustering.
class LabelMask {
 public:
  // Sorted, unique, in [0, 365), exactly 159 entries; else InvalidArgument.
  explicit LabelMask(std::vector<std::size_t> indices);

  // Evenly spaced placeholder: index k -> floor(k * 365 / 159).
  static LabelMask evenly_spaced();
  // Whitespace-separated integers.
  static LabelMask load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const std::vector<std::size_t>& indices() const noexcept { return indices_; }

 private:
  std::vector<std::size_t> indices_;
};

// Only the masked subset is retained after the full probability vector has
// been validated.
struct SceneVector {
  std::string road_id;
  std::size_t road = 0;  // index into the network
  RoadCategory category = RoadCategory::kOrdinary;
  Point point;
  std::vector<double> masked;
};

// Validates probs (365 entries, non-negative, sum within 1e-3 of 1).
SceneVector make_scene_vector(const RoadNetwork& network, std::size_t road, Point point,
                              std::span<const double> probs, const LabelMask& mask);

// CSV header road_id,x,y,p0..p364.
std::vector<SceneVector> load_scene_vectors(const std::filesystem::path& path,
                                            const RoadNetwork& network, const LabelMask& mask);

class SceneVectorWriter {
 public:
  explicit SceneVectorWriter(const std::filesystem::path& path);
  void write(std::string_view road_id, Point point, std::span<const double> probs);

 private:
  std::ofstream out_;
};

struct SamplePoint {
  Point point;
  std::size_t road = 0;
  double arc_length = 0.0;
};

// Points at arc-length multiples of interval_m from each segment start,
// including the start itself.
std::vector<SamplePoint> sample_points(const RoadNetwork& network, double interval_m = 50.0);

struct KMeansOptions {
  std::size_t k = 1;
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-10;  // max centroid shift
  // Called after every assignment step with the centroids used and the
  // resulting assignments.
  std::function<void(const Eigen::MatrixXd&, const std::vector<int>&)> observer;
};

struct KMeansResult {
  Eigen::MatrixXd centroids;  // k x d
  std::vector<int> assignments;
  double inertia = 0.0;
  std::vector<double> inertia_history;
  int iterations = 0;
  bool converged = false;
};

std::size_t count_distinct_rows(const Eigen::MatrixXd& data);

// Lloyd iterations from k-means++ seeding. Rows are observations. Throws
// KTooLarge when k exceeds the number of distinct rows.
KMeansResult kmeans(const Eigen::MatrixXd& data, const KMeansOptions& options);

struct CategoryScenescapes {
  RoadCategory category = RoadCategory::kOrdinary;
  Eigen::MatrixXd centroids;  // rows ordered by id
  std::vector<int> ids;       // global scenescape ids
  std::vector<std::size_t> member_counts;
  double inertia = 0.0;
};

struct ScenescapeModel {
  std::array<CategoryScenescapes, 3> categories;
  std::uint64_t seed = 0;

  const CategoryScenescapes& of(RoadCategory c) const {
    return categories[static_cast<std::size_t>(c)];
  }
  // Global id (1..10) of the nearest centroid within the vector's category.
  int assign(const SceneVector& v) const;

  nlohmann::json to_json() const;
  static ScenescapeModel from_json(const nlohmann::json& j);
};

// Pools vectors citywide per road category. Ids within a category follow
// descending member count. Throws InsufficientVectors.
ScenescapeModel fit_scenescapes(std::span<const SceneVector> vectors, std::uint64_t seed,
                                int n_init = 10);

// Shares of scenescapes 1..10 among vectors on member roads that lie within
// the buffer radius of the school. Throws NoSampledPoints.
std::array<double, kScenescapeCount> neighborhood_shares(const ScenescapeModel& model,
                                                         std::span<const SceneVector> vectors,
                                                         const School& school,
                                                         const Neighborhood& nbhd);

// Batch form: assigns every vector once. Result is parallel to `nbhds`.
std::vector<std::array<double, kScenescapeCount>> all_neighborhood_shares(
    const ScenescapeModel& model, std::span<const SceneVector> vectors,
    std::span<const School> schools, std::span<const Neighborhood> nbhds);

}  // namespace schoolrun
