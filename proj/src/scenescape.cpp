#include "schoolrun/scenescape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "schoolrun/csv.hpp"
#include "schoolrun/error.hpp"
#include "schoolrun/rng.hpp"

namespace schoolrun {

using nlohmann::json;

LabelMask::LabelMask(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
  if (indices_.size() != kMaskedLabelCount) {
    throw Error(ErrorCode::kInvalidArgument, "label mask needs " +
                                                 std::to_string(kMaskedLabelCount) + " indices, got " +
                                                 std::to_string(indices_.size()));
  }
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] >= kSceneLabelCount || (i > 0 && indices_[i] <= indices_[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "label mask indices must be strictly increasing and below 365");
    }
  }
}

LabelMask LabelMask::evenly_spaced() {
  std::vector<std::size_t> idx(kMaskedLabelCount);
  for (std::size_t k = 0; k < kMaskedLabelCount; ++k) idx[k] = k * kSceneLabelCount / kMaskedLabelCount;
  return LabelMask(std::move(idx));
}

LabelMask LabelMask::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open label mask '" + path.string() + "'");
  std::vector<std::size_t> idx;
  std::string tok;
  while (in >> tok) {
    idx.push_back(static_cast<std::size_t>(csv::to_int(tok, path.string())));
  }
  return LabelMask(std::move(idx));
}

void LabelMask::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  for (auto i : indices_) out << i << '\n';
}

SceneVector make_scene_vector(const RoadNetwork& network, std::size_t road, Point point,
                              std::span<const double> probs, const LabelMask& mask) {
  if (probs.size() != kSceneLabelCount) {
    throw Error(ErrorCode::kParseError, "scene vector needs 365 probabilities");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorCode::kOutOfRange, "scene probability must be finite and non-negative");
    }
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-3) {
    throw Error(ErrorCode::kOutOfRange, "scene probabilities sum to " + std::to_string(sum));
  }
  SceneVector v;
  v.road = road;
  v.road_id = network.segments()[road].id();
  v.category = network.segments()[road].category();
  v.point = point;
  v.masked.reserve(kMaskedLabelCount);
  for (auto i : mask.indices()) v.masked.push_back(probs[i]);
  return v;
}

std::vector<SceneVector> load_scene_vectors(const std::filesystem::path& path,
                                            const RoadNetwork& network, const LabelMask& mask) {
  std::vector<SceneVector> out;
  std::vector<double> probs(kSceneLabelCount);
  csv::for_each_row(
      path,
      [&](const std::vector<std::string>& header) {
        if (header.size() != 3 + kSceneLabelCount || header[0] != "road_id" || header[1] != "x" ||
            header[2] != "y" || header[3] != "p0") {
          throw Error(ErrorCode::kParseError, path.string() + ": expected header road_id,x,y,p0..p364");
        }
      },
      [&](std::size_t line, const std::vector<std::string_view>& f) {
        const std::string ctx = path.string() + ":" + std::to_string(line);
        if (f.size() != 3 + kSceneLabelCount) {
          throw Error(ErrorCode::kParseError, ctx + ": wrong field count");
        }
        const std::size_t road = network.require(f[0]);
        const Point p{csv::to_double(f[1], ctx), csv::to_double(f[2], ctx)};
        for (std::size_t i = 0; i < kSceneLabelCount; ++i) probs[i] = csv::to_double(f[3 + i], ctx);
        out.push_back(make_scene_vector(network, road, p, probs, mask));
      });
  return out;
}

SceneVectorWriter::SceneVectorWriter(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw Error(ErrorCode::kMissingArtifact, "cannot write '" + path.string() + "'");
  out_ << "road_id,x,y";
  for (std::size_t i = 0; i < kSceneLabelCount; ++i) out_ << ",p" << i;
  out_ << '\n';
}

void SceneVectorWriter::write(std::string_view road_id, Point point, std::span<const double> probs) {
  out_ << road_id << ',' << csv::format_double(point.x) << ',' << csv::format_double(point.y);
  for (double p : probs) {
    out_ << ',';
    if (p == 0.0) out_ << '0'; else out_ << csv::format_double(p);
  }
  out_ << '\n';
}

std::vector<SamplePoint> sample_points(const RoadNetwork& network, double interval_m) {
  if (!(interval_m > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sampling interval must be > 0");
  std::vector<SamplePoint> out;
  const auto& segs = network.segments();
  for (std::size_t r = 0; r < segs.size(); ++r) {
    const double len = segs[r].length();
    for (std::size_t k = 0;; ++k) {
      const double s = static_cast<double>(k) * interval_m;
      if (s > len * (1.0 + 1e-12)) break;
      out.push_back({point_at_arc_length(segs[r].polyline(), s), r, s});
    }
  }
  return out;
}

// ---- k-means ---------------------------------------------------------------

std::size_t count_distinct_rows(const Eigen::MatrixXd& data) {
  const auto n = static_cast<std::size_t>(data.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (data(a, j) != data(b, j)) return data(a, j) < data(b, j);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = n > 0 ? 1 : 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

namespace {

double squared_distance(const Eigen::MatrixXd& data, Eigen::Index row, const Eigen::MatrixXd& c,
                        Eigen::Index crow) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    const double d = data(row, j) - c(crow, j);
    s += d * d;
  }
  return s;
}

// Returns inertia; fills assignments and per-row squared distances.
double assign_rows(const Eigen::MatrixXd& data, const Eigen::MatrixXd& centroids,
                   std::vector<int>& assignments, std::vector<double>& dist2) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    int best = 0;
    double best_d = squared_distance(data, i, centroids, 0);
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
      const double d = squared_distance(data, i, centroids, c);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assignments[i] = best;
    dist2[i] = best_d;
    inertia += best_d;
  }
  return inertia;
}

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& data, std::size_t k, Rng& rng) {
  const Eigen::Index n = data.rows();
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), data.cols());
  centroids.row(0) = data.row(static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n))));
  std::vector<double> d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = squared_distance(data, i, centroids, 0);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = n - 1;
    const double target = rng.uniform() * total;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    // Rounding can leave the pick on an already-chosen point; fall back to the
    // farthest one.
    if (d2[pick] == 0.0) pick = std::max_element(d2.begin(), d2.end()) - d2.begin();
    centroids.row(static_cast<Eigen::Index>(c)) = data.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(data, i, centroids, static_cast<Eigen::Index>(c)));
    }
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& data, const KMeansOptions& options) {
  const std::size_t k = options.k;
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "kmeans needs k >= 1");
  const std::size_t distinct = count_distinct_rows(data);
  if (k > distinct) {
    throw Error(ErrorCode::kKTooLarge, "k = " + std::to_string(k) + " exceeds " +
                                           std::to_string(distinct) + " distinct vectors");
  }
  Rng rng(options.seed);
  KMeansResult res;
  res.centroids = kmeanspp_seed(data, k, rng);
  const Eigen::Index n = data.rows();
  res.assignments.assign(n, 0);
  std::vector<double> dist2(n);

  res.inertia = assign_rows(data, res.centroids, res.assignments, dist2);
  res.inertia_history.push_back(res.inertia);
  if (options.observer) options.observer(res.centroids, res.assignments);

  const auto kk = static_cast<Eigen::Index>(k);
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    res.iterations = iter;
    // Update step with a fixed summation order.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(kk, data.cols());
    std::vector<std::size_t> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.assignments[i]) += data.row(i);
      ++counts[res.assignments[i]];
    }
    Eigen::MatrixXd next(kk, data.cols());
    std::vector<char> taken(n, 0);
    for (Eigen::Index c = 0; c < kk; ++c) {
      if (counts[c] > 0) {
        next.row(c) = sums.row(c) / static_cast<double>(counts[c]);
      } else {
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (!taken[i] && dist2[i] > far_d) {
            far_d = dist2[i];
            far = i;
          }
        }
        taken[far] = 1;
        next.row(c) = data.row(far);
      }
    }
    double shift = 0.0;
    for (Eigen::Index c = 0; c < kk; ++c) {
      shift = std::max(shift, (next.row(c) - res.centroids.row(c)).norm());
    }
    res.centroids = std::move(next);

    const std::vector<int> previous = res.assignments;
    res.inertia = assign_rows(data, res.centroids, res.assignments, dist2);
    res.inertia_history.push_back(res.inertia);
    if (options.observer) options.observer(res.centroids, res.assignments);
    if (res.assignments == previous || shift < options.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// ---- scenescapes -----------------------------------------------------------

namespace {

std::size_t category_offset(RoadCategory c) {
  std::size_t off = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(c); ++i) off += kScenescapesPerCategory[i];
  return off;
}

}  // namespace

ScenescapeModel fit_scenescapes(std::span<const SceneVector> vectors, std::uint64_t seed,
                                int n_init) {
  if (n_init < 1) throw Error(ErrorCode::kInvalidArgument, "n_init must be >= 1");
  ScenescapeModel model;
  model.seed = seed;
  for (RoadCategory cat : kRoadCategories) {
    const auto ci = static_cast<std::size_t>(cat);
    const std::size_t k = kScenescapesPerCategory[ci];
    std::size_t count = 0;
    for (const auto& v : vectors) count += v.category == cat;
    Eigen::MatrixXd data(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(kMaskedLabelCount));
    Eigen::Index row = 0;
    for (const auto& v : vectors) {
      if (v.category != cat) continue;
      if (v.masked.size() != kMaskedLabelCount) {
        throw Error(ErrorCode::kInvalidArgument, "scene vector has wrong masked length");
      }
      for (std::size_t j = 0; j < kMaskedLabelCount; ++j) data(row, j) = v.masked[j];
      ++row;
    }
    const std::size_t distinct = count_distinct_rows(data);
    if (distinct < k) {
      throw Error(ErrorCode::kInsufficientVectors,
                  std::string(to_string(cat)) + " roads have " + std::to_string(distinct) +
                      " distinct scene vectors, need " + std::to_string(k));
    }
    KMeansResult best;
    bool have = false;
    for (int init = 0; init < n_init; ++init) {
      KMeansOptions opt;
      opt.k = k;
      opt.seed = Rng::derive(seed, ci * 1000 + static_cast<std::uint64_t>(init)).next_u64();
      KMeansResult r = kmeans(data, opt);
      if (!have || r.inertia < best.inertia) {
        best = std::move(r);
        have = true;
      }
    }
    std::vector<std::size_t> counts(k, 0);
    for (int a : best.assignments) ++counts[a];
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
    CategoryScenescapes& cs = model.categories[ci];
    cs.category = cat;
    cs.centroids.resize(static_cast<Eigen::Index>(k), data.cols());
    cs.inertia = best.inertia;
    for (std::size_t r = 0; r < k; ++r) {
      cs.centroids.row(static_cast<Eigen::Index>(r)) = best.centroids.row(static_cast<Eigen::Index>(order[r]));
      cs.ids.push_back(static_cast<int>(category_offset(cat) + r + 1));
      cs.member_counts.push_back(counts[order[r]]);
    }
  }
  return model;
}

int ScenescapeModel::assign(const SceneVector& v) const {
  const CategoryScenescapes& cs = of(v.category);
  if (v.masked.size() != static_cast<std::size_t>(cs.centroids.cols())) {
    throw Error(ErrorCode::kInvalidArgument, "scene vector dimension does not match the model");
  }
  Eigen::Map<const Eigen::RowVectorXd> x(v.masked.data(), static_cast<Eigen::Index>(v.masked.size()));
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < cs.centroids.rows(); ++c) {
    const double d = (x - cs.centroids.row(c)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return cs.ids[static_cast<std::size_t>(best)];
}

json ScenescapeModel::to_json() const {
  json j;
  j["seed"] = seed;
  j["categories"] = json::object();
  for (const auto& cs : categories) {
    json c;
    c["k"] = cs.ids.size();
    c["ids"] = cs.ids;
    c["member_counts"] = cs.member_counts;
    c["inertia"] = cs.inertia;
    json rows = json::array();
    for (Eigen::Index r = 0; r < cs.centroids.rows(); ++r) {
      std::vector<double> row(cs.centroids.cols());
      for (Eigen::Index q = 0; q < cs.centroids.cols(); ++q) row[q] = cs.centroids(r, q);
      rows.push_back(row);
    }
    c["centroids"] = rows;
    j["categories"][std::string(to_string(cs.category))] = c;
  }
  return j;
}

ScenescapeModel ScenescapeModel::from_json(const json& j) {
  ScenescapeModel m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    for (RoadCategory cat : kRoadCategories) {
      const json& c = j.at("categories").at(std::string(to_string(cat)));
      CategoryScenescapes& cs = m.categories[static_cast<std::size_t>(cat)];
      cs.category = cat;
      cs.ids = c.at("ids").get<std::vector<int>>();
      cs.member_counts = c.at("member_counts").get<std::vector<std::size_t>>();
      cs.inertia = c.at("inertia").get<double>();
      const auto rows = c.at("centroids").get<std::vector<std::vector<double>>>();
      if (rows.size() != kScenescapesPerCategory[static_cast<std::size_t>(cat)] ||
          rows.size() != cs.ids.size()) {
        throw Error(ErrorCode::kArtifactMismatch, "scenescape model has wrong centroid count");
      }
      cs.centroids.resize(static_cast<Eigen::Index>(rows.size()),
                          static_cast<Eigen::Index>(rows.front().size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t q = 0; q < rows[r].size(); ++q) cs.centroids(r, q) = rows[r][q];
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("scenescape model: ") + e.what());
  }
  return m;
}

namespace {

std::vector<std::vector<std::size_t>> index_by_road(std::span<const SceneVector> vectors) {
  std::size_t max_road = 0;
  for (const auto& v : vectors) max_road = std::max(max_road, v.road);
  std::vector<std::vector<std::size_t>> by_road(vectors.empty() ? 0 : max_road + 1);
  for (std::size_t i = 0; i < vectors.size(); ++i) by_road[vectors[i].road].push_back(i);
  return by_road;
}

std::array<double, kScenescapeCount> tally_shares(std::span<const SceneVector> vectors,
                                                  std::span<const int> ids,
                                                  const std::vector<std::vector<std::size_t>>& by_road,
                                                  const School& school, const Neighborhood& nbhd) {
  std::array<std::size_t, kScenescapeCount> counts{};
  std::size_t total = 0;
  for (std::size_t road : nbhd.roads) {
    if (road >= by_road.size()) continue;
    for (std::size_t i : by_road[road]) {
      if (distance(vectors[i].point, school.location()) > nbhd.radius_m) continue;
      ++counts[static_cast<std::size_t>(ids[i] - 1)];
      ++total;
    }
  }
  if (total == 0) {
    throw Error(ErrorCode::kNoSampledPoints,
                "neighborhood of school '" + nbhd.school_id + "' has no sampled scene points");
  }
  std::array<double, kScenescapeCount> shares{};
  for (std::size_t s = 0; s < kScenescapeCount; ++s) {
    shares[s] = static_cast<double>(counts[s]) / static_cast<double>(total);
  }
  return shares;
}

}  // namespace

std::array<double, kScenescapeCount> neighborhood_shares(const ScenescapeModel& model,
                                                         std::span<const SceneVector> vectors,
                                                         const School& school,
                                                         const Neighborhood& nbhd) {
  const auto by_road = index_by_road(vectors);
  std::vector<int> ids(vectors.size(), 0);
  for (std::size_t road : nbhd.roads) {
    if (road >= by_road.size()) continue;
    for (std::size_t i : by_road[road]) ids[i] = model.assign(vectors[i]);
  }
  return tally_shares(vectors, ids, by_road, school, nbhd);
}

std::vector<std::array<double, kScenescapeCount>> all_neighborhood_shares(
    const ScenescapeModel& model, std::span<const SceneVector> vectors,
    std::span<const School> schools, std::span<const Neighborhood> nbhds) {
  if (schools.size() != nbhds.size()) {
    throw Error(ErrorCode::kInvalidArgument, "schools and neighborhoods differ in length");
  }
  const auto by_road = index_by_road(vectors);
  std::vector<int> ids(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) ids[i] = model.assign(vectors[i]);
  std::vector<std::array<double, kScenescapeCount>> out;
  out.reserve(nbhds.size());
  for (std::size_t s = 0; s < nbhds.size(); ++s) {
    out.push_back(tally_shares(vectors, ids, by_road, schools[s], nbhds[s]));
  }
  return out;
}

}  // namespace schoolrun
