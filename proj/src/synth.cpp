#include "schoolrun/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "schoolrun/csv.hpp"
#include "schoolrun/geometry.hpp"
#include "schoolrun/rng.hpp"

namespace schoolrun::synth {

using nlohmann::json;

namespace {

// Stream tags for Rng::derive; each entity index is OR-ed into the low bits.
constexpr std::uint64_t kTagCategories = 1ULL << 40;
constexpr std::uint64_t kTagDrops = 2ULL << 40;
constexpr std::uint64_t kTagCells = 3ULL << 40;
constexpr std::uint64_t kTagSchool = 4ULL << 40;
constexpr std::uint64_t kTagLayers = 5ULL << 40;
constexpr std::uint64_t kTagCentroids = 6ULL << 40;
constexpr std::uint64_t kTagMixing = 7ULL << 40;
constexpr std::uint64_t kTagLabel = 8ULL << 40;
constexpr std::uint64_t kTagJitter = 9ULL << 40;
constexpr std::uint64_t kTagJam = 10ULL << 40;
constexpr std::uint64_t kTagAllocate = 11ULL << 40;
constexpr std::uint64_t kTagSites = 12ULL << 40;
constexpr std::uint64_t kTagObservations = 13ULL << 40;

constexpr std::size_t kMaskedSupport = 12;
constexpr std::size_t kUnmaskedSupport = 3;
constexpr double kMaskedMass = 0.85;

// Relative frequency of each scenescape within its category before the
// per-school perturbation. Strictly decreasing so ids match member order.
const std::array<std::vector<double>, 3> kBaseMix = {
    std::vector<double>{0.4, 0.3, 0.2, 0.1}, std::vector<double>{0.5, 0.3, 0.2},
    std::vector<double>{0.5, 0.3, 0.2}};

[[noreturn]] void infeasible(const std::string& msg) {
  throw Error(ErrorCode::kSpecInfeasible, "synth: " + msg);
}

[[noreturn]] void invalid(const std::string& msg) {
  throw Error(ErrorCode::kInvalidParams, "synth: " + msg);
}

RoadCategory draw_category(Rng& rng, const std::array<double, 3>& shares) {
  const double u = rng.uniform();
  if (u < shares[0]) return RoadCategory::kOrdinary;
  if (u < shares[0] + shares[1]) return RoadCategory::kMain;
  return RoadCategory::kExpress;
}

void check_shares(const std::array<double, 3>& shares) {
  double sum = 0.0;
  for (double s : shares) {
    if (!(s >= 0.0)) infeasible("category shares must be non-negative");
    sum += s;
  }
  if (std::fabs(sum - 1.0) > 1e-9) infeasible("category shares must sum to 1");
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

std::size_t category_of_id(int id) { return id <= 4 ? 0 : (id <= 7 ? 1 : 2); }

int first_id(std::size_t category) { return category == 0 ? 1 : (category == 1 ? 5 : 8); }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

Eigen::VectorXd dummies(const TimeSlot& slot) {
  Eigen::VectorXd x(3);
  x << slot.work(), slot.school(), slot.exam();
  return x;
}

// Draws a level in [lo, hi] (1-based) proportionally to probs.
int draw_level(const Eigen::VectorXd& probs, int lo, int hi, double u) {
  double total = 0.0;
  for (int j = lo; j <= hi; ++j) total += probs[j - 1];
  double acc = 0.0;
  for (int j = lo; j < hi; ++j) {
    acc += probs[j - 1] / total;
    if (u < acc) return j;
  }
  return hi;
}

Eigen::VectorXd checked_probs(const GologitFit& planted, const TimeSlot& slot) {
  const Eigen::VectorXd p = raw_category_probs(planted, dummies(slot));
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (!(p[j] >= 0.0)) {
      invalid("negative probability for level " + std::to_string(j + 1) + " at work=" +
              std::to_string(slot.work()) + " school=" + std::to_string(slot.school()) +
              " exam=" + std::to_string(slot.exam()));
    }
  }
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kMissingArtifact, "cannot write '" + path.string() + "'");
  out << text;
}

bool timestamp_less(const Timestamp& a, const Timestamp& b) {
  return a.day < b.day || (a.day == b.day && a.minute_of_day < b.minute_of_day);
}

}  // namespace

RoadNetwork grid_network(const GridSpec& grid) {
  if (grid.nx < 2 || grid.ny < 2) infeasible("grid must be at least 2 x 2 nodes");
  if (!(grid.spacing_m > 0.0)) infeasible("grid spacing must be positive");
  if (!(grid.drop_probability >= 0.0 && grid.drop_probability < 1.0)) {
    infeasible("drop probability must lie in [0, 1)");
  }
  check_shares(grid.category_shares);
  Rng cat_rng = Rng::derive(grid.seed, kTagCategories);
  std::vector<RoadCategory> vertical(grid.nx), horizontal(grid.ny);
  for (auto& c : vertical) c = draw_category(cat_rng, grid.category_shares);
  for (auto& c : horizontal) c = draw_category(cat_rng, grid.category_shares);

  Rng drop = Rng::derive(grid.seed, kTagDrops);
  const double s = grid.spacing_m;
  std::vector<RoadSegment> segments;
  for (std::size_t j = 0; j < grid.ny; ++j) {
    for (std::size_t i = 0; i + 1 < grid.nx; ++i) {
      if (drop.bernoulli(grid.drop_probability)) continue;
      segments.emplace_back("h" + std::to_string(j) + "-" + std::to_string(i), horizontal[j],
                            std::vector<Point>{{i * s, j * s}, {(i + 1) * s, j * s}});
    }
  }
  for (std::size_t i = 0; i < grid.nx; ++i) {
    for (std::size_t j = 0; j + 1 < grid.ny; ++j) {
      if (drop.bernoulli(grid.drop_probability)) continue;
      segments.emplace_back("v" + std::to_string(i) + "-" + std::to_string(j), vertical[i],
                            std::vector<Point>{{i * s, j * s}, {i * s, (j + 1) * s}});
    }
  }
  if (segments.empty()) infeasible("every grid segment was dropped");
  return RoadNetwork(std::move(segments));
}

// ---- SynthSpec ------------------------------------------------------------

SynthSpec SynthSpec::defaults() {
  SynthSpec s;
  Eigen::VectorXd alphas(3);
  alphas << 1.0, -0.8, -2.2;
  Eigen::MatrixXd betas(3, 3);
  betas << 0.30, 0.60, -0.20,
           0.25, 0.50, -0.15,
           0.20, 0.40, -0.10;
  s.gologit = GologitFit::from_params(alphas, betas, {"work", "school", "exam"});
  // Magnitudes grow with the square root of each feature's variance inflation
  // in the default city, so every planted term has a similar expected t. The
  // overall scale keeps clipping of the jam outcome rare.
  s.linear.coefficients = {
      {"distance", -0.032},   {"population", 0.015},      {"bus_stop", 0.013},
      {"parking_lot", 0.013}, {"betweeness", 0.030},      {"integration", 0.016},
      {"choice", 0.013},      {"building_height", 0.013}, {"school_mix", 0.013},
      {"UFB", 0.056},         {"RH", -0.037},             {"ECH", 0.034},
  };
  return s;
}

void SynthSpec::validate() const {
  if (n_schools == 0) infeasible("n_schools must be positive");
  if (cell_cols == 0 || cell_rows == 0) infeasible("city needs at least one cell");
  if (blocks_per_cell < 2) infeasible("cells need at least two blocks per side");
  if (n_schools > cell_cols * cell_rows) {
    infeasible(std::to_string(n_schools) + " schools do not fit in " +
               std::to_string(cell_cols * cell_rows) + " cells");
  }
  if (!(block_m > 0.0) || !(buffer_m > 0.0) || !(school_jitter_m >= 0.0)) {
    infeasible("lengths must be positive");
  }
  if (!(drop_probability >= 0.0 && drop_probability < 1.0)) {
    infeasible("drop probability must lie in [0, 1)");
  }
  check_shares(category_shares);

  if (gologit.M != 4 || gologit.K() != 3 || gologit.alphas.size() != 3) {
    invalid("planted gologit needs 4 levels and the work/school/exam dummies");
  }
  for (Eigen::Index j = 1; j < gologit.alphas.size(); ++j) {
    if (!(gologit.alphas[j] < gologit.alphas[j - 1])) {
      invalid("planted thresholds must be strictly decreasing");
    }
  }
  if (!gologit.alphas.allFinite() || !gologit.betas.allFinite()) invalid("non-finite gologit params");
  for (const auto& [name, beta] : linear.coefficients) {
    if (!feature_index(name)) invalid("unknown feature '" + name + "' in planted coefficients");
    if (!std::isfinite(beta)) invalid("non-finite planted coefficient for '" + name + "'");
  }
  if (!(linear.target_r2 > 0.0 && linear.target_r2 <= 1.0)) invalid("target R^2 must lie in (0, 1]");
  if (linear.noise_sigma && !(*linear.noise_sigma >= 0.0)) invalid("noise sigma must be >= 0");
  if (!(scene_jitter > 0.0)) invalid("scene jitter variance must be positive");
  if (!(svi_interval_m > 0.0)) invalid("sampling interval must be positive");
}

json SynthSpec::to_json() const {
  json j;
  j["seed"] = seed;
  j["n_schools"] = n_schools;
  j["cell_cols"] = cell_cols;
  j["cell_rows"] = cell_rows;
  j["blocks_per_cell"] = blocks_per_cell;
  j["block_m"] = block_m;
  j["drop_probability"] = drop_probability;
  j["school_jitter_m"] = school_jitter_m;
  j["category_shares"] = category_shares;
  j["buffer_m"] = buffer_m;
  json g;
  g["alphas"] = std::vector<double>(gologit.alphas.data(), gologit.alphas.data() + gologit.alphas.size());
  g["betas"] = json::array();
  for (Eigen::Index r = 0; r < gologit.betas.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < gologit.betas.cols(); ++c) row.push_back(gologit.betas(r, c));
    g["betas"].push_back(row);
  }
  j["gologit"] = g;
  json l;
  l["intercept"] = linear.intercept;
  l["coefficients"] = linear.coefficients;
  l["target_r2"] = linear.target_r2;
  l["noise_sigma"] = linear.noise_sigma ? json(*linear.noise_sigma) : json(nullptr);
  j["linear"] = l;
  j["scene_jitter"] = scene_jitter;
  j["svi_interval_m"] = svi_interval_m;
  j["model1_observations"] = model1_observations;
  j["full_scale"] = full_scale;
  return j;
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s = defaults();
  try {
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("seed", s.seed);
    take("n_schools", s.n_schools);
    take("cell_cols", s.cell_cols);
    take("cell_rows", s.cell_rows);
    take("blocks_per_cell", s.blocks_per_cell);
    take("block_m", s.block_m);
    take("drop_probability", s.drop_probability);
    take("school_jitter_m", s.school_jitter_m);
    take("category_shares", s.category_shares);
    take("buffer_m", s.buffer_m);
    if (j.contains("gologit")) {
      const auto& g = j.at("gologit");
      const auto a = g.at("alphas").get<std::vector<double>>();
      const auto b = g.at("betas").get<std::vector<std::vector<double>>>();
      Eigen::VectorXd alphas = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
      Eigen::MatrixXd betas(static_cast<Eigen::Index>(b.size()), b.empty() ? 0 : static_cast<Eigen::Index>(b[0].size()));
      for (std::size_t r = 0; r < b.size(); ++r) {
        if (b[r].size() != static_cast<std::size_t>(betas.cols())) invalid("ragged gologit betas");
        for (std::size_t c = 0; c < b[r].size(); ++c) betas(r, c) = b[r][c];
      }
      s.gologit = GologitFit::from_params(alphas, betas, {"work", "school", "exam"});
    }
    if (j.contains("linear")) {
      const auto& l = j.at("linear");
      if (l.contains("intercept")) s.linear.intercept = l.at("intercept").get<double>();
      if (l.contains("coefficients")) {
        s.linear.coefficients = l.at("coefficients").get<std::map<std::string, double>>();
      }
      if (l.contains("target_r2")) s.linear.target_r2 = l.at("target_r2").get<double>();
      if (l.contains("noise_sigma") && !l.at("noise_sigma").is_null()) {
        s.linear.noise_sigma = l.at("noise_sigma").get<double>();
      }
    }
    take("scene_jitter", s.scene_jitter);
    take("svi_interval_m", s.svi_interval_m);
    take("model1_observations", s.model1_observations);
    take("full_scale", s.full_scale);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

// ---- City -----------------------------------------------------------------

SyntheticCity gen_city(const SynthSpec& spec, Warnings* warnings) {
  spec.validate();
  SyntheticCity city;
  const std::size_t nx = spec.cell_cols * spec.blocks_per_cell + 1;
  const std::size_t ny = spec.cell_rows * spec.blocks_per_cell + 1;
  city.network = grid_network({nx, ny, spec.block_m, spec.category_shares, spec.drop_probability, spec.seed});
  city.frame.center = {(nx - 1) * spec.block_m / 2.0, (ny - 1) * spec.block_m / 2.0};

  // Schools at the centres of seeded cells, numbered in cell order.
  const std::size_t cells = spec.cell_cols * spec.cell_rows;
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  Rng cell_rng = Rng::derive(spec.seed, kTagCells);
  shuffle(order, cell_rng);
  order.resize(spec.n_schools);
  std::sort(order.begin(), order.end());
  const double cell_m = spec.blocks_per_cell * spec.block_m;
  for (std::size_t s = 0; s < order.size(); ++s) {
    Rng rng = Rng::derive(spec.seed, kTagSchool | s);
    const double cx = (order[s] % spec.cell_cols + 0.5) * cell_m;
    const double cy = (order[s] / spec.cell_cols + 0.5) * cell_m;
    const Point p{cx + uniform(rng, -1, 1) * spec.school_jitter_m, cy + uniform(rng, -1, 1) * spec.school_jitter_m};
    char id[32];
    std::snprintf(id, sizeof id, "S%04zu", s + 1);
    city.schools.emplace_back(id, p, city.frame);
  }

  city.neighborhoods = build_neighborhoods(city.schools, city.network, spec.buffer_m);
  std::vector<int> owner(city.network.segments().size(), -1);
  for (std::size_t s = 0; s < city.neighborhoods.size(); ++s) {
    const auto& nb = city.neighborhoods[s];
    if (nb.roads.empty()) infeasible("school " + nb.school_id + " has an empty neighborhood");
    for (auto r : nb.roads) {
      if (owner[r] >= 0) {
        infeasible("neighborhoods of " + city.schools[owner[r]].id() + " and " + nb.school_id +
                   " overlap; enlarge cells or shrink the buffer");
      }
      owner[r] = static_cast<int>(s);
    }
  }
  city.betweenness = edge_betweenness(city.network);

  // Raw Table 1 layers.
  for (std::size_t s = 0; s < city.schools.size(); ++s) {
    const auto& school = city.schools[s];
    Rng rng = Rng::derive(spec.seed, kTagLayers | s);
    PoiCounts poi;
    poi.other_schools = rng.poisson(0.8);
    poi.bus_stops = rng.poisson(5.5);
    poi.subway_stations = rng.poisson(0.45);
    poi.parking_lots = rng.poisson(50.0);
    city.layers.poi[school.id()] = poi;

    BuildingStats b;
    b.buildings = 60 + static_cast<int>(rng.index(141));
    const double f_old = uniform(rng, 0.25, 0.45);
    const double f_new = std::clamp(f_old + rng.normal(0.0, 0.12), 0.02, 0.55);
    const double f_high = uniform(rng, 0.2, 0.5);
    const double f_low = std::clamp(f_high + rng.normal(0.0, 0.35), 0.0, 1.0 - f_high);
    b.old_buildings = static_cast<int>(std::lround(b.buildings * f_old));
    b.new_buildings = static_cast<int>(std::lround(b.buildings * f_new));
    b.high_buildings = static_cast<int>(std::lround(b.buildings * f_high));
    b.low_buildings = static_cast<int>(std::lround(b.buildings * f_low));
    b.mean_stories = std::max(1.0, rng.normal(6.2, 2.0));
    city.layers.buildings[school.id()] = b;

    LandUse lu;
    for (auto& a : lu.area) a = rng.bernoulli(0.85) ? uniform(rng, 1000.0, 50000.0) : 0.0;
    city.layers.landuse[school.id()] = lu;

    city.layers.signaling[school.id()] =
        10000.0 * std::exp(0.35 * rng.normal() + 0.4 - 0.05 * school.distance_km());
    city.layers.syntax[school.id()] =
        SyntaxInputs{1.8 - 0.02 * school.distance_km() + 0.15 * rng.normal(), std::exp(rng.normal(8.0, 0.7))};
  }

  // Planted centroids on disjoint label supports.
  {
    Rng rng = Rng::derive(spec.seed, kTagCentroids);
    std::vector<std::size_t> masked = city.mask.indices();
    std::vector<bool> in_mask(kSceneLabelCount, false);
    for (auto i : masked) in_mask[i] = true;
    std::vector<std::size_t> unmasked;
    for (std::size_t i = 0; i < kSceneLabelCount; ++i)
      if (!in_mask[i]) unmasked.push_back(i);
    shuffle(masked, rng);
    shuffle(unmasked, rng);
    for (std::size_t g = 0; g < kScenescapeCount; ++g) {
      std::vector<double> c(kSceneLabelCount, 0.0);
      auto fill = [&](const std::vector<std::size_t>& pool, std::size_t count, double mass) {
        std::vector<double> w(count);
        for (auto& x : w) x = uniform(rng, 0.7, 1.3);
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        for (std::size_t k = 0; k < count; ++k) c[pool[g * count + k]] = mass * w[k] / total;
      };
      fill(masked, kMaskedSupport, kMaskedMass);
      fill(unmasked, kUnmaskedSupport, 1.0 - kMaskedMass);
      city.centroids.push_back(std::move(c));
    }
  }

  // Scene points on neighborhood roads, labelled from per-school mixes.
  std::vector<std::array<std::vector<double>, 3>> mixes(city.schools.size());
  for (std::size_t s = 0; s < city.schools.size(); ++s) {
    Rng rng = Rng::derive(spec.seed, kTagMixing | s);
    for (std::size_t c = 0; c < 3; ++c) {
      auto& m = mixes[s][c];
      for (double base : kBaseMix[c]) m.push_back(base * std::exp(0.6 * rng.normal()));
      const double total = std::accumulate(m.begin(), m.end(), 0.0);
      for (auto& x : m) x /= total;
    }
  }
  std::vector<std::vector<std::size_t>> by_school(city.schools.size());
  for (const auto& sp : sample_points(city.network, spec.svi_interval_m)) {
    const int s = owner[sp.road];
    if (s < 0) continue;
    const std::size_t i = city.scene_points.size();
    Rng rng = Rng::derive(spec.seed, kTagLabel | i);
    const auto c = static_cast<std::size_t>(city.network.segments()[sp.road].category());
    const auto& mix = mixes[s][c];
    const double u = rng.uniform();
    std::size_t k = 0;
    for (double acc = mix[0]; k + 1 < mix.size() && u >= acc; acc += mix[++k]) {}
    city.scene_points.push_back({sp.road, sp.point, first_id(c) + static_cast<int>(k)});
    by_school[s].push_back(i);
  }

  // The planted model holds the masked centroids in id order.
  city.planted_scenescapes.seed = spec.seed;
  for (std::size_t c = 0; c < 3; ++c) {
    auto& cat = city.planted_scenescapes.categories[c];
    cat.category = static_cast<RoadCategory>(c);
    const std::size_t k = kScenescapesPerCategory[c];
    cat.centroids.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(kMaskedLabelCount));
    cat.member_counts.assign(k, 0);
    for (std::size_t j = 0; j < k; ++j) {
      const int id = first_id(c) + static_cast<int>(j);
      cat.ids.push_back(id);
      for (std::size_t d = 0; d < kMaskedLabelCount; ++d) {
        cat.centroids(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d)) =
            city.centroids[id - 1][city.mask.indices()[d]];
      }
    }
  }
  for (const auto& p : city.scene_points) {
    const auto c = category_of_id(p.scenescape);
    ++city.planted_scenescapes.categories[c].member_counts[p.scenescape - first_id(c)];
  }

  // Raw features: Table 1 layers plus planted-label shares.
  for (std::size_t s = 0; s < city.schools.size(); ++s) {
    const auto& school = city.schools[s];
    Table1Inputs in = city.layers.inputs_for(school.id());
    in.graph = graph_metrics(city.network, city.betweenness, school, city.neighborhoods[s], warnings);
    FeatureVector v = derive_table1_features(school, in);
    std::array<double, kScenescapeCount> counts{};
    double total = 0.0;
    for (auto i : by_school[s]) {
      const auto& p = city.scene_points[i];
      if (distance(p.point, school.location()) > spec.buffer_m) continue;
      counts[p.scenescape - 1] += 1.0;
      total += 1.0;
    }
    if (total == 0.0) infeasible("school " + school.id() + " has no scene points inside its buffer");
    for (std::size_t g = 0; g < kScenescapeCount; ++g) v[kFirstShareIndex + g] = counts[g] / total;
    city.features.push_back(v);
  }
  return city;
}

std::vector<double> scene_probabilities(const SynthSpec& spec, const SyntheticCity& city,
                                        std::size_t i) {
  const auto& base = city.centroids.at(static_cast<std::size_t>(city.scene_points.at(i).scenescape - 1));
  Rng rng = Rng::derive(spec.seed, kTagJitter | i);
  std::vector<double> p(base.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < base.size(); ++k) {
    if (base[k] == 0.0) continue;
    p[k] = std::max(0.0, base[k] + spec.scene_jitter * rng.normal());
    total += p[k];
  }
  // Six decimals keep the CSV compact; the sum stays well inside 1e-3 of 1.
  for (auto& x : p) x = std::round(x / total * 1e6) / 1e6;
  return p;
}

std::vector<SceneVector> planted_scene_vectors(const SynthSpec& spec, const SyntheticCity& city,
                                               std::span<const ScenePoint> points) {
  SyntheticCity view;
  view.centroids = city.centroids;
  view.scene_points.assign(points.begin(), points.end());
  RoadNetwork net({RoadSegment("o", RoadCategory::kOrdinary, {{0, 0}, {1, 0}}),
                   RoadSegment("m", RoadCategory::kMain, {{0, 1}, {1, 1}}),
                   RoadSegment("e", RoadCategory::kExpress, {{0, 2}, {1, 2}})});
  std::vector<SceneVector> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto probs = scene_probabilities(spec, view, i);
    auto v = make_scene_vector(net, category_of_id(points[i].scenescape), points[i].point, probs, city.mask);
    out.push_back(std::move(v));
  }
  return out;
}

// ---- Model 2 outcome ------------------------------------------------------

JamDraw gen_jam(const PlantedLinear& planted, const Eigen::MatrixXd& z,
                std::span<const std::string> names, std::uint64_t seed, Warnings* warnings) {
  if (static_cast<std::size_t>(z.cols()) != names.size()) {
    throw Error(ErrorCode::kInvalidArgument, "gen_jam: column count does not match names");
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(z.cols());
  for (const auto& [name, b] : planted.coefficients) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) invalid("planted feature '" + name + "' not among the columns");
    beta[it - names.begin()] = b;
  }
  const Eigen::Index n = z.rows();
  JamDraw d;
  const Eigen::VectorXd xb = z * beta;
  d.signal = xb.array() + planted.intercept;
  d.signal_variance = n > 0 ? (xb.array() - xb.mean()).square().mean() : 0.0;
  d.sigma = planted.noise_sigma
                ? *planted.noise_sigma
                : std::sqrt(d.signal_variance * (1.0 - planted.target_r2) / planted.target_r2);
  const double total = d.signal_variance + d.sigma * d.sigma;
  d.analytic_r2 = total > 0.0 ? d.signal_variance / total : 0.0;
  d.jam.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
    const double raw = d.signal[i] + d.sigma * rng.normal();
    d.jam[i] = std::clamp(raw, 0.0, 1.0);
    if (d.jam[i] != raw) ++d.clipped;
  }
  if (warnings && n > 0 && static_cast<double>(d.clipped) > 0.01 * static_cast<double>(n)) {
    warnings->push_back({WarningCode::kClippingActive,
                         std::to_string(d.clipped) + " of " + std::to_string(n) +
                             " jam values clipped to [0, 1]"});
  }
  return d;
}

// ---- Model 1 outcome ------------------------------------------------------

std::vector<CongestionObservation> gen_observations(const GologitFit& planted,
                                                    std::span<const ObservationSite> sites,
                                                    std::uint64_t seed) {
  std::array<std::optional<Eigen::VectorXd>, 8> cache;
  std::vector<CongestionObservation> out;
  out.reserve(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& site = sites[i];
    const int key = site.slot.work() | (site.slot.school() << 1) | (site.slot.exam() << 2);
    if (!cache[key]) cache[key] = checked_probs(planted, site.slot);
    Rng rng = Rng::derive(seed, i);
    const int level = draw_level(*cache[key], 1, planted.M, rng.uniform());
    out.push_back({site.road, site.slot, CongestionLevel::from_int(level)});
  }
  return out;
}

SyntheticData generate(const SynthSpec& spec, Warnings* warnings) {
  SyntheticData data;
  data.spec = spec;
  data.calendar = CalendarConfig::study_week_2023();
  data.city = gen_city(spec, warnings);
  const auto& city = data.city;

  const std::size_t n = city.schools.size();
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kFeatureCount));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t k = 0; k < kFeatureCount; ++k) raw(s, k) = city.features[s][k];
  std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  const auto z = zscore(raw, names);
  data.jam = gen_jam(spec.linear, z.z, names, Rng::derive(spec.seed, kTagJam).next_u64(), warnings);

  std::vector<TimeSlot> slots;
  std::vector<std::size_t> school_slots;
  for (const auto& ts : data.calendar.observed_timestamps()) {
    slots.push_back(label_timeslot(ts, data.calendar));
    if (slots.back().school()) school_slots.push_back(slots.size() - 1);
  }
  const std::size_t per_road = school_slots.size();

  // School-run slots on neighborhood roads: exact congested counts.
  std::vector<bool> reserved_road(city.network.segments().size(), false);
  data.realized_jam.resize(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng = Rng::derive(spec.seed, kTagAllocate | s);
    std::vector<std::size_t> roads = city.neighborhoods[s].roads;
    const std::size_t R = roads.size();
    const auto capacity = static_cast<long long>(per_road * R);
    const long long C = std::clamp(std::llround(data.jam.jam[s] * static_cast<double>(capacity)), 0LL, capacity);
    data.realized_jam[s] = static_cast<double>(C) / static_cast<double>(capacity);
    shuffle(roads, rng);
    for (std::size_t p = 0; p < R; ++p) {
      reserved_road[roads[p]] = true;
      const auto c = static_cast<std::size_t>(C / static_cast<long long>(R)) +
                     (p < static_cast<std::size_t>(C % static_cast<long long>(R)) ? 1 : 0);
      std::vector<std::size_t> order = school_slots;
      shuffle(order, rng);
      for (std::size_t q = 0; q < order.size(); ++q) {
        const auto& slot = slots[order[q]];
        const Eigen::VectorXd probs = checked_probs(spec.gologit, slot);
        const int level = q < c ? draw_level(probs, 3, 4, rng.uniform()) : draw_level(probs, 1, 2, rng.uniform());
        data.observations.push_back(
            {static_cast<std::uint32_t>(roads[p]), slot, CongestionLevel::from_int(level)});
      }
    }
  }

  // Model 1 stream over the remaining road-slot pairs.
  std::vector<std::uint32_t> pool;
  for (std::size_t r = 0; r < reserved_road.size(); ++r) {
    for (std::size_t t = 0; t < slots.size(); ++t) {
      if (reserved_road[r] && slots[t].school()) continue;
      pool.push_back(static_cast<std::uint32_t>(r * slots.size() + t));
    }
  }
  if (!spec.full_scale && spec.model1_observations < pool.size()) {
    Rng rng = Rng::derive(spec.seed, kTagSites);
    for (std::size_t i = 0; i < spec.model1_observations; ++i) {
      std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
    }
    pool.resize(spec.model1_observations);
    std::sort(pool.begin(), pool.end());
  }
  std::vector<ObservationSite> sites;
  sites.reserve(pool.size());
  for (auto code : pool) sites.push_back({static_cast<std::uint32_t>(code / slots.size()), slots[code % slots.size()]});
  auto drawn = gen_observations(spec.gologit, sites, Rng::derive(spec.seed, kTagObservations).next_u64());
  data.observations.insert(data.observations.end(), drawn.begin(), drawn.end());

  std::sort(data.observations.begin(), data.observations.end(),
            [](const CongestionObservation& a, const CongestionObservation& b) {
              if (a.road != b.road) return a.road < b.road;
              return timestamp_less(a.slot.timestamp(), b.slot.timestamp());
            });
  return data;
}

// ---- Writers --------------------------------------------------------------

void write_inputs(const SyntheticData& data, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto& city = data.city;
  using csv::format_double;

  write_text(dir / "roads.geojson", roads_to_geojson(city.network));
  {
    std::string s = "id,x,y\n";
    for (const auto& school : city.schools) {
      s += school.id() + "," + format_double(school.location().x) + "," + format_double(school.location().y) + "\n";
    }
    write_text(dir / "schools.csv", s);
  }
  write_text(dir / "calendar.json", data.calendar.to_json());
  {
    std::ofstream out(dir / "observations.csv", std::ios::binary);
    if (!out) throw Error(ErrorCode::kMissingArtifact, "cannot write observations");
    out << "road_id,timestamp,level\n";
    for (const auto& o : data.observations) {
      out << city.network.segments()[o.road].id() << ',' << format_timestamp(o.slot.timestamp()) << ','
          << o.level.value() << '\n';
    }
  }
  city.layers.save(dir);
  {
    SceneVectorWriter w(dir / "scenes.csv");
    for (std::size_t i = 0; i < city.scene_points.size(); ++i) {
      const auto& p = city.scene_points[i];
      w.write(city.network.segments()[p.road].id(), p.point, scene_probabilities(data.spec, city, i));
    }
  }
  city.mask.save(dir / "label_mask.txt");
  {
    json c;
    c["center"] = {{"x", city.frame.center.x}, {"y", city.frame.center.y}};
    c["buffer_m"] = data.spec.buffer_m;
    write_text(dir / "city.json", c.dump(2) + "\n");
  }
  {
    json t;
    t["spec"] = data.spec.to_json();
    t["gologit"] = data.spec.gologit.to_json();
    json l;
    l["intercept"] = data.spec.linear.intercept;
    l["coefficients"] = data.spec.linear.coefficients;
    l["sigma"] = data.jam.sigma;
    l["signal_variance"] = data.jam.signal_variance;
    l["analytic_r2"] = data.jam.analytic_r2;
    l["target_r2"] = data.spec.linear.target_r2;
    l["clipped"] = data.jam.clipped;
    t["linear"] = l;
    t["scenescapes"] = city.planted_scenescapes.to_json();
    json schools = json::array();
    for (std::size_t s = 0; s < city.schools.size(); ++s) {
      schools.push_back({{"id", city.schools[s].id()},
                         {"jam_target", data.jam.jam[static_cast<Eigen::Index>(s)]},
                         {"jam", data.realized_jam[static_cast<Eigen::Index>(s)]}});
    }
    t["schools"] = schools;
    t["counts"] = {{"roads", city.network.segments().size()},
                   {"nodes", city.network.nodes().size()},
                   {"scene_points", city.scene_points.size()},
                   {"observations", data.observations.size()}};
    write_text(dir / "truth.json", t.dump(2) + "\n");
  }
}

}  // namespace schoolrun::synth
