#include "qp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <queue>
#include <sstream>

#include "qp/csv.hpp"
#include "qp/image_io.hpp"
#include "qp/rng.hpp"

namespace qp {

std::vector<double> CropRenderer::render(const PoseSO3& pose, Exec) const {
  const auto crop = render_crop(f_, pose.azimuth);
  return {crop.begin(), crop.end()};
}

SphereRenderer::SphereRenderer(SphereScene scene, Camera camera, std::size_t samples)
    : scene_(std::move(scene)), camera_(camera), samples_(samples) {
  scene_.validate();
  camera_.validate(scene_);
}

std::vector<double> SphereRenderer::render(const PoseSO3& pose, Exec exec) const {
  Camera cam = camera_;
  cam.pose = pose;
  return render_view(scene_, cam, samples_, exec).planes;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("renderings differ in size");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

PoseSO3 node_pose(const GridSpec& grid, std::size_t index, const PoseSO3& ref) {
  const std::size_t a = index % grid.azimuth_bins;
  const std::size_t e = index / grid.azimuth_bins;
  return PoseSO3(grid.azimuth(a), grid.elevation(e), ref.roll.radians());
}

// Renders every grid node; node i of the result is the flat image at i.
std::vector<std::vector<double>> render_nodes(const PoseRenderer& renderer, const GridSpec& grid,
                                              const PoseSO3& ref, Exec exec) {
  std::vector<std::vector<double>> out(grid.size());
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 1) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = renderer.render(node_pose(grid, static_cast<std::size_t>(i), ref));
  }
  return out;
}

}  // namespace

double self_similarity(const PoseRenderer& renderer, const PoseSO3& z, const PoseSO3& z_ref) {
  return squared_distance(renderer.render(z), renderer.render(z_ref));
}

void GridSpec::validate() const {
  if (azimuth_bins < 8) throw InvalidArgument("grid needs at least 8 azimuth bins");
  if (elevation_bins < 1) throw InvalidArgument("grid needs at least one elevation row");
}

double GridSpec::azimuth(std::size_t a) const {
  return kTwoPi * static_cast<double>(a) / static_cast<double>(azimuth_bins);
}

double GridSpec::elevation(std::size_t e) const {
  if (elevation_bins == 1) return 0.0;
  return -0.5 * kPi + kPi * static_cast<double>(e) / static_cast<double>(elevation_bins - 1);
}

std::size_t SelfSimilarityMap::argmin() const {
  if (values.empty()) throw InvalidArgument("empty map");
  return static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
}

SelfSimilarityMap ssm_grid(const PoseRenderer& renderer, const PoseSO3& z_ref, const GridSpec& grid,
                           Exec exec) {
  grid.validate();
  SelfSimilarityMap map;
  map.reference = z_ref;
  map.grid = grid;
  map.resolution = renderer.resolution();
  map.values.assign(grid.size(), 0.0);
  const std::vector<double> ref = renderer.render(z_ref, exec);
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 1) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    map.values[idx] = squared_distance(renderer.render(node_pose(grid, idx, z_ref)), ref);
  }
  return map;
}

SelfSimilarityMap quotient_ssm(const SelfSimilarityMap& map, int order) {
  if (order < 1) throw InvalidArgument("replication order must be >= 1");
  const std::size_t A = map.grid.azimuth_bins;
  const auto N = static_cast<std::size_t>(order);
  if (A % N != 0) {
    throw InvalidArgument("azimuth bins (" + std::to_string(A) + ") not divisible by N = " +
                          std::to_string(order));
  }
  const std::size_t Q = A / N;
  SelfSimilarityMap out;
  out.reference = map.reference;
  out.grid = {Q, map.grid.elevation_bins};
  out.resolution = map.resolution;
  out.values.resize(Q * map.grid.elevation_bins);
  for (std::size_t e = 0; e < map.grid.elevation_bins; ++e) {
    for (std::size_t q = 0; q < Q; ++q) {
      double m = map.at(q, e);
      for (std::size_t k = 1; k < N; ++k) m = std::min(m, map.at(q + k * Q, e));
      out.values[e * Q + q] = m;
    }
  }
  return out;
}

RegionOfAttraction region_of_attraction(const SelfSimilarityMap& map) {
  const std::vector<double>& v = map.values;
  if (v.empty() || v.size() != map.grid.size()) throw ShapeError("map does not match its grid");
  for (double x : v)
    if (!std::isfinite(x)) throw NonFiniteError("region_of_attraction: map has non-finite values");

  RegionOfAttraction roa;
  roa.grid = map.grid;
  roa.members.assign(v.size(), false);
  roa.seed_node = map.argmin();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*hi == *lo) {
    roa.members.assign(v.size(), true);
    roa.coverage = 1.0;
    roa.degenerate = true;
    return roa;
  }
  const double eps = kMonotoneMargin * (*hi - *lo);
  const std::size_t A = map.grid.azimuth_bins;
  const std::size_t E = map.grid.elevation_bins;

  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  roa.members[roa.seed_node] = true;
  queue.push({v[roa.seed_node], roa.seed_node});
  std::size_t count = 1;
  while (!queue.empty()) {
    const std::size_t u = queue.top().second;
    queue.pop();
    const std::size_t a = u % A;
    const std::size_t e = u / A;
    std::size_t nbrs[4];
    std::size_t n = 0;
    nbrs[n++] = e * A + (a + 1) % A;
    nbrs[n++] = e * A + (a + A - 1) % A;
    if (e > 0) nbrs[n++] = u - A;
    if (e + 1 < E) nbrs[n++] = u + A;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t w = nbrs[k];
      if (!roa.members[w] && v[w] > v[u] + eps) {
        roa.members[w] = true;
        ++count;
        queue.push({v[w], w});
      }
    }
  }
  roa.coverage = static_cast<double>(count) / static_cast<double>(v.size());
  return roa;
}

std::vector<DifficultyEntry> difficulty(const PoseRenderer& renderer, const std::vector<int>& orders,
                                        std::size_t n_ref, const GridSpec& grid, std::uint64_t seed,
                                        Exec exec) {
  grid.validate();
  if (n_ref < 1) throw InvalidArgument("need at least one reference pose");
  if (orders.empty()) throw InvalidArgument("need at least one replication order");
  for (int N : orders) {
    if (N < 1) throw InvalidArgument("replication order must be >= 1");
  }

  Rng rng(derive_seed(seed, 51));
  std::vector<PoseSO3> refs;
  for (std::size_t r = 0; r < n_ref; ++r) refs.emplace_back(kTwoPi * rng.uniform(), 0.0, 0.0);

  // Each order uses the largest multiple of N not above the requested bin
  // count; orders sharing a bin count share their maps.
  std::vector<std::size_t> bins(orders.size());
  for (std::size_t k = 0; k < orders.size(); ++k) {
    const auto N = static_cast<std::size_t>(orders[k]);
    bins[k] = grid.azimuth_bins / N * N;
    if (bins[k] / N < 2) throw InvalidArgument("too few azimuth bins for N = " + std::to_string(N));
  }

  std::vector<DifficultyEntry> out(orders.size());
  std::vector<bool> done(orders.size(), false);
  for (std::size_t first = 0; first < orders.size(); ++first) {
    if (done[first]) continue;
    const GridSpec g{bins[first], grid.elevation_bins};
    std::vector<std::size_t> group;
    for (std::size_t k = first; k < orders.size(); ++k) {
      if (!done[k] && bins[k] == bins[first]) {
        group.push_back(k);
        done[k] = true;
      }
    }

    const auto nodes = render_nodes(renderer, g, PoseSO3{}, exec);
    std::vector<double> sums(group.size(), 0.0);
    std::vector<std::size_t> degenerate(group.size(), 0);
    SelfSimilarityMap map;
    map.grid = g;
    map.resolution = renderer.resolution();
    map.values.resize(g.size());
    const auto n = static_cast<std::ptrdiff_t>(g.size());
    for (const PoseSO3& ref : refs) {
      const std::vector<double> target = renderer.render(ref, exec);
      map.reference = ref;
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        map.values[idx] = squared_distance(nodes[idx], target);
      }
      for (std::size_t j = 0; j < group.size(); ++j) {
        const RegionOfAttraction roa = region_of_attraction(quotient_ssm(map, orders[group[j]]));
        sums[j] += roa.coverage;
        degenerate[j] += roa.degenerate ? 1 : 0;
      }
    }

    for (std::size_t j = 0; j < group.size(); ++j) {
      DifficultyEntry& d = out[group[j]];
      d.order = orders[group[j]];
      d.estimate = sums[j] / static_cast<double>(n_ref);
      d.n_ref = n_ref;
      d.nodes = g.size() / static_cast<std::size_t>(d.order);
      d.standard_error = std::sqrt(d.estimate * (1.0 - d.estimate) /
                                   (static_cast<double>(n_ref) * static_cast<double>(d.nodes)));
      d.degenerate = degenerate[j];
      d.grid = g;
      d.resolution = renderer.resolution();
    }
  }
  return out;
}

DifficultyEntry difficulty(const PoseRenderer& renderer, const EquivalenceRelation& rel,
                           std::size_t n_ref, const GridSpec& grid, std::uint64_t seed, Exec exec) {
  return difficulty(renderer, std::vector<int>{rel.order()}, n_ref, grid, seed, exec).front();
}

DescentResult pose_descent(const PoseRenderer& renderer, const PoseSO3& z_ref, const PoseSO3& z0,
                           const DescentOptions& options, const EquivalenceRelation& rel) {
  if (!(options.step > 0.0) || !std::isfinite(options.step)) {
    throw InvalidArgument("descent step must be positive");
  }
  if (!(options.grid_spacing > 0.0)) throw InvalidArgument("grid spacing must be positive");
  const double h = options.fd_step > 0.0 ? options.fd_step : options.grid_spacing / 4.0;
  const double max_move = options.max_move > 0.0 ? options.max_move : options.grid_spacing / 2.0;

  const std::vector<double> target = renderer.render(z_ref, Exec::parallel);
  const double elevation = z0.elevation;
  const double roll = z0.roll.radians();
  auto loss = [&](double azimuth) {
    return squared_distance(renderer.render(PoseSO3(azimuth, elevation, roll), Exec::parallel), target);
  };

  DescentResult res;
  double z = z0.azimuth.radians();
  double value = loss(z);
  res.trajectory.push_back({0, z, value});
  if (value > 0.0) {
    for (std::size_t it = 1; it <= options.max_iters; ++it) {
      const double g = (loss(z + h) - loss(z - h)) / (2.0 * h);
      if (!std::isfinite(g)) throw NonFiniteError("pose_descent: non-finite gradient");
      const double move = std::clamp(-options.step * g, -max_move, max_move);
      if (std::abs(move) < options.tolerance) break;
      z = wrap_angle(z + move);
      value = loss(z);
      res.trajectory.push_back({it, z, value});
    }
  }
  res.final_distance = orbit_distance(Angle(z), z_ref.azimuth, rel);
  res.converged = res.final_distance < options.success_radius;
  return res;
}

// ---- artifacts ------------------------------------------------------------

namespace {

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_map_csv(const std::filesystem::path& path, const SelfSimilarityMap& map) {
  auto out = open_text(path);
  const GridSpec& g = map.grid;
  out << "# grid azimuth_bins=" << g.azimuth_bins << " elevation_bins=" << g.elevation_bins
      << " reference=" << csv::number(map.reference.azimuth.radians()) << ','
      << csv::number(map.reference.elevation) << ',' << csv::number(map.reference.roll.radians())
      << " resolution=" << map.resolution << '\n';
  out << "azimuth_index,elevation_index,azimuth_rad,elevation_rad,value\n";
  for (std::size_t e = 0; e < g.elevation_bins; ++e) {
    for (std::size_t a = 0; a < g.azimuth_bins; ++a) {
      out << a << ',' << e << ',' << csv::number(g.azimuth(a)) << ',' << csv::number(g.elevation(e))
          << ',' << csv::number(map.at(a, e)) << '\n';
    }
  }
  finish(out, path);
}

SelfSimilarityMap read_map_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t ca = t.column("azimuth_index");
  const std::size_t ce = t.column("elevation_index");
  const std::size_t cv = t.column("value");
  if (t.rows.empty()) throw FormatError(path.string() + ": map has no rows");
  struct Cell {
    std::size_t a, e;
    double v;
  };
  std::vector<Cell> cells;
  std::size_t A = 0, E = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double a = t.number(r, ca);
    const double e = t.number(r, ce);
    if (a < 0 || e < 0 || a != std::floor(a) || e != std::floor(e) || a > 1e7 || e > 1e7) {
      throw FormatError(path.string() + ": grid indices must be non-negative integers");
    }
    cells.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(e), t.number(r, cv)});
    A = std::max(A, cells.back().a + 1);
    E = std::max(E, cells.back().e + 1);
  }
  SelfSimilarityMap map;
  map.grid = {A, E};
  if (cells.size() != map.grid.size()) throw FormatError(path.string() + ": grid is incomplete");
  map.values.assign(map.grid.size(), std::nan(""));
  for (const Cell& c : cells) map.values[c.e * A + c.a] = c.v;
  for (double v : map.values)
    if (std::isnan(v)) throw FormatError(path.string() + ": duplicate grid node");

  // Optional "# grid ..." comment carries the reference pose and resolution.
  std::ifstream in(path);
  std::string line;
  if (std::getline(in, line) && line.rfind("# grid", 0) == 0) {
    std::istringstream ss(line.substr(6));
    std::string tok;
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "reference") {
        double p[3] = {0, 0, 0};
        std::istringstream vs(val);
        std::string cell;
        for (int i = 0; i < 3 && std::getline(vs, cell, ','); ++i) p[i] = std::stod(cell);
        map.reference = PoseSO3(p[0], p[1], p[2]);
      } else if (key == "resolution") {
        map.resolution = std::stoul(val);
      }
    }
  }
  return map;
}

void write_map_heatmap(const std::filesystem::path& path, const SelfSimilarityMap& map) {
  // Rows of the image run from the highest elevation down.
  const std::size_t A = map.grid.azimuth_bins;
  const std::size_t E = map.grid.elevation_bins;
  std::vector<double> img(A * E);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t a = 0; a < A; ++a) img[(E - 1 - e) * A + a] = map.at(a, e);
  const HeatmapScale scale = write_pgm_heatmap(path, img, A, E);
  std::filesystem::path sidecar = path;
  sidecar += ".txt";
  write_heatmap_sidecar(sidecar, scale);
}

void write_region_pbm(const std::filesystem::path& path, const RegionOfAttraction& region) {
  const std::size_t A = region.grid.azimuth_bins;
  const std::size_t E = region.grid.elevation_bins;
  std::vector<bool> bits(A * E);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t a = 0; a < A; ++a) bits[(E - 1 - e) * A + a] = region.members[e * A + a];
  write_pbm(path, bits, A, E);
}

void write_difficulty_csv(const std::filesystem::path& path, const std::vector<DifficultyEntry>& rows) {
  auto out = open_text(path);
  out << "K,N,D,stderr,n_ref,grid,resolution\n";
  for (const DifficultyEntry& d : rows) {
    out << d.symmetry_order << ',' << d.order << ',' << csv::number(d.estimate) << ','
        << csv::number(d.standard_error) << ',' << d.n_ref << ',' << d.grid.azimuth_bins << 'x'
        << d.grid.elevation_bins << ',' << d.resolution << '\n';
  }
  finish(out, path);
}

void write_trajectory_csv(const std::filesystem::path& path, const DescentResult& result) {
  auto out = open_text(path);
  out << "iteration,azimuth_rad,value\n";
  for (const DescentPoint& p : result.trajectory) {
    out << p.iteration << ',' << csv::number(p.azimuth) << ',' << csv::number(p.value) << '\n';
  }
  finish(out, path);
}

}  // namespace qp
