#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qp/rotations.hpp"
#include "qp/scene1d.hpp"
#include "qp/scene3d.hpp"

namespace qp {

/// Anything that maps a pose to a flat vector of photometric values.
class PoseRenderer {
 public:
  virtual ~PoseRenderer() = default;
  virtual std::vector<double> render(const PoseSO3& pose, Exec exec = Exec::serial) const = 0;
  /// Image side length, or the crop length for 1D renderers.
  virtual std::size_t resolution() const = 0;
};

/// 65-sample crops of a known 1D function; only the azimuth is used.
class CropRenderer : public PoseRenderer {
 public:
  explicit CropRenderer(FourierFunction1D f) : f_(std::move(f)) {}
  std::vector<double> render(const PoseSO3& pose, Exec exec = Exec::serial) const override;
  std::size_t resolution() const override { return kCropLength; }

 private:
  FourierFunction1D f_;
};

/// render_view of a sphere scene; the camera pose is replaced per call.
class SphereRenderer : public PoseRenderer {
 public:
  SphereRenderer(SphereScene scene, Camera camera = Camera{}, std::size_t samples = kDefaultSamples);
  std::vector<double> render(const PoseSO3& pose, Exec exec = Exec::serial) const override;
  std::size_t resolution() const override { return camera_.resolution; }

 private:
  SphereScene scene_;
  Camera camera_;
  std::size_t samples_;
};

/// Squared L2 distance between the renderings at z and z*.
double self_similarity(const PoseRenderer& renderer, const PoseSO3& z, const PoseSO3& z_ref);

/// Azimuth node a sits at 2πa/A. With E = 1 the single row is the equator;
/// otherwise elevation node e sits at -π/2 + πe/(E-1).
struct GridSpec {
  std::size_t azimuth_bins = 256;
  std::size_t elevation_bins = 1;

  void validate() const;
  std::size_t size() const { return azimuth_bins * elevation_bins; }
  double azimuth(std::size_t a) const;
  double elevation(std::size_t e) const;
  double azimuth_spacing() const { return kTwoPi / static_cast<double>(azimuth_bins); }
};

struct SelfSimilarityMap {
  PoseSO3 reference;
  GridSpec grid;
  std::vector<double> values;  // index e·A + a
  std::size_t resolution = 0;

  double at(std::size_t a, std::size_t e = 0) const { return values[e * grid.azimuth_bins + a]; }
  /// Smallest index among the minimal values.
  std::size_t argmin() const;
};

/// Dense evaluation of self_similarity over `grid` with roll fixed to the
/// reference roll. Nodes are independent; the result is the same for any
/// worker count.
SelfSimilarityMap ssm_grid(const PoseRenderer& renderer, const PoseSO3& z_ref, const GridSpec& grid,
                           Exec exec = Exec::parallel);

/// Minimum over the N pre-images of each quotient node. A must be divisible
/// by N; the output has A/N azimuth bins.
SelfSimilarityMap quotient_ssm(const SelfSimilarityMap& map, int order);

struct RegionOfAttraction {
  GridSpec grid;
  std::vector<bool> members;
  std::size_t seed_node = 0;
  double coverage = 0.0;
  bool degenerate = false;  // constant map; every node is a member
};

/// Relative strictness margin: a neighbor joins only if it exceeds the
/// member's value by more than this fraction of (max - min).
inline constexpr double kMonotoneMargin = 1e-12;

/// Nodes joined to the argmin by a strictly decreasing 4-connected path
/// (azimuth wraps, elevation does not). Priority-queue fill in ascending value.
RegionOfAttraction region_of_attraction(const SelfSimilarityMap& map);

struct DifficultyEntry {
  int symmetry_order = 0;  // K of the scene, 0 when not applicable
  int order = 1;           // N
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t n_ref = 0;
  std::size_t nodes = 0;   // quotient nodes per map
  std::size_t degenerate = 0;
  GridSpec grid;
  std::size_t resolution = 0;
};

/// Mean region coverage of the quotient maps over `n_ref` reference poses
/// drawn uniformly on the equator, with the binomial standard error
/// sqrt(p(1-p) / (n_ref · nodes)). One entry per requested order. Order N
/// uses floor(A/N)·N azimuth bins so the quotient is exact (255 bins for
/// N = 3 when A = 256); orders with the same bin count share their maps.
std::vector<DifficultyEntry> difficulty(const PoseRenderer& renderer, const std::vector<int>& orders,
                                        std::size_t n_ref, const GridSpec& grid, std::uint64_t seed,
                                        Exec exec = Exec::parallel);

DifficultyEntry difficulty(const PoseRenderer& renderer, const EquivalenceRelation& rel,
                           std::size_t n_ref, const GridSpec& grid, std::uint64_t seed,
                           Exec exec = Exec::parallel);

struct DescentOptions {
  double step = 1e-5;
  std::size_t max_iters = 400;
  double fd_step = 0.0;        // 0: grid spacing / 4
  double max_move = 0.0;       // 0: grid spacing / 2
  double grid_spacing = kTwoPi / 256.0;
  double tolerance = 2.5e-4;   // stop when a move is shorter than this (rad)
  double success_radius = 3.0 * kPi / 180.0;
};

struct DescentPoint {
  std::size_t iteration = 0;
  double azimuth = 0.0;
  double value = 0.0;
};

struct DescentResult {
  std::vector<DescentPoint> trajectory;
  bool converged = false;
  double final_distance = 0.0;  // to the nearest member of [z*]
};

/// Azimuth-only gradient descent on z ↦ S(z, z*) with central finite
/// differences. Moves are clipped to `max_move`. Stops early on an exact
/// match (S = 0) or when a move falls below `tolerance`.
DescentResult pose_descent(const PoseRenderer& renderer, const PoseSO3& z_ref, const PoseSO3& z0,
                           const DescentOptions& options,
                           const EquivalenceRelation& rel = EquivalenceRelation(1));

// ---- artifacts ------------------------------------------------------------

/// Header "azimuth_index,elevation_index,azimuth_rad,elevation_rad,value",
/// one row per node in index order.
void write_map_csv(const std::filesystem::path& path, const SelfSimilarityMap& map);
SelfSimilarityMap read_map_csv(const std::filesystem::path& path);

/// PGM heatmap (A wide, E tall) plus a "<path>.txt" sidecar holding the
/// normalization constants.
void write_map_heatmap(const std::filesystem::path& path, const SelfSimilarityMap& map);

void write_region_pbm(const std::filesystem::path& path, const RegionOfAttraction& region);

/// Header "K,N,D,stderr,n_ref,grid,resolution".
void write_difficulty_csv(const std::filesystem::path& path, const std::vector<DifficultyEntry>& rows);

/// Header "iteration,azimuth_rad,value".
void write_trajectory_csv(const std::filesystem::path& path, const DescentResult& result);

}  // namespace qp
