#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "qp/image_io.hpp"
#include "qp/rotations.hpp"

namespace qp {

using RGB = std::array<double, 3>;

/// Square in (azimuth, elevation) coordinates painted over the base texture.
/// Inside the square the color is blended from the base to `color` over
/// `edge_width` radians, so the texture stays continuous.
struct ColorPatch {
  double azimuth = 0.0;
  double elevation = 0.0;
  double half_width = 8.0 * kPi / 180.0;
  RGB color{1.0, 0.0, 0.0};
};

/// Red/green sphere texture periodic with period 2π/K in azimuth, plus three
/// symmetry-breaking patches, carried by a thin spherical shell of constant
/// density.
struct SphereScene {
  int symmetry_order = 2;
  double amplitude = 0.5;       // red = 0.5 + a·sin(Kθ)cos(φ), green = 0.5 - ...
  double blue = 0.1;
  std::vector<ColorPatch> patches;
  double patch_edge_width = 4.0 * kPi / 180.0;
  double radius = 1.0;
  double half_thickness = 0.05;
  double density = 1000.0;       // σ₀ inside the shell
  RGB background{1.0, 1.0, 1.0};

  /// Reference scene: patches at azimuths 0°, 40°, 80° on the equator,
  /// half-width 8°, pure red/green/blue.
  static SphereScene reference(int k);

  SphereScene without_patches() const;
  void validate() const;
};

/// Base texture with patches applied. φs must lie in [-π/2, π/2].
RGB texture_color(const SphereScene& scene, double azimuth, double elevation);

/// Pinhole camera on a sphere of radius `distance`, looking at the origin.
struct Camera {
  PoseSO3 pose;
  double distance = 4.0;
  double fov_y = 40.0 * kPi / 180.0;  // vertical field of view
  std::size_t resolution = 64;        // width = height

  void validate(const SphereScene& scene) const;
};

struct Ray {
  std::array<double, 3> origin;
  std::array<double, 3> direction;  // unit length
};

/// Ray through continuous image coordinates (u, v) in [-1, 1]², u to the
/// right, v up; (0, 0) is the optical axis.
Ray camera_ray(const Camera& cam, double u, double v);

/// Ray through the center of pixel (row, col).
Ray pixel_ray(const Camera& cam, std::size_t row, std::size_t col);

inline constexpr std::size_t kDefaultSamples = 64;

/// Per-ray compositing record: one entry per shell piece inside a stratum.
struct RayTrace {
  std::vector<double> weights;        // T_i · α_i
  std::vector<double> transmittance;  // T after each piece
  double residual = 1.0;              // T after the last piece
  RGB color{0.0, 0.0, 0.0};           // background included
};

/// Marches `samples` strata between t_n and t_f. Each stratum's opacity is
/// exact for the piecewise-constant density; the radiance of a piece is read
/// at its opacity-weighted mean depth.
RayTrace trace_ray(const SphereScene& scene, const Ray& ray, double t_near, double t_far,
                   std::size_t samples = kDefaultSamples);

/// Bounds bracketing the shell for a camera at `distance`, 10% margin.
std::array<double, 2> ray_bounds(const SphereScene& scene, double distance);

ImageRGB render_view(const SphereScene& scene, const Camera& cam,
                     std::size_t samples = kDefaultSamples, Exec exec = Exec::parallel);

struct PosedImageSet {
  int symmetry_order = 0;
  std::uint64_t seed = 0;
  std::vector<Camera> cameras;
  std::vector<ImageRGB> images;
  std::size_t train_count = 0;  // first train_count views; the rest are test
};

/// Azimuths i.i.d. uniform, elevation 0, roll 0. 116 views split 100/16; in
/// general round(16·n/116) views are held out.
PosedImageSet generate_sphere_views(int k, std::size_t n_views, std::uint64_t seed,
                                 const Camera& camera_template = Camera{});

/// "index,azimuth_rad,elevation_rad,roll_rad,distance" rows in view order.
void write_pose_csv(const std::filesystem::path& path, const PosedImageSet& set);

}  // namespace qp
