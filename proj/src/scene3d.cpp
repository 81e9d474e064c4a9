#include "qp/scene3d.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "qp/rng.hpp"

namespace qp {

namespace {

using Vec3 = std::array<double, 3>;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

// Signed azimuth difference in (-π, π].
double azimuth_delta(double a, double b) {
  double d = std::remainder(a - b, kTwoPi);
  if (d <= -kPi) d += kTwoPi;
  return d;
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Entry/exit depths of the ray through a centered sphere; false on a miss.
bool sphere_hits(const Ray& ray, double radius, double* t0, double* t1) {
  const double b = dot(ray.origin, ray.direction);
  const double c = dot(ray.origin, ray.origin) - radius * radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return false;
  const double s = std::sqrt(disc);
  *t0 = -b - s;
  *t1 = -b + s;
  return true;
}

// Below this transmittance the remaining contributions are negligible.
constexpr double kOpaque = 1e-13;

// Mean depth of the exponential absorption profile over [0, L].
double absorption_centroid(double sigma, double length) {
  const double x = sigma * length;
  if (x < 1e-3) return length * (0.5 - x / 12.0);
  return 1.0 / sigma - length / std::expm1(x);
}

}  // namespace

SphereScene SphereScene::reference(int k) {
  SphereScene s;
  s.symmetry_order = k;
  const double deg = kPi / 180.0;
  s.patches = {
      ColorPatch{0.0, 0.0, 8.0 * deg, {1.0, 0.0, 0.0}},
      ColorPatch{40.0 * deg, 0.0, 8.0 * deg, {0.0, 1.0, 0.0}},
      ColorPatch{80.0 * deg, 0.0, 8.0 * deg, {0.0, 0.0, 1.0}},
  };
  s.validate();
  return s;
}

SphereScene SphereScene::without_patches() const {
  SphereScene s = *this;
  s.patches.clear();
  return s;
}

void SphereScene::validate() const {
  if (symmetry_order < 1) throw InvalidArgument("symmetry order must be >= 1");
  if (!(radius > 0.0) || !(half_thickness > 0.0) || half_thickness >= radius) {
    throw InvalidArgument("shell needs 0 < half-thickness < radius");
  }
  if (!(density > 0.0) || !std::isfinite(density)) throw InvalidArgument("density must be positive");
  if (!(amplitude >= 0.0 && amplitude <= 0.5)) throw InvalidArgument("amplitude must be in [0, 0.5]");
  if (!(patch_edge_width > 0.0)) throw InvalidArgument("patch edge width must be positive");
}

RGB texture_color(const SphereScene& scene, double azimuth, double elevation) {
  const double wave = scene.amplitude * std::sin(scene.symmetry_order * azimuth) * std::cos(elevation);
  RGB c{0.5 + wave, 0.5 - wave, scene.blue};
  for (const ColorPatch& p : scene.patches) {
    const double da = p.half_width - std::abs(azimuth_delta(azimuth, p.azimuth));
    const double de = p.half_width - std::abs(elevation - p.elevation);
    if (da <= 0.0 || de <= 0.0) continue;
    const double w = smoothstep(da / scene.patch_edge_width) * smoothstep(de / scene.patch_edge_width);
    for (int ch = 0; ch < 3; ++ch) c[ch] = (1.0 - w) * c[ch] + w * p.color[ch];
  }
  return c;
}

void Camera::validate(const SphereScene& scene) const {
  if (resolution < 8) throw InvalidArgument("image resolution must be >= 8");
  if (!(distance > scene.radius + scene.half_thickness)) {
    throw InvalidArgument("camera must sit outside the shell");
  }
  if (!(fov_y > 0.0 && fov_y < kPi)) throw InvalidArgument("field of view must be in (0, π)");
}

namespace {

struct CameraFrame {
  Mat3 m;
  double tan_half;
  double distance;

  explicit CameraFrame(const Camera& cam)
      : m(pose_to_matrix(cam.pose)), tan_half(std::tan(0.5 * cam.fov_y)), distance(cam.distance) {}

  Ray ray(double u, double v) const {
    Ray ray;
    Vec3 d{};
    for (int i = 0; i < 3; ++i) {
      ray.origin[i] = distance * m[i][2];
      d[i] = -m[i][2] + u * tan_half * m[i][0] + v * tan_half * m[i][1];
    }
    const double n = std::sqrt(dot(d, d));
    for (int i = 0; i < 3; ++i) ray.direction[i] = d[i] / n;
    return ray;
  }
};

std::array<double, 2> pixel_uv(std::size_t resolution, std::size_t row, std::size_t col) {
  const double n = static_cast<double>(resolution);
  return {2.0 * (static_cast<double>(col) + 0.5) / n - 1.0,
          1.0 - 2.0 * (static_cast<double>(row) + 0.5) / n};
}

}  // namespace

Ray camera_ray(const Camera& cam, double u, double v) { return CameraFrame(cam).ray(u, v); }

Ray pixel_ray(const Camera& cam, std::size_t row, std::size_t col) {
  const auto [u, v] = pixel_uv(cam.resolution, row, col);
  return camera_ray(cam, u, v);
}

std::array<double, 2> ray_bounds(const SphereScene& scene, double distance) {
  const double reach = 1.1 * (scene.radius + scene.half_thickness);
  return {std::max(0.0, distance - reach), distance + reach};
}

namespace {

// Composites one ray; per-piece weights go to `record` when given.
RGB march(const SphereScene& scene, const Ray& ray, double t_near, double t_far,
          std::size_t samples, RayTrace* record) {
  RGB acc{0.0, 0.0, 0.0};
  double T = 1.0;

  // The density is σ₀ on at most two depth intervals: outer-sphere entry to
  // inner-sphere entry and inner exit to outer exit.
  std::array<std::array<double, 2>, 2> spans{};
  int n_spans = 0;
  double o0, o1;
  if (sphere_hits(ray, scene.radius + scene.half_thickness, &o0, &o1)) {
    double i0, i1;
    if (sphere_hits(ray, scene.radius - scene.half_thickness, &i0, &i1)) {
      spans[n_spans++] = {o0, i0};
      spans[n_spans++] = {i1, o1};
    } else {
      spans[n_spans++] = {o0, o1};
    }
  }

  const double dt = (t_far - t_near) / static_cast<double>(samples);
  for (int s = 0; s < n_spans; ++s) {
    const double a = std::max(spans[s][0], t_near);
    const double b = std::min(spans[s][1], t_far);
    if (!(b > a)) continue;
    const auto first = static_cast<std::size_t>(std::floor((a - t_near) / dt));
    const auto last = std::min(samples, static_cast<std::size_t>(std::ceil((b - t_near) / dt)));
    for (std::size_t j = first; j < last; ++j) {
      const double lo = std::max(a, t_near + static_cast<double>(j) * dt);
      const double hi = std::min(b, t_near + static_cast<double>(j + 1) * dt);
      const double len = hi - lo;
      if (!(len > 0.0)) continue;
      const double alpha = -std::expm1(-scene.density * len);
      const double t = lo + absorption_centroid(scene.density, len);
      Vec3 x;
      for (int i = 0; i < 3; ++i) x[i] = ray.origin[i] + t * ray.direction[i];
      const RGB c = texture_color(scene, wrap_angle(std::atan2(x[1], x[0])),
                                  std::atan2(x[2], std::hypot(x[0], x[1])));
      const double w = T * alpha;
      for (int ch = 0; ch < 3; ++ch) acc[ch] += w * c[ch];
      T *= 1.0 - alpha;
      if (record) {
        record->weights.push_back(w);
        record->transmittance.push_back(T);
      }
      if (T < kOpaque) break;
    }
    if (T < kOpaque) break;
  }
  if (record) record->residual = T;
  for (int ch = 0; ch < 3; ++ch) acc[ch] += T * scene.background[ch];
  return acc;
}

}  // namespace

RayTrace trace_ray(const SphereScene& scene, const Ray& ray, double t_near, double t_far,
                   std::size_t samples) {
  if (samples < 1) throw InvalidArgument("need at least one sample per ray");
  if (!(t_far > t_near)) throw InvalidArgument("empty ray interval");
  RayTrace tr;
  tr.color = march(scene, ray, t_near, t_far, samples, &tr);
  return tr;
}

ImageRGB render_view(const SphereScene& scene, const Camera& cam, std::size_t samples, Exec exec) {
  scene.validate();
  cam.validate(scene);
  if (samples < 1) throw InvalidArgument("need at least one sample per ray");
  const std::size_t n = cam.resolution;
  const auto [t_near, t_far] = ray_bounds(scene, cam.distance);
  const CameraFrame frame(cam);
  ImageRGB img(n, n);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const auto [u, v] = pixel_uv(n, static_cast<std::size_t>(r), c);
      const RGB color = march(scene, frame.ray(u, v), t_near, t_far, samples, nullptr);
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(ch, static_cast<std::size_t>(r), c) = color[ch];
    }
  }
  return img;
}

PosedImageSet generate_sphere_views(int k, std::size_t n_views, std::uint64_t seed,
                                 const Camera& camera_template) {
  if (n_views < 1) throw InvalidArgument("need at least one view");
  const SphereScene scene = SphereScene::reference(k);
  PosedImageSet set;
  set.symmetry_order = k;
  set.seed = seed;
  Rng rng(derive_seed(seed, 41));
  for (std::size_t i = 0; i < n_views; ++i) {
    Camera cam = camera_template;
    cam.pose = PoseSO3(kTwoPi * rng.uniform(), 0.0, 0.0);
    set.cameras.push_back(cam);
  }
  for (const Camera& cam : set.cameras) set.images.push_back(render_view(scene, cam));
  const auto held_out = static_cast<std::size_t>(
      std::llround(16.0 * static_cast<double>(n_views) / 116.0));
  set.train_count = n_views - held_out;
  return set;
}

void write_pose_csv(const std::filesystem::path& path, const PosedImageSet& set) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "index,azimuth_rad,elevation_rad,roll_rad,distance\n" << std::setprecision(17);
  for (std::size_t i = 0; i < set.cameras.size(); ++i) {
    const Camera& c = set.cameras[i];
    out << i << ',' << c.pose.azimuth.radians() << ',' << c.pose.elevation << ','
        << c.pose.roll.radians() << ',' << c.distance << '\n';
  }
  if (!out) throw IoError("failed writing pose CSV");
}

}  // namespace qp
