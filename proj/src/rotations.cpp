#include "qp/rotations.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qp {

double wrap_angle(double x) {
  if (!std::isfinite(x)) throw InvalidArgument("wrap_angle: non-finite input");
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // -1e-17 + 2π rounds to 2π.
  if (r >= kTwoPi) r = 0.0;
  return r;
}

PoseSO3::PoseSO3(double azimuth_rad, double elevation_rad, double roll_rad)
    : azimuth(azimuth_rad),
      elevation(std::clamp(elevation_rad, -kPi / 2.0, kPi / 2.0)),
      roll(roll_rad) {
  if (!std::isfinite(elevation_rad)) throw InvalidArgument("PoseSO3: non-finite elevation");
}

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat3 transpose(const Mat3& a) {
  Mat3 t{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = a[j][i];
  return t;
}

double determinant(const Mat3& a) {
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
         a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

Mat3 rotation_x(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
}

Mat3 rotation_y(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}

Mat3 rotation_z(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

Mat3 camera_frame_convention() {
  // columns: right = +Y, up = +Z, back = +X
  return {{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}}};
}

Mat3 pose_to_matrix(const PoseSO3& pose) {
  const Mat3 world = matmul(rotation_z(pose.azimuth.radians()), rotation_y(-pose.elevation));
  return matmul(matmul(world, camera_frame_convention()), rotation_z(pose.roll.radians()));
}

double angular_distance(Angle a, Angle b) {
  const double d = std::abs(a.radians() - b.radians());
  return std::min(d, kTwoPi - d);
}

double so3_geodesic_distance(const PoseSO3& a, const PoseSO3& b) {
  const Mat3 rel = matmul(transpose(pose_to_matrix(a)), pose_to_matrix(b));
  const double trace = rel[0][0] + rel[1][1] + rel[2][2];
  return std::acos(std::clamp((trace - 1.0) / 2.0, -1.0, 1.0));
}

EquivalenceRelation::EquivalenceRelation(int order) : order_(order) {
  if (order < 1) {
    throw InvalidArgument("equivalence relation order must be >= 1, got " +
                          std::to_string(order));
  }
}

std::vector<Angle> equivalence_class(Angle z, const EquivalenceRelation& rel) {
  std::vector<Angle> members;
  members.reserve(static_cast<std::size_t>(rel.order()));
  members.push_back(z);
  for (int k = 1; k < rel.order(); ++k) members.emplace_back(z.radians() + k * rel.period());
  return members;
}

std::vector<PoseSO3> equivalence_class(const PoseSO3& z, const EquivalenceRelation& rel) {
  std::vector<PoseSO3> members;
  members.reserve(static_cast<std::size_t>(rel.order()));
  for (Angle az : equivalence_class(z.azimuth, rel)) members.emplace_back(az, z.elevation, z.roll);
  return members;
}

double quotient_representative(Angle z, const EquivalenceRelation& rel) {
  const double period = rel.period();
  double r = std::fmod(z.radians(), period);
  if (r < 0.0) r += period;
  if (r >= period) r = 0.0;
  return r;
}

double orbit_distance(Angle a, Angle b, const EquivalenceRelation& rel) {
  double best = kPi;
  for (Angle member : equivalence_class(b, rel)) best = std::min(best, angular_distance(a, member));
  return best;
}

double mean_offset_error(std::span<const double> pred, std::span<const double> gt,
                         double offset) {
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += angular_distance(Angle(pred[i] + offset), Angle(gt[i]));
  }
  return sum / static_cast<double>(pred.size());
}

Alignment align_global_1d(std::span<const double> pred, std::span<const double> gt) {
  if (pred.empty() || pred.size() != gt.size()) {
    throw InvalidArgument("align_global_1d: need equal-length, non-empty angle lists");
  }
  constexpr int kCandidates = 4096;
  constexpr double kTolerance = 1e-6;
  const double spacing = kTwoPi / kCandidates;

  double best_offset = 0.0;
  double best_error = mean_offset_error(pred, gt, 0.0);
  for (int c = 1; c < kCandidates; ++c) {
    const double offset = c * spacing;
    const double err = mean_offset_error(pred, gt, offset);
    if (err < best_error) {
      best_error = err;
      best_offset = offset;
    }
  }

  // golden-section on [best - spacing, best + spacing]
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = best_offset - spacing, hi = best_offset + spacing;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = mean_offset_error(pred, gt, x1), f2 = mean_offset_error(pred, gt, x2);
  while (hi - lo > kTolerance) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = mean_offset_error(pred, gt, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = mean_offset_error(pred, gt, x2);
    }
  }
  const double refined = 0.5 * (lo + hi);
  const double refined_error = mean_offset_error(pred, gt, refined);
  if (refined_error < best_error) return {Angle(refined), refined_error};
  return {Angle(best_offset), best_error};
}

}  // namespace qp
