#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "qp/common.hpp"

namespace qp {

/// Wraps a finite real into [0, 2π). Throws InvalidArgument for NaN/Inf.
double wrap_angle(double x);

/// A point of SO(2), always stored in canonical form [0, 2π).
class Angle {
 public:
  constexpr Angle() = default;
  explicit Angle(double radians) : radians_(wrap_angle(radians)) {}

  double radians() const { return radians_; }

  friend Angle operator+(Angle a, Angle b) { return Angle(a.radians_ + b.radians_); }
  friend Angle operator-(Angle a, Angle b) { return Angle(a.radians_ - b.radians_); }
  friend Angle operator+(Angle a, double b) { return Angle(a.radians_ + b); }
  friend bool operator==(Angle a, Angle b) = default;

 private:
  double radians_ = 0.0;
};

/// Camera orientation as (azimuth, elevation, roll). Elevation is clamped to
/// [-π/2, π/2].
struct PoseSO3 {
  Angle azimuth;
  double elevation = 0.0;
  Angle roll;

  PoseSO3() = default;
  PoseSO3(double azimuth_rad, double elevation_rad, double roll_rad);
  PoseSO3(Angle az, double el, Angle r) : PoseSO3(az.radians(), el, r.radians()) {}
};

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul(const Mat3& a, const Mat3& b);
Mat3 transpose(const Mat3& a);
double determinant(const Mat3& a);

/// Elementary rotations about the world axes (right-handed, angle in radians).
Mat3 rotation_x(double angle);
Mat3 rotation_y(double angle);
Mat3 rotation_z(double angle);

/// Camera-to-world rotation of the reference pose (0, 0, 0): the camera sits
/// on the +X axis looking at the origin, up = +Z. Columns are
/// (right, up, back); the camera looks along -back.
Mat3 camera_frame_convention();

/// Camera-to-world rotation: Rz(azimuth) · Ry(-elevation) · C0 · Rz(roll),
/// i.e. roll about the view axis first, then elevation about camera-right,
/// then azimuth about world +Z.
Mat3 pose_to_matrix(const PoseSO3& pose);

/// Shortest arc between two angles, in [0, π].
double angular_distance(Angle a, Angle b);

/// Angle of the relative rotation between two poses, in [0, π].
double so3_geodesic_distance(const PoseSO3& a, const PoseSO3& b);

/// The relation R_N: z ~ z' iff they differ by a multiple of 2π/N in azimuth.
class EquivalenceRelation {
 public:
  explicit EquivalenceRelation(int order);

  int order() const { return order_; }
  double period() const { return kTwoPi / order_; }

 private:
  int order_;
};

/// Members {z + 2kπ/N : k = 0..N-1}; member 0 is z itself.
std::vector<Angle> equivalence_class(Angle z, const EquivalenceRelation& rel);

/// Same as above, applied to the azimuth only (elevation and roll fixed).
std::vector<PoseSO3> equivalence_class(const PoseSO3& z, const EquivalenceRelation& rel);

/// Representative of [z] in [0, 2π/N). Idempotent.
double quotient_representative(Angle z, const EquivalenceRelation& rel);

/// Distance from `a` to the nearest member of the class of `b`.
double orbit_distance(Angle a, Angle b, const EquivalenceRelation& rel);

struct Alignment {
  Angle offset;
  double mean_error = 0.0;
};

/// Mean angular error of (pred_i + offset) against gt_i.
double mean_offset_error(std::span<const double> pred, std::span<const double> gt,
                         double offset);

/// Finds the global SO(2) offset minimizing the mean angular distance between
/// pred + offset and gt. 4096-candidate grid search, then golden-section
/// refinement to 1e-6 rad around the best candidate.
Alignment align_global_1d(std::span<const double> pred, std::span<const double> gt);

}  // namespace qp
