#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "qp/rng.hpp"
#include "qp/rotations.hpp"

namespace qp {
namespace {

TEST(WrapAngle, Examples) {
  EXPECT_EQ(wrap_angle(0.0), 0.0);
  EXPECT_NEAR(wrap_angle(kTwoPi + 0.5), 0.5, 1e-15);
  EXPECT_NEAR(wrap_angle(-kPi / 2), 3 * kPi / 2, 1e-15);
}

TEST(WrapAngle, RangeAndIdempotence) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform(-1e4, 1e4);
    const double w = wrap_angle(x);
    ASSERT_GE(w, 0.0);
    ASSERT_LT(w, kTwoPi);
    ASSERT_EQ(wrap_angle(w), w);
  }
  // Tiny negatives round up to 2π in double arithmetic and must fold to 0.
  EXPECT_LT(wrap_angle(-1e-18), kTwoPi);
}

TEST(WrapAngle, RejectsNonFinite) {
  EXPECT_THROW(wrap_angle(std::numeric_limits<double>::quiet_NaN()), InvalidArgument);
  EXPECT_THROW(wrap_angle(std::numeric_limits<double>::infinity()), InvalidArgument);
}

TEST(AngularDistance, Examples) {
  EXPECT_EQ(angular_distance(Angle(0), Angle(0)), 0.0);
  EXPECT_NEAR(angular_distance(Angle(0.1), Angle(kTwoPi - 0.1)), 0.2, 1e-12);
  EXPECT_NEAR(angular_distance(Angle(0), Angle(kPi)), kPi, 1e-15);
}

TEST(AngularDistance, MetricProperties) {
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    const Angle a(rng.uniform(0, kTwoPi)), b(rng.uniform(0, kTwoPi)), c(rng.uniform(0, kTwoPi));
    const double ab = angular_distance(a, b);
    ASSERT_GE(ab, 0.0);
    ASSERT_LE(ab, kPi);
    ASSERT_EQ(ab, angular_distance(b, a));
    ASSERT_LE(angular_distance(a, c), ab + angular_distance(b, c) + 1e-12);
  }
}

Mat3 identity() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

double max_diff(const Mat3& a, const Mat3& b) {
  double m = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

TEST(PoseMatrix, ReferencePoseIsConvention) {
  EXPECT_LT(max_diff(pose_to_matrix(PoseSO3(0, 0, 0)), camera_frame_convention()), 1e-15);
  // Camera on +X looking at the origin with +Z up.
  const Mat3 c = camera_frame_convention();
  EXPECT_NEAR(c[0][2], 1.0, 1e-15);  // back = +X
  EXPECT_NEAR(c[2][1], 1.0, 1e-15);  // up = +Z
}

TEST(PoseMatrix, MatchesFactorProduct) {
  const PoseSO3 p(kPi / 2, 0, 0);
  const Mat3 expect = matmul(matmul(rotation_z(kPi / 2), rotation_y(0.0)),
                             matmul(camera_frame_convention(), rotation_z(0.0)));
  EXPECT_LT(max_diff(pose_to_matrix(p), expect), 1e-12);

  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double az = rng.uniform(0, kTwoPi), el = rng.uniform(-1.5, 1.5), r = rng.uniform(0, kTwoPi);
    const Mat3 oracle = matmul(matmul(rotation_z(az), rotation_y(-el)),
                               matmul(camera_frame_convention(), rotation_z(r)));
    ASSERT_LT(max_diff(pose_to_matrix(PoseSO3(az, el, r)), oracle), 1e-12);
  }
}

TEST(PoseMatrix, IsRotation) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 m = pose_to_matrix(PoseSO3(rng.uniform(0, kTwoPi), rng.uniform(-kPi / 2, kPi / 2),
                                          rng.uniform(0, kTwoPi)));
    ASSERT_NEAR(determinant(m), 1.0, 1e-9);
    ASSERT_LT(max_diff(matmul(transpose(m), m), identity()), 1e-12);
  }
}

TEST(PoseSO3, ElevationClamped) {
  EXPECT_EQ(PoseSO3(0, 3.0, 0).elevation, kPi / 2);
  EXPECT_EQ(PoseSO3(0, -3.0, 0).elevation, -kPi / 2);
}

TEST(Geodesic, Examples) {
  EXPECT_NEAR(so3_geodesic_distance(PoseSO3(0.3, 0.2, 0.1), PoseSO3(0.3, 0.2, 0.1)), 0.0, 1e-7);
  EXPECT_NEAR(so3_geodesic_distance(PoseSO3(0, 0, 0), PoseSO3(kPi, 0, 0)), kPi, 1e-7);
}

TEST(Geodesic, EquatorReducesToAzimuthDistance) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(0, kTwoPi), b = rng.uniform(0, kTwoPi);
    ASSERT_NEAR(so3_geodesic_distance(PoseSO3(a, 0, 0), PoseSO3(b, 0, 0)),
                angular_distance(Angle(a), Angle(b)), 1e-7);
  }
}

TEST(EquivalenceClass, Examples) {
  const auto c2 = equivalence_class(Angle(0.3), EquivalenceRelation(2));
  ASSERT_EQ(c2.size(), 2u);
  EXPECT_NEAR(c2[0].radians(), 0.3, 1e-15);
  EXPECT_NEAR(c2[1].radians(), 0.3 + kPi, 1e-15);

  const auto c1 = equivalence_class(Angle(0.0), EquivalenceRelation(1));
  ASSERT_EQ(c1.size(), 1u);
  EXPECT_EQ(c1[0].radians(), 0.0);

  const auto c4 = equivalence_class(PoseSO3(0.1, 0.4, 0.0), EquivalenceRelation(4));
  ASSERT_EQ(c4.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(c4[k].azimuth.radians(), 0.1 + k * kPi / 2, 1e-14);
    EXPECT_EQ(c4[k].elevation, 0.4);
    EXPECT_EQ(c4[k].roll.radians(), 0.0);
  }
}

TEST(EquivalenceRelation, RejectsBadOrder) {
  EXPECT_THROW(EquivalenceRelation(0), InvalidArgument);
  EXPECT_THROW(EquivalenceRelation(-2), InvalidArgument);
}

TEST(QuotientRepresentative, Examples) {
  EXPECT_NEAR(quotient_representative(Angle(kPi + 0.2), EquivalenceRelation(2)), 0.2, 1e-14);
  EXPECT_NEAR(quotient_representative(Angle(0.1), EquivalenceRelation(1)), 0.1, 1e-15);

  // Scan over k for the member in [0, 2π/3).
  const double z = 5.9;
  double found = -1;
  for (int k = 0; k < 3; ++k) {
    const double v = z - k * kTwoPi / 3;
    if (v >= 0 && v < kTwoPi / 3) found = v;
  }
  ASSERT_GE(found, 0.0);
  EXPECT_NEAR(quotient_representative(Angle(z), EquivalenceRelation(3)), found, 1e-14);
  EXPECT_NEAR(found, 5.9 - 2 * kTwoPi / 3, 1e-14);
}

TEST(QuotientRepresentative, IdempotentAndClassInvariant) {
  Rng rng(6);
  for (int n = 1; n <= 6; ++n) {
    const EquivalenceRelation rel(n);
    for (int i = 0; i < 500; ++i) {
      const Angle z(rng.uniform(0, kTwoPi));
      const double q = quotient_representative(z, rel);
      ASSERT_GE(q, 0.0);
      ASSERT_LT(q, rel.period());
      ASSERT_NEAR(quotient_representative(Angle(q), rel), q, 1e-12);
      for (const Angle& m : equivalence_class(z, rel)) {
        const double qm = quotient_representative(m, rel);
        // Representatives may land on either side of the 0 / period seam.
        ASSERT_LT(std::min(std::abs(qm - q), rel.period() - std::abs(qm - q)), 1e-12);
      }
    }
  }
}

TEST(OrbitDistance, BruteForce) {
  Rng rng(7);
  for (int n = 1; n <= 5; ++n) {
    const EquivalenceRelation rel(n);
    for (int i = 0; i < 300; ++i) {
      const Angle a(rng.uniform(0, kTwoPi)), b(rng.uniform(0, kTwoPi));
      double best = kPi;
      for (const Angle& m : equivalence_class(b, rel)) best = std::min(best, angular_distance(a, m));
      ASSERT_NEAR(orbit_distance(a, b, rel), best, 1e-14);
    }
  }
}

TEST(Alignment, Identity) {
  std::vector<double> gt{0.1, 1.2, 2.3, 4.0, 5.5};
  const Alignment a = align_global_1d(gt, gt);
  EXPECT_LT(angular_distance(a.offset, Angle(0)), 1e-6);
  EXPECT_LT(a.mean_error, 1e-6);
}

TEST(Alignment, RecoversGlobalRotation) {
  Rng rng(8);
  std::vector<double> gt(200), pred(200);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = rng.uniform(0, kTwoPi);
    pred[i] = wrap_angle(gt[i] + 0.7);
  }
  const Alignment a = align_global_1d(pred, gt);
  EXPECT_LT(angular_distance(a.offset, Angle(-0.7)), 1e-5);
  EXPECT_LT(a.mean_error, 1e-5);
  EXPECT_NEAR(mean_offset_error(pred, gt, a.offset.radians()), a.mean_error, 1e-15);
}

TEST(Alignment, NoBetterOffsetOnFineScan) {
  Rng rng(9);
  std::vector<double> gt(64), pred(64);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = rng.uniform(0, kTwoPi);
    pred[i] = wrap_angle(gt[i] + 2.0 + 0.3 * rng.normal());
  }
  const Alignment a = align_global_1d(pred, gt);
  for (int j = 0; j < 20000; ++j) {
    ASSERT_GE(mean_offset_error(pred, gt, kTwoPi * j / 20000.0), a.mean_error - 1e-9);
  }
}

TEST(Alignment, RejectsMismatchedSizes) {
  std::vector<double> a{0.0, 1.0}, b{0.0};
  EXPECT_THROW(align_global_1d(a, b), InvalidArgument);
}

}  // namespace
}  // namespace qp
