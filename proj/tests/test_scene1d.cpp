#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qp/rng.hpp"
#include "qp/scene1d.hpp"

namespace qp {
namespace {

using cd = std::complex<double>;

// Term-by-term evaluation with independent cos/sin calls.
double naive_eval(const FourierFunction1D& f, double theta) {
  const auto& c = f.coefficients();
  double s = c[0].real();
  for (std::size_t k = 1; k < c.size(); ++k) {
    const double a = static_cast<double>(k) * theta;
    s += 2.0 * (c[k].real() * std::cos(a) - c[k].imag() * std::sin(a));
  }
  return s;
}

FourierFunction1D pure_c2(double magnitude = 100.0) {
  return FourierFunction1D({cd(0), cd(0), cd(magnitude)});
}

TEST(SampleFunction, DominantMagnitude) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto f = sample_function(s);
    ASSERT_EQ(f.coefficients().size(), kFourierTerms);
    EXPECT_NEAR(std::abs(f.coefficients()[2]), 100.0, 1e-12);
  }
}

TEST(SampleFunction, Deterministic) {
  EXPECT_EQ(sample_function(42).coefficients(), sample_function(42).coefficients());
  EXPECT_NE(sample_function(42).coefficients(), sample_function(43).coefficients());
}

TEST(SampleFunction, MeanMagnitudeOfC10) {
  const std::size_t n = 10000;
  double sum = 0, sq = 0;
  for (std::uint64_t s = 0; s < n; ++s) {
    const double a = std::abs(sample_function(s).coefficients()[10]);
    sum += a;
    sq += a * a;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - std::exp(-2.0)), 3 * se);
}

TEST(Evaluate, SingleTerms) {
  const FourierFunction1D dc({cd(5.0)});
  for (double t : {0.0, 1.0, 4.0}) EXPECT_EQ(dc(t), 5.0);
  // c_2 stands for the conjugate pair, so the harmonic amplitude is 2|c_2|.
  const auto f = pure_c2();
  for (double t : {0.0, 0.4, 2.9}) EXPECT_NEAR(f(t), 200.0 * std::cos(2 * t), 1e-10);
}

TEST(Evaluate, QuasiPeriodicWithPeriodPi) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto f = sample_function(s);
    double d = 0;
    const int n = 1024;
    for (int i = 0; i < n; ++i) {
      const double t = kTwoPi * i / n;
      d += (f(t) - f(t + kPi)) * (f(t) - f(t + kPi));
    }
    EXPECT_LE(d / n, 0.05 * f.variance()) << "seed " << s;
  }
}

TEST(Evaluate, MatchesNaiveSummation) {
  const auto f = sample_function(7);
  Rng rng(1);
  for (int i = 0; i < 128; ++i) {
    const double t = rng.uniform(0, kTwoPi);
    ASSERT_NEAR(f(t), naive_eval(f, t), 1e-9);
  }
}

TEST(Evaluate, Periodic) {
  const auto f = sample_function(3);
  for (double t : {0.1, 2.0, 5.0}) EXPECT_NEAR(f(t), f(t + kTwoPi), 1e-9);
}

TEST(Shifted, EqualsTranslatedEvaluation) {
  const auto f = sample_function(4);
  const auto g = f.shifted(0.8);
  for (double t : {0.0, 1.3, 4.4}) EXPECT_NEAR(g(t), f(t + 0.8), 1e-9);
}

TEST(RenderCrop, TranslationCovariance) {
  const auto f = sample_function(6);
  const auto a = render_crop(f, Angle(0.9 + 0.25));
  const auto b = render_crop(f.shifted(0.25), Angle(0.9));
  for (std::size_t j = 0; j < kCropLength; ++j) EXPECT_NEAR(a[j], b[j], 1e-9);
}

TEST(CropOffsets, Grid) {
  const auto& s = crop_offsets();
  EXPECT_EQ(s.front(), -kPi / 2);
  EXPECT_NEAR(s.back(), kPi / 2, 1e-15);
  EXPECT_EQ(s[32], 0.0);
}

TEST(RenderCrop, CenterAndPointwise) {
  const auto f = sample_function(5);
  const Angle c(1.7);
  const auto crop = render_crop(f, c);
  EXPECT_EQ(crop[32], f(c.radians()));
  for (std::size_t j = 0; j < kCropLength; ++j) EXPECT_EQ(crop[j], f(c.radians() + crop_offsets()[j]));
}

TEST(RenderCrop, EvenFunctionIsSymmetric) {
  const auto crop = render_crop(pure_c2(), Angle(0.0));
  for (std::size_t j = 0; j < kCropLength; ++j) EXPECT_NEAR(crop[j], crop[kCropLength - 1 - j], 1e-10);
}

TEST(Dataset, ShapeAndDeterminism) {
  const auto f = sample_function(9);
  const auto d = generate_dataset(f, 256, 11);
  EXPECT_EQ(d.count, 256u);
  EXPECT_EQ(d.crops.size(), 256u * 65u);
  EXPECT_EQ(d.gt_angles.size(), 256u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto crop = render_crop(f, Angle(d.gt_angles[i]));
    EXPECT_TRUE(std::equal(crop.begin(), crop.end(), d.crop(i).begin()));
  }
  const auto again = generate_dataset(f, 256, 11);
  EXPECT_EQ(d.crops, again.crops);
  EXPECT_EQ(d.gt_angles, again.gt_angles);
  EXPECT_THROW(generate_dataset(f, 0, 1), InvalidArgument);
}

TEST(Dataset, AnglesPassKolmogorovSmirnov) {
  const auto d = generate_dataset(pure_c2(), 10000, 12);
  std::vector<double> a = d.gt_angles;
  std::sort(a.begin(), a.end());
  double stat = 0;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double cdf = a[i] / kTwoPi;
    stat = std::max({stat, (static_cast<double>(i) + 1) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  EXPECT_LT(stat, 1.628 / std::sqrt(n));  // α = 0.01
}

TEST(Dataset, BinaryRoundTrip) {
  const auto d = generate_dataset(sample_function(2), 17, 3);
  std::stringstream buf;
  write_dataset(buf, d);
  const auto back = read_dataset(buf);
  EXPECT_EQ(back.count, d.count);
  EXPECT_EQ(back.crops, d.crops);
  EXPECT_EQ(back.gt_angles, d.gt_angles);
  EXPECT_EQ(back.function_seed, d.function_seed);
  EXPECT_EQ(back.angle_seed, d.angle_seed);
}

TEST(Dataset, RejectsCorruptFiles) {
  const auto d = generate_dataset(sample_function(2), 5, 3);
  std::stringstream buf;
  write_dataset(buf, d);
  std::string bytes = buf.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream s1(bad_magic);
  EXPECT_THROW(read_dataset(s1), FormatError);

  std::stringstream s2(bytes.substr(0, bytes.size() - 9));
  EXPECT_THROW(read_dataset(s2), FormatError);

  EXPECT_THROW(load_dataset("/nonexistent/dir/x.m1d"), IoError);
}

}  // namespace
}  // namespace qp
