#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "qp/rotations.hpp"

namespace qp {

inline constexpr std::size_t kCropLength = 65;
inline constexpr std::size_t kFourierTerms = 512;
inline constexpr double kDominantMagnitude = 100.0;

/// Sample offsets s_j = -π/2 + jπ/64, j = 0..64 (endpoints inclusive).
const std::array<double, kCropLength>& crop_offsets();

/// Real 2π-periodic function f(θ) = Re(c_0) + Σ_{k≥1} 2·Re(c_k e^{ikθ}).
class FourierFunction1D {
 public:
  FourierFunction1D(std::vector<std::complex<double>> coefficients, std::uint64_t seed = 0);

  double operator()(double theta) const;
  double evaluate(Angle theta) const { return (*this)(theta.radians()); }

  /// g with g(θ) = f(θ + delta).
  FourierFunction1D shifted(double delta) const;

  const std::vector<std::complex<double>>& coefficients() const { return coefficients_; }
  std::uint64_t seed() const { return seed_; }

  /// Population variance of f over `samples` equispaced points.
  double variance(std::size_t samples = 1024) const;

 private:
  std::vector<std::complex<double>> coefficients_;
  std::uint64_t seed_;
};

/// Draws c_k, k = 0..511, with independent N(0, s_k²) real and imaginary
/// parts, s_k = exp(-k/5)/sqrt(π/2) (so the Rayleigh mean E|c_k| equals
/// exp(-k/5)), then rescales c_2 to magnitude 100 keeping its phase.
FourierFunction1D sample_function(std::uint64_t seed);

/// Crop centred at `center`: sample j equals f(center + s_j).
std::array<double, kCropLength> render_crop(const FourierFunction1D& f, Angle center);

struct CropDataset1D {
  std::size_t count = 0;
  std::vector<double> crops;       // count × 65, row-major
  std::vector<double> gt_angles;   // hidden ground truth, [0, 2π)
  std::uint64_t function_seed = 0;
  std::uint64_t angle_seed = 0;

  std::span<const double> crop(std::size_t i) const {
    return {crops.data() + i * kCropLength, kCropLength};
  }
};

/// n crops at angles drawn i.i.d. uniform on [0, 2π) from `seed`.
CropDataset1D generate_dataset(const FourierFunction1D& f, std::size_t n, std::uint64_t seed);

/// Binary dataset file: "M1D1" | u32 n | u32 65 | f64 crops (row-major) |
/// f64 gt angles | u64 function seed | u64 angle seed; little-endian.
void write_dataset(std::ostream& out, const CropDataset1D& data);
CropDataset1D read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const CropDataset1D& data);
CropDataset1D load_dataset(const std::filesystem::path& path);

}  // namespace qp
