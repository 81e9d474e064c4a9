#include "qp/scene1d.hpp"

#include <cmath>
#include <fstream>

#include "qp/binary_io.hpp"
#include "qp/rng.hpp"

namespace qp {

const std::array<double, kCropLength>& crop_offsets() {
  static const std::array<double, kCropLength> offsets = [] {
    std::array<double, kCropLength> s{};
    for (std::size_t j = 0; j < kCropLength; ++j) {
      s[j] = -kPi / 2.0 + static_cast<double>(j) * kPi / static_cast<double>(kCropLength - 1);
    }
    return s;
  }();
  return offsets;
}

FourierFunction1D::FourierFunction1D(std::vector<std::complex<double>> coefficients,
                                     std::uint64_t seed)
    : coefficients_(std::move(coefficients)), seed_(seed) {
  if (coefficients_.empty()) throw InvalidArgument("FourierFunction1D: no coefficients");
}

double FourierFunction1D::operator()(double theta) const {
  // e^{ikθ} by repeated rotation; error stays O(k·eps).
  const std::complex<double> step(std::cos(theta), std::sin(theta));
  std::complex<double> phase = step;
  double sum = coefficients_[0].real();
  for (std::size_t k = 1; k < coefficients_.size(); ++k) {
    sum += 2.0 * (coefficients_[k] * phase).real();
    phase *= step;
  }
  return sum;
}

FourierFunction1D FourierFunction1D::shifted(double delta) const {
  std::vector<std::complex<double>> c = coefficients_;
  for (std::size_t k = 0; k < c.size(); ++k) {
    c[k] *= std::polar(1.0, static_cast<double>(k) * delta);
  }
  return FourierFunction1D(std::move(c), seed_);
}

double FourierFunction1D::variance(std::size_t samples) const {
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double v = (*this)(kTwoPi * static_cast<double>(i) / static_cast<double>(samples));
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(samples);
  return sq / static_cast<double>(samples) - mean * mean;
}

FourierFunction1D sample_function(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  std::vector<std::complex<double>> c(kFourierTerms);
  const double rayleigh_scale = 1.0 / std::sqrt(kPi / 2.0);
  for (std::size_t k = 0; k < kFourierTerms; ++k) {
    const double s = std::exp(-static_cast<double>(k) / 5.0) * rayleigh_scale;
    const double re = s * rng.normal();
    const double im = s * rng.normal();
    c[k] = {re, im};
  }
  const double phase = std::arg(c[2]);
  c[2] = std::polar(kDominantMagnitude, phase);
  return FourierFunction1D(std::move(c), seed);
}

std::array<double, kCropLength> render_crop(const FourierFunction1D& f, Angle center) {
  std::array<double, kCropLength> crop{};
  const auto& s = crop_offsets();
  for (std::size_t j = 0; j < kCropLength; ++j) crop[j] = f(center.radians() + s[j]);
  return crop;
}

CropDataset1D generate_dataset(const FourierFunction1D& f, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("generate_dataset: n must be >= 1");
  CropDataset1D data;
  data.count = n;
  data.function_seed = f.seed();
  data.angle_seed = seed;
  data.gt_angles.resize(n);
  data.crops.resize(n * kCropLength);
  Rng rng(derive_seed(seed, 2));
  for (std::size_t i = 0; i < n; ++i) data.gt_angles[i] = Angle(kTwoPi * rng.uniform()).radians();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    const auto crop = render_crop(f, Angle(data.gt_angles[static_cast<std::size_t>(i)]));
    std::copy(crop.begin(), crop.end(), data.crops.begin() + i * static_cast<long>(kCropLength));
  }
  return data;
}

namespace {
constexpr std::string_view kDatasetMagic = "M1D1";
}

void write_dataset(std::ostream& out, const CropDataset1D& data) {
  binio::write_magic(out, kDatasetMagic);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(data.count));
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(kCropLength));
  for (double v : data.crops) binio::write<double>(out, v);
  for (double v : data.gt_angles) binio::write<double>(out, v);
  binio::write<std::uint64_t>(out, data.function_seed);
  binio::write<std::uint64_t>(out, data.angle_seed);
  if (!out) throw IoError("failed writing dataset");
}

CropDataset1D read_dataset(std::istream& in) {
  binio::expect_magic(in, kDatasetMagic);
  CropDataset1D data;
  data.count = binio::read<std::uint32_t>(in);
  const auto len = binio::read<std::uint32_t>(in);
  if (len != kCropLength) throw FormatError("dataset: crop length must be 65");
  if (data.count == 0) throw FormatError("dataset: empty");
  data.crops.resize(data.count * kCropLength);
  for (double& v : data.crops) v = binio::read<double>(in);
  data.gt_angles.resize(data.count);
  for (double& v : data.gt_angles) v = binio::read<double>(in);
  data.function_seed = binio::read<std::uint64_t>(in);
  data.angle_seed = binio::read<std::uint64_t>(in);
  return data;
}

void save_dataset(const std::filesystem::path& path, const CropDataset1D& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(out, data);
}

CropDataset1D load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace qp
