#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qp/autodiff.hpp"
#include "qp/checkpoint.hpp"
#include "qp/rotations.hpp"
#include "qp/rng.hpp"
#include "qp/scene1d.hpp"

namespace qp {

/// Affine map applied to the raw field output so a unit-scale network can
/// represent functions of arbitrary mean and amplitude. Not trained.
struct OutputAffine {
  double shift = 0.0;
  double scale = 1.0;
};

/// Mean and standard deviation of all crop samples.
OutputAffine dataset_affine(const CropDataset1D& data);

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization.
ad::Tensor uniform_init(ad::Shape shape, std::size_t fan_in, Rng& rng);

/// A differentiable periodic function of one angle.
class Field1D {
 public:
  virtual ~Field1D() = default;

  /// theta: any shape with P elements -> [P].
  virtual ad::Var forward(ad::Tape& tape, ad::Var theta) = 0;
  virtual std::vector<ad::Parameter*> parameters() = 0;
  virtual std::string kind() const = 0;

  std::vector<ad::NamedTensor> state();
  void load_state(const std::vector<ad::NamedTensor>& tensors);

  /// Plain value at one angle (no gradient bookkeeping kept).
  double eval(double theta);
  std::vector<double> eval(std::span<const double> thetas);

  const OutputAffine& affine() const { return affine_; }
  void set_affine(OutputAffine a) { affine_ = a; }

 protected:
  OutputAffine affine_;
};

/// f(θ) = shift + scale · MLP(γ(θ)), γ(θ) = {sin(2^l θ), cos(2^l θ)}_{l<bands};
/// four hidden ReLU layers of 64 units, scalar output.
class NeuralField1D final : public Field1D {
 public:
  static constexpr std::size_t kDefaultBands = 6;
  static constexpr std::size_t kHidden = 64;
  static constexpr std::size_t kHiddenLayers = 4;

  NeuralField1D(std::uint64_t seed, OutputAffine affine = {}, std::size_t bands = kDefaultBands);

  ad::Var forward(ad::Tape& tape, ad::Var theta) override;
  std::vector<ad::Parameter*> parameters() override;
  std::string kind() const override { return "neural"; }
  std::size_t bands() const { return bands_; }

 private:
  std::size_t bands_;
  std::vector<ad::Parameter> weights_;
  std::vector<ad::Parameter> biases_;
};

/// 512 values on [0, 2π), linear interpolation with wraparound.
class ExplicitField1D final : public Field1D {
 public:
  static constexpr std::size_t kNodes = 512;

  explicit ExplicitField1D(OutputAffine affine = {});

  ad::Var forward(ad::Tape& tape, ad::Var theta) override;
  std::vector<ad::Parameter*> parameters() override { return {&grid_}; }
  std::string kind() const override { return "explicit"; }
  ad::Parameter& grid() { return grid_; }

 private:
  ad::Parameter grid_;
};

/// Subtract the crop mean, divide by (std + 1e-6).
std::array<double, kCropLength> standardize_crop(std::span<const double> crop);

/// Crop -> angle encoder: five stages of conv1d(5) → SiLU → maxpool(2) →
/// GroupNorm(4) with 16, 32, 32, 64, 64 channels, then FC(64) → SiLU → FC(2)
/// and atan2. Crops are standardized and zero-padded from 65 to 66 samples.
class Encoder1D {
 public:
  static constexpr std::array<std::size_t, 5> kChannels = {16, 32, 32, 64, 64};
  static constexpr std::size_t kGroups = 4;
  static constexpr std::size_t kHidden = 64;

  explicit Encoder1D(std::uint64_t seed);

  /// crops: B rows of 65 raw samples. Returns the head output [B, 2].
  ad::Var head(ad::Tape& tape, std::span<const double> crops, std::size_t batch);
  /// Unwrapped predicted angles [B] = atan2(v, u).
  ad::Var forward(ad::Tape& tape, std::span<const double> crops, std::size_t batch);
  /// Wrapped prediction for one crop.
  Angle predict(std::span<const double> crop);

  std::vector<ad::Parameter*> parameters();
  std::vector<ad::NamedTensor> state();
  void load_state(const std::vector<ad::NamedTensor>& tensors);

 private:
  struct Stage {
    ad::Parameter weight;
    ad::Parameter bias;
    ad::Parameter gamma;
    ad::Parameter beta;
  };
  std::vector<Stage> stages_;
  ad::Parameter fc_weight_, fc_bias_, head_weight_, head_bias_;
};

/// Field values at θ_p + s_j for every θ_p: theta [P] -> [P, 65].
ad::Var render_predicted_crops(ad::Tape& tape, Field1D& field, ad::Var theta);
std::array<double, kCropLength> render_predicted_crop(Field1D& field, Angle theta);

}  // namespace qp
