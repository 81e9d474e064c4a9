#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qp/model1d.hpp"
#include "qp/optim.hpp"
#include "qp/rotations.hpp"
#include "qp/scene1d.hpp"

namespace qp {

/// Full: encoder + neural field + modulo loss.
/// ExplicitField: neural field replaced by a 512-node grid.
/// L2Loss: replication order forced to 1.
/// FreeAngles: encoder replaced by one trainable angle per crop.
enum class AblationMode { full, explicit_field, l2_loss, free_angles };

std::string to_string(AblationMode mode);
AblationMode parse_mode(const std::string& name);  // full|explicit|l2|free

struct TrainConfig {
  AblationMode mode = AblationMode::full;
  int order = 2;
  double learning_rate = 1e-4;
  std::size_t batch_size = 256;
  std::size_t steps = 30000;
  /// Cosine decay from learning_rate down to learning_rate · final_lr_fraction
  /// over the run; 1 keeps the rate constant.
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate(std::size_t dataset_size) const;
  /// Order actually used by the loss (1 in L2Loss mode).
  int effective_order() const { return mode == AblationMode::l2_loss ? 1 : order; }
  double learning_rate_at(std::size_t step) const;
};

/// Everything learned by one run.
struct Models1D {
  AblationMode mode = AblationMode::full;
  int order = 1;
  std::unique_ptr<Field1D> field;
  std::unique_ptr<Encoder1D> encoder;     // absent in FreeAngles mode
  std::unique_ptr<ad::Parameter> angles;  // FreeAngles only, one per crop

  std::vector<ad::Parameter*> parameters();
  std::vector<ad::NamedTensor> state();
  static Models1D from_state(const std::vector<ad::NamedTensor>& tensors);

  /// Latent angle before replication for crop i (encoder output or free angle).
  Angle latent(const CropDataset1D& data, std::size_t i);
};

/// Builds untrained models for `config` on `data`.
Models1D init_models(const CropDataset1D& data, const TrainConfig& config);

struct ModuloLoss {
  double loss = 0.0;
  std::size_t branch = 0;
};

/// min over k of ||render(θ + 2kπ/N) - crop||², ties to the smallest k.
ModuloLoss modulo_loss(Field1D& field, Angle predicted, std::span<const double> crop, int order);

/// Batched tape version: predicted [B] (unwrapped), crops B×65.
/// Returns per-crop minimum losses [B]; `branches` receives k*.
ad::Var modulo_loss_rows(ad::Tape& tape, Field1D& field, ad::Var predicted,
                         std::span<const double> crops, int order,
                         std::vector<std::size_t>* branches = nullptr);

/// Member of the class of `latent` whose rendering best matches `crop`.
Angle predicted_angle(Field1D& field, Angle latent, std::span<const double> crop, int order);

struct RunReport {
  std::vector<double> loss_history;
  double angular_error = 0.0;          // radians, after global alignment
  double reconstruction_error = 0.0;   // MSE / var(f*), after alignment
  Angle alignment_offset;
  double wall_seconds = 0.0;

  /// "step,loss" rows followed by a "# final ..." summary comment.
  void write_csv(std::ostream& out) const;
};

struct Evaluation {
  double angular_error = 0.0;
  double reconstruction_error = 0.0;
  Angle offset;
  std::vector<double> predicted;
};

/// Aligns the argmin predictions to the hidden angles and compares
/// the field against f*(θ + offset) on a 1024-point grid.
Evaluation evaluate_run(Models1D& models, const CropDataset1D& data, const FourierFunction1D& truth);

struct TrainResult {
  Models1D models;
  RunReport report;
};

TrainResult train(const CropDataset1D& data, const TrainConfig& config);

}  // namespace qp
