#include "qp/train1d.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "qp/rng.hpp"

namespace qp {

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::full: return "full";
    case AblationMode::explicit_field: return "explicit";
    case AblationMode::l2_loss: return "l2";
    case AblationMode::free_angles: return "free";
  }
  return "?";
}

AblationMode parse_mode(const std::string& name) {
  if (name == "full") return AblationMode::full;
  if (name == "explicit") return AblationMode::explicit_field;
  if (name == "l2") return AblationMode::l2_loss;
  if (name == "free") return AblationMode::free_angles;
  throw InvalidArgument("unknown mode '" + name + "' (expected full|explicit|l2|free)");
}

void TrainConfig::validate(std::size_t dataset_size) const {
  if (order < 1) throw InvalidArgument("replication order must be >= 1");
  if (batch_size == 0 || batch_size > dataset_size) {
    throw InvalidArgument("batch size must be in [1, dataset size]");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning rate must be positive");
  }
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw InvalidArgument("final learning-rate fraction must be in (0, 1]");
  }
}

double TrainConfig::learning_rate_at(std::size_t step) const {
  if (final_lr_fraction == 1.0 || steps <= 1) return learning_rate;
  const double t = static_cast<double>(step) / static_cast<double>(steps - 1);
  const double c = 0.5 * (1.0 + std::cos(kPi * t));
  return learning_rate * (final_lr_fraction + (1.0 - final_lr_fraction) * c);
}

std::vector<ad::Parameter*> Models1D::parameters() {
  std::vector<ad::Parameter*> ps = field->parameters();
  if (encoder) {
    const auto e = encoder->parameters();
    ps.insert(ps.end(), e.begin(), e.end());
  }
  if (angles) ps.push_back(angles.get());
  return ps;
}

std::vector<ad::NamedTensor> Models1D::state() {
  std::vector<ad::NamedTensor> out;
  out.push_back({"meta.mode." + to_string(mode), ad::Tensor::scalar(static_cast<double>(order))});
  const auto f = field->state();
  out.insert(out.end(), f.begin(), f.end());
  if (encoder) {
    const auto e = encoder->state();
    out.insert(out.end(), e.begin(), e.end());
  }
  if (angles) out.push_back({angles->name, angles->value});
  return out;
}

Models1D Models1D::from_state(const std::vector<ad::NamedTensor>& tensors) {
  Models1D m;
  bool found = false;
  for (const auto& t : tensors) {
    if (t.name.rfind("meta.mode.", 0) == 0) {
      m.mode = parse_mode(t.name.substr(10));
      m.order = static_cast<int>(t.value[0]);
      found = true;
    }
  }
  if (!found) throw FormatError("checkpoint has no meta.mode entry");
  if (m.mode == AblationMode::explicit_field) {
    m.field = std::make_unique<ExplicitField1D>();
  } else {
    m.field = std::make_unique<NeuralField1D>(0);
  }
  m.field->load_state(tensors);
  if (m.mode == AblationMode::free_angles) {
    for (const auto& t : tensors) {
      if (t.name == "angles.free") m.angles = std::make_unique<ad::Parameter>(t.name, t.value);
    }
    if (!m.angles) throw FormatError("checkpoint is missing angles.free");
  } else {
    m.encoder = std::make_unique<Encoder1D>(0);
    m.encoder->load_state(tensors);
  }
  return m;
}

Angle Models1D::latent(const CropDataset1D& data, std::size_t i) {
  if (angles) return Angle(angles->value[i]);
  return encoder->predict(data.crop(i));
}

Models1D init_models(const CropDataset1D& data, const TrainConfig& config) {
  Models1D m;
  m.mode = config.mode;
  m.order = config.effective_order();
  const OutputAffine affine = dataset_affine(data);
  if (config.mode == AblationMode::explicit_field) {
    m.field = std::make_unique<ExplicitField1D>(affine);
  } else {
    m.field = std::make_unique<NeuralField1D>(derive_seed(config.seed, 21), affine);
  }
  if (config.mode == AblationMode::free_angles) {
    Rng rng(derive_seed(config.seed, 23));
    ad::Tensor init({data.count});
    for (double& v : init.data()) v = kTwoPi * rng.uniform();
    m.angles = std::make_unique<ad::Parameter>("angles.free", std::move(init));
  } else {
    m.encoder = std::make_unique<Encoder1D>(derive_seed(config.seed, 22));
  }
  return m;
}

namespace {

std::vector<double> branch_offsets(int order) {
  std::vector<double> offs(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) offs[static_cast<std::size_t>(k)] = k * (kTwoPi / order);
  return offs;
}

double branch_distance(Field1D& field, Angle theta, std::span<const double> crop) {
  const auto rendered = render_predicted_crop(field, theta);
  double s = 0.0;
  for (std::size_t j = 0; j < kCropLength; ++j) {
    const double d = rendered[j] - crop[j];
    s += d * d;
  }
  return s;
}

}  // namespace

ModuloLoss modulo_loss(Field1D& field, Angle predicted, std::span<const double> crop, int order) {
  const EquivalenceRelation rel(order);
  if (crop.size() != kCropLength) throw ShapeError("modulo_loss: crop must have 65 samples");
  ModuloLoss best{branch_distance(field, predicted, crop), 0};
  const auto members = equivalence_class(predicted, rel);
  for (std::size_t k = 1; k < members.size(); ++k) {
    const double d = branch_distance(field, members[k], crop);
    if (d < best.loss) best = {d, k};
  }
  return best;
}

ad::Var modulo_loss_rows(ad::Tape& tape, Field1D& field, ad::Var predicted,
                         std::span<const double> crops, int order,
                         std::vector<std::size_t>* branches) {
  const EquivalenceRelation rel(order);
  const std::size_t B = predicted.value().size();
  const std::size_t N = static_cast<std::size_t>(order);
  if (crops.size() != B * kCropLength) throw ShapeError("modulo_loss_rows: crop count mismatch");

  const auto offsets = branch_offsets(order);
  const ad::Var angles = ad::reshape(ad::add_outer(predicted, offsets), {B * N});
  const ad::Var rendered = render_predicted_crops(tape, field, angles);

  ad::Tensor targets({B * N, kCropLength});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < N; ++k)
      std::copy_n(crops.data() + b * kCropLength, kCropLength,
                  targets.ptr() + (b * N + k) * kCropLength);

  const ad::Var errors = ad::squared_error_rows(rendered, tape.constant(std::move(targets)));
  return ad::min_rows(ad::reshape(errors, {B, N}), branches);
}

Angle predicted_angle(Field1D& field, Angle latent, std::span<const double> crop, int order) {
  const auto members = equivalence_class(latent, EquivalenceRelation(order));
  const ModuloLoss best = modulo_loss(field, latent, crop, order);
  return members[best.branch];
}

void RunReport::write_csv(std::ostream& out) const {
  out << "step,loss\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < loss_history.size(); ++i) out << i << ',' << loss_history[i] << '\n';
  out << "# final angular_error_rad=" << angular_error
      << " reconstruction_error=" << reconstruction_error
      << " offset_rad=" << alignment_offset.radians() << '\n';
}

Evaluation evaluate_run(Models1D& models, const CropDataset1D& data,
                        const FourierFunction1D& truth) {
  Evaluation ev;
  ev.predicted.resize(data.count);

  // Latents for all crops in one pass, then branch selection in one pass.
  std::vector<double> latents(data.count);
  if (models.angles) {
    for (std::size_t i = 0; i < data.count; ++i) latents[i] = models.angles->value[i];
  } else {
    ad::Tape tape;
    const ad::Var a = models.encoder->forward(tape, data.crops, data.count);
    for (std::size_t i = 0; i < data.count; ++i) latents[i] = a.value()[i];
  }
  {
    ad::Tape tape;
    std::vector<std::size_t> branches;
    const ad::Var pred = tape.constant(ad::Tensor(ad::Shape{data.count}, latents));
    modulo_loss_rows(tape, *models.field, pred, data.crops, models.order, &branches);
    const double period = kTwoPi / models.order;
    for (std::size_t i = 0; i < data.count; ++i) {
      ev.predicted[i] = Angle(latents[i] + static_cast<double>(branches[i]) * period).radians();
    }
  }

  const Alignment al = align_global_1d(ev.predicted, data.gt_angles);
  ev.angular_error = al.mean_error;
  ev.offset = al.offset;

  constexpr std::size_t kGrid = 1024;
  std::vector<double> grid(kGrid);
  for (std::size_t i = 0; i < kGrid; ++i) grid[i] = kTwoPi * static_cast<double>(i) / kGrid;
  const std::vector<double> fitted = models.field->eval(grid);
  double mse = 0.0, mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < kGrid; ++i) {
    const double target = truth(grid[i] + al.offset.radians());
    const double d = fitted[i] - target;
    mse += d * d;
    const double t0 = truth(grid[i]);
    mean += t0;
    sq += t0 * t0;
  }
  mse /= kGrid;
  mean /= kGrid;
  const double var = sq / kGrid - mean * mean;
  ev.reconstruction_error = mse / var;
  return ev;
}

TrainResult train(const CropDataset1D& data, const TrainConfig& config) {
  config.validate(data.count);
  const auto start = std::chrono::steady_clock::now();
  TrainResult result{init_models(data, config), {}};
  Models1D& m = result.models;
  const std::vector<ad::Parameter*> params = m.parameters();
  ad::AdamState adam(params);
  Rng shuffle(derive_seed(config.seed, 31));

  std::vector<std::size_t> order(data.count);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = data.count;  // forces a shuffle on the first step
  std::vector<std::size_t> batch(config.batch_size);
  std::vector<double> crops(config.batch_size * kCropLength);

  result.report.loss_history.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == data.count) {
        for (std::size_t i = data.count - 1; i > 0; --i) {
          std::swap(order[i], order[shuffle.below(i + 1)]);
        }
        cursor = 0;
      }
      batch[b] = order[cursor++];
      std::copy_n(data.crops.data() + batch[b] * kCropLength, kCropLength,
                  crops.data() + b * kCropLength);
    }

    ad::Tape tape;
    ad::Var predicted;
    if (m.angles) {
      predicted = ad::gather(tape.param(*m.angles), batch);
    } else {
      predicted = m.encoder->forward(tape, crops, config.batch_size);
    }
    const ad::Var loss =
        ad::mean(modulo_loss_rows(tape, *m.field, predicted, crops, m.order));
    for (ad::Parameter* p : params) p->zero_grad();
    tape.backward(loss);
    ad::adam_step(params, adam, config.learning_rate_at(step));
    result.report.loss_history.push_back(loss.item());
  }

  const Evaluation ev = evaluate_run(m, data, sample_function(data.function_seed));
  result.report.angular_error = ev.angular_error;
  result.report.reconstruction_error = ev.reconstruction_error;
  result.report.alignment_offset = ev.offset;
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace qp
