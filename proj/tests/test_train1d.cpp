#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "qp/rng.hpp"
#include "qp/train1d.hpp"

namespace qp {
namespace {

double plain_l2(Field1D& field, Angle theta, std::span<const double> crop) {
  const auto r = render_predicted_crop(field, theta);
  double s = 0;
  for (std::size_t j = 0; j < kCropLength; ++j) s += (r[j] - crop[j]) * (r[j] - crop[j]);
  return s;
}

// Field and angles that reproduce the dataset: grid nodes sampled from f*.
Models1D memorized(const CropDataset1D& data, const FourierFunction1D& f, int order) {
  Models1D m;
  m.mode = AblationMode::free_angles;
  m.order = order;
  auto field = std::make_unique<ExplicitField1D>();
  for (std::size_t i = 0; i < ExplicitField1D::kNodes; ++i) {
    field->grid().value[i] = f(kTwoPi * static_cast<double>(i) / ExplicitField1D::kNodes);
  }
  m.field = std::move(field);
  m.angles = std::make_unique<ad::Parameter>(
      "angles.free", ad::Tensor(ad::Shape{data.count}, data.gt_angles));
  return m;
}

TEST(ModuloLoss, OrderOneIsPlainL2) {
  NeuralField1D field(1, OutputAffine{0, 50});
  const auto d = generate_dataset(sample_function(2), 4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    const ModuloLoss l = modulo_loss(field, Angle(0.4 * i), d.crop(i), 1);
    EXPECT_EQ(l.loss, plain_l2(field, Angle(0.4 * i), d.crop(i)));
    EXPECT_EQ(l.branch, 0u);
  }
}

TEST(ModuloLoss, BruteForceBranches) {
  NeuralField1D field(4, OutputAffine{0, 50});
  const auto d = generate_dataset(sample_function(5), 8, 6);
  for (std::size_t i = 0; i < d.count; ++i) {
    const Angle z(0.77 * static_cast<double>(i));
    double best = plain_l2(field, z, d.crop(i));
    std::size_t arg = 0;
    for (std::size_t k = 1; k < 4; ++k) {
      const double v = plain_l2(field, Angle(z.radians() + k * kPi / 2), d.crop(i));
      if (v < best) best = v, arg = k;
    }
    const ModuloLoss l = modulo_loss(field, z, d.crop(i), 4);
    EXPECT_EQ(l.branch, arg);
    EXPECT_NEAR(l.loss, best, 1e-9 * best);
    EXPECT_LE(l.loss, plain_l2(field, z, d.crop(i)));
  }
}

TEST(ModuloLoss, TiesGoToFirstBranch) {
  // A π-periodic field renders identically on both branches of R_2.
  ExplicitField1D field;
  for (std::size_t i = 0; i < ExplicitField1D::kNodes; ++i) {
    field.grid().value[i] = std::cos(2.0 * kTwoPi * static_cast<double>(i) / ExplicitField1D::kNodes);
  }
  std::vector<double> crop(kCropLength, 0.0);
  EXPECT_EQ(modulo_loss(field, Angle(0.0), crop, 2).branch, 0u);
}

TEST(ModuloLoss, BatchedMatchesScalar) {
  NeuralField1D field(7, OutputAffine{0, 50});
  const auto d = generate_dataset(sample_function(8), 6, 9);
  std::vector<double> pred{0.1, 1.0, 2.0, 3.0, 4.0, 7.5};
  ad::Tape tape;
  std::vector<std::size_t> branches;
  const ad::Var rows = modulo_loss_rows(tape, field, tape.constant(ad::Tensor(ad::Shape{6}, pred)),
                                        d.crops, 3, &branches);
  for (std::size_t i = 0; i < 6; ++i) {
    const ModuloLoss l = modulo_loss(field, Angle(pred[i]), d.crop(i), 3);
    EXPECT_NEAR(rows.value()[i], l.loss, 1e-9 * l.loss);
    EXPECT_EQ(branches[i], l.branch);
  }
}

TEST(ModuloLoss, RejectsBadInput) {
  NeuralField1D field(1);
  std::vector<double> crop(kCropLength);
  EXPECT_THROW(modulo_loss(field, Angle(0), crop, 0), InvalidArgument);
  std::vector<double> short_crop(10);
  EXPECT_THROW(modulo_loss(field, Angle(0), short_crop, 2), ShapeError);
}

TEST(PredictedAngle, OrderOneUnchanged) {
  NeuralField1D field(10);
  std::vector<double> crop(kCropLength, 1.0);
  EXPECT_EQ(predicted_angle(field, Angle(1.234), crop, 1), Angle(1.234));
}

TEST(PredictedAngle, PicksBestClassMember) {
  NeuralField1D field(11, OutputAffine{0, 50});
  const auto d = generate_dataset(sample_function(12), 5, 13);
  for (std::size_t i = 0; i < d.count; ++i) {
    const Angle latent(1.1 * static_cast<double>(i));
    const auto members = equivalence_class(latent, EquivalenceRelation(3));
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k) {
      if (plain_l2(field, members[k], d.crop(i)) < plain_l2(field, members[best], d.crop(i))) best = k;
    }
    EXPECT_EQ(predicted_angle(field, latent, d.crop(i), 3), members[best]);
  }
}

TEST(Config, Validation) {
  TrainConfig c;
  c.batch_size = 8;
  EXPECT_NO_THROW(c.validate(16));
  EXPECT_THROW(c.validate(4), InvalidArgument);
  c.order = 0;
  EXPECT_THROW(c.validate(16), InvalidArgument);
  c.order = 2;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(16), InvalidArgument);
  c.learning_rate = 1e-3;
  c.final_lr_fraction = 0;
  EXPECT_THROW(c.validate(16), InvalidArgument);
  EXPECT_THROW(parse_mode("fancy"), InvalidArgument);
  for (const char* m : {"full", "explicit", "l2", "free"}) EXPECT_EQ(to_string(parse_mode(m)), m);
}

TEST(Config, CosineDecay) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.steps = 101;
  EXPECT_EQ(c.learning_rate_at(0), 1e-3);
  EXPECT_EQ(c.learning_rate_at(100), 1e-3);
  c.final_lr_fraction = 0.1;
  EXPECT_DOUBLE_EQ(c.learning_rate_at(0), 1e-3);
  EXPECT_NEAR(c.learning_rate_at(50), 0.55e-3, 1e-15);
  EXPECT_NEAR(c.learning_rate_at(100), 1e-4, 1e-15);
  EXPECT_EQ(c.effective_order(), 2);
  c.mode = AblationMode::l2_loss;
  EXPECT_EQ(c.effective_order(), 1);
}

TEST(Evaluate, MemorizedModelsScoreZero) {
  const auto f = sample_function(14);
  const auto d = generate_dataset(f, 64, 15);
  Models1D m = memorized(d, f, 2);
  const Evaluation ev = evaluate_run(m, d, f);
  EXPECT_LT(ev.angular_error, 1e-3);
  EXPECT_LT(ev.reconstruction_error, 1e-3);
}

TEST(Evaluate, UntrainedReconstructionNearOne) {
  const auto f = sample_function(16);
  const auto d = generate_dataset(f, 32, 17);
  TrainConfig c;
  c.batch_size = 8;
  Models1D m = init_models(d, c);
  const Evaluation ev = evaluate_run(m, d, f);
  EXPECT_GE(ev.reconstruction_error, 0.5);
  EXPECT_LE(ev.reconstruction_error, 2.0);
}

TEST(Evaluate, GaugeInvariant) {
  const auto f = sample_function(18);
  const auto d = generate_dataset(f, 64, 19);
  Models1D m = memorized(d, f, 2);
  // Perturb the fit so the error is not trivially zero.
  auto* grid = dynamic_cast<ExplicitField1D*>(m.field.get());
  for (std::size_t i = 0; i < ExplicitField1D::kNodes; i += 7) grid->grid().value[i] += 3.0;
  const Evaluation a = evaluate_run(m, d, f);

  const double delta = 1.3;
  CropDataset1D rotated = d;
  for (double& g : rotated.gt_angles) g = wrap_angle(g + delta);
  const Evaluation b = evaluate_run(m, rotated, f.shifted(-delta));
  EXPECT_NEAR(a.reconstruction_error, b.reconstruction_error, 1e-9);
  // The offset search stops at a 1e-6 rad bracket.
  EXPECT_NEAR(a.angular_error, b.angular_error, 1e-6);
}

TEST(Train, ZeroStepsReturnsInitialModels) {
  const auto d = generate_dataset(sample_function(20), 16, 21);
  TrainConfig c;
  c.batch_size = 8;
  c.steps = 0;
  TrainResult r = train(d, c);
  EXPECT_TRUE(r.report.loss_history.empty());
  Models1D init = init_models(d, c);
  EXPECT_EQ(r.models.field->eval(1.0), init.field->eval(1.0));
}

TEST(Train, EveryModeRunsAndIsDeterministic) {
  const auto d = generate_dataset(sample_function(22), 16, 23);
  for (const char* mode : {"full", "explicit", "l2", "free"}) {
    TrainConfig c;
    c.mode = parse_mode(mode);
    c.batch_size = 8;
    c.steps = 3;
    c.learning_rate = 1e-3;
    c.seed = 5;
    set_jobs(1);
    const TrainResult a = train(d, c);
    set_jobs(4);
    const TrainResult b = train(d, c);
    set_jobs(1);
    ASSERT_EQ(a.report.loss_history.size(), 3u) << mode;
    EXPECT_EQ(a.report.loss_history, b.report.loss_history) << mode;
    EXPECT_EQ(a.report.angular_error, b.report.angular_error) << mode;
    for (double v : a.report.loss_history) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Train, LossDecreasesOnShortRun) {
  const auto d = generate_dataset(sample_function(24), 32, 25);
  TrainConfig c;
  c.batch_size = 32;
  c.steps = 60;
  c.learning_rate = 1e-3;
  const TrainResult r = train(d, c);
  EXPECT_LT(r.report.loss_history.back(), 0.5 * r.report.loss_history.front());
}

TEST(Checkpoint, ModelsRoundTrip) {
  const auto d = generate_dataset(sample_function(26), 16, 27);
  for (const char* mode : {"full", "explicit", "free"}) {
    TrainConfig c;
    c.mode = parse_mode(mode);
    c.batch_size = 8;
    c.steps = 2;
    c.learning_rate = 1e-3;
    TrainResult r = train(d, c);
    Models1D back = Models1D::from_state(r.models.state());
    EXPECT_EQ(back.mode, r.models.mode);
    EXPECT_EQ(back.order, r.models.order);
    EXPECT_EQ(back.field->eval(2.0), r.models.field->eval(2.0)) << mode;
    EXPECT_EQ(back.latent(d, 3), r.models.latent(d, 3)) << mode;
  }
}

TEST(Report, CsvLayout) {
  RunReport r;
  r.loss_history = {3.0, 2.5};
  std::ostringstream out;
  r.write_csv(out);
  EXPECT_EQ(out.str().substr(0, 20), "step,loss\n0,3\n1,2.5\n");
}

}  // namespace
}  // namespace qp
