#include "qp/model1d.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

namespace qp {

OutputAffine dataset_affine(const CropDataset1D& data) {
  double mean = 0.0;
  for (double v : data.crops) mean += v;
  mean /= static_cast<double>(data.crops.size());
  double var = 0.0;
  for (double v : data.crops) var += (v - mean) * (v - mean);
  var /= static_cast<double>(data.crops.size());
  return {mean, std::sqrt(var) > 0.0 ? std::sqrt(var) : 1.0};
}

ad::Tensor uniform_init(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  ad::Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

namespace {

const ad::Tensor& find_tensor(const std::vector<ad::NamedTensor>& tensors,
                              const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw FormatError("checkpoint is missing tensor '" + name + "'");
}

void assign(ad::Parameter& p, const ad::Tensor& t) {
  if (t.shape() != p.value.shape()) {
    throw FormatError("checkpoint tensor '" + p.name + "' has shape " + ad::shape_string(t.shape()) +
                      ", expected " + ad::shape_string(p.value.shape()));
  }
  p.value = t;
  p.grad = ad::Tensor(t.shape(), 0.0);
}

}  // namespace

std::vector<ad::NamedTensor> Field1D::state() {
  std::vector<ad::NamedTensor> out;
  out.push_back({"field." + kind() + ".affine", ad::Tensor(ad::Shape{2}, {affine_.shift, affine_.scale})});
  for (ad::Parameter* p : parameters()) out.push_back({p->name, p->value});
  return out;
}

void Field1D::load_state(const std::vector<ad::NamedTensor>& tensors) {
  const ad::Tensor& a = find_tensor(tensors, "field." + kind() + ".affine");
  if (a.size() != 2) throw FormatError("field affine must hold 2 values");
  affine_ = {a[0], a[1]};
  for (ad::Parameter* p : parameters()) assign(*p, find_tensor(tensors, p->name));
}

double Field1D::eval(double theta) {
  const double t[1] = {theta};
  return eval(std::span<const double>(t, 1))[0];
}

std::vector<double> Field1D::eval(std::span<const double> thetas) {
  ad::Tape tape;
  const ad::Var th = tape.constant(ad::Tensor(ad::Shape{thetas.size()}, thetas));
  return forward(tape, th).value().to_vector();
}

NeuralField1D::NeuralField1D(std::uint64_t seed, OutputAffine affine, std::size_t bands)
    : bands_(bands) {
  if (bands == 0) throw InvalidArgument("NeuralField1D: need at least one encoding band");
  affine_ = affine;
  Rng rng(derive_seed(seed, 11));
  std::size_t fan_in = 2 * bands;
  for (std::size_t layer = 0; layer <= kHiddenLayers; ++layer) {
    const std::size_t out = layer == kHiddenLayers ? 1 : kHidden;
    const std::string tag = "field.neural.layer" + std::to_string(layer);
    weights_.emplace_back(tag + ".weight", uniform_init({out, fan_in}, fan_in, rng));
    biases_.emplace_back(tag + ".bias", uniform_init({out}, fan_in, rng));
    fan_in = out;
  }
}

std::vector<ad::Parameter*> NeuralField1D::parameters() {
  std::vector<ad::Parameter*> ps;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    ps.push_back(&weights_[i]);
    ps.push_back(&biases_[i]);
  }
  return ps;
}

namespace {

// y[r] = b + x[r] · Wᵀ, accumulated over inputs in ascending order with fused
// multiply-adds. Each row depends on its own inputs only, so a point gets the
// same value whether it is evaluated alone or inside a large batch.
template <std::size_t Out, std::size_t Rows>
void dense_block(const double* x, std::size_t in, const double* wt, const double* b, double* y,
                 bool relu) {
  double acc[Rows][Out];
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t o = 0; o < Out; ++o) acc[r][o] = b[o];
  for (std::size_t i = 0; i < in; ++i) {
    const double* w = wt + i * Out;
    for (std::size_t r = 0; r < Rows; ++r) {
      const double xi = x[r * in + i];
#pragma omp simd
      for (std::size_t o = 0; o < Out; ++o) acc[r][o] = std::fma(xi, w[o], acc[r][o]);
    }
  }
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t o = 0; o < Out; ++o) y[r * Out + o] = relu ? std::max(acc[r][o], 0.0) : acc[r][o];
}

template <std::size_t Out>
void dense_rows(const double* x, std::size_t rows, std::size_t in, const double* wt,
                const double* b, double* y, bool relu) {
  std::size_t r = 0;
  for (; r + 2 <= rows; r += 2) dense_block<Out, 2>(x + r * in, in, wt, b, y + r * Out, relu);
  for (; r < rows; ++r) dense_block<Out, 1>(x + r * in, in, wt, b, y + r * Out, relu);
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

}  // namespace

// One tape node for the whole network: the per-op graph would allocate and
// traverse a dozen [P, 64] tensors per call.
ad::Var NeuralField1D::forward(ad::Tape& tape, ad::Var theta) {
  constexpr std::size_t H = kHidden;
  static_assert(kHiddenLayers >= 1);
  const std::size_t P = theta.value().size();
  const std::size_t F = 2 * bands_;

  auto features = std::make_shared<std::vector<double>>(P * F);
  auto acts = std::make_shared<std::vector<ad::Tensor>>();
  for (std::size_t l = 0; l < kHiddenLayers; ++l) acts->emplace_back(ad::Shape{P, H});

  std::vector<std::vector<double>> wt(weights_.size());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const ad::Tensor& w = weights_[l].value;
    const std::size_t out = w.dim(0), in = w.dim(1);
    wt[l].resize(in * out);
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < in; ++i) wt[l][i * out + o] = w[o * in + i];
  }

  ad::Tensor y(ad::Shape{P});
  const double* th = theta.value().ptr();
  constexpr std::size_t kChunk = 32;
  const long chunks = static_cast<long>((P + kChunk - 1) / kChunk);
#pragma omp parallel for schedule(static) if (P > 4096)
  for (long c = 0; c < chunks; ++c) {
    const std::size_t r0 = static_cast<std::size_t>(c) * kChunk;
    const std::size_t rows = std::min(kChunk, P - r0);
    double* feat = features->data() + r0 * F;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t l = 0; l < bands_; ++l) {
        const double a = std::ldexp(th[r0 + r], static_cast<int>(l));
        feat[r * F + 2 * l] = std::sin(a);
        feat[r * F + 2 * l + 1] = std::cos(a);
      }
    }
    const double* in = feat;
    std::size_t width = F;
    for (std::size_t l = 0; l < kHiddenLayers; ++l) {
      double* out = (*acts)[l].ptr() + r0 * H;
      dense_rows<H>(in, rows, width, wt[l].data(), biases_[l].value.ptr(), out, true);
      in = out;
      width = H;
    }
    double raw[kChunk];
    dense_rows<1>(in, rows, H, wt[kHiddenLayers].data(), biases_[kHiddenLayers].value.ptr(), raw, false);
    for (std::size_t r = 0; r < rows; ++r) y[r0 + r] = std::fma(affine_.scale, raw[r], affine_.shift);
  }

  std::vector<ad::Var> parents{theta};
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    parents.push_back(tape.param(weights_[l]));
    parents.push_back(tape.param(biases_[l]));
  }
  const std::size_t bands = bands_;
  const double scale = affine_.scale;
  return tape.record(
      std::move(y), parents,
      [parents, features, acts, P, F, bands, scale](ad::Tape& t, std::uint32_t self) {
        const std::size_t layers = (parents.size() - 1) / 2;
        const ad::Tensor& g = t.grad_of(self);
        // Gradient w.r.t. the current layer's output, [P, width].
        RowMat d(static_cast<long>(P), 1);
        for (std::size_t p = 0; p < P; ++p) d(static_cast<long>(p), 0) = scale * g[p];
        for (std::size_t l = layers; l-- > 0;) {
          const ad::Var wv = parents[1 + 2 * l], bv = parents[2 + 2 * l];
          const ad::Tensor& w = t.value(wv);
          const long out = static_cast<long>(w.dim(0)), in = static_cast<long>(w.dim(1));
          const double* input = l == 0 ? features->data() : (*acts)[l - 1].ptr();
          const ConstMap x(input, static_cast<long>(P), in);
          if (ad::Tensor* gw = t.grad_target(wv)) MutMap(gw->ptr(), out, in).noalias() += d.transpose() * x;
          if (ad::Tensor* gb = t.grad_target(bv)) {
            std::vector<double> sum(static_cast<std::size_t>(out), 0.0);
            for (long p = 0; p < static_cast<long>(P); ++p)
              for (long o = 0; o < out; ++o) sum[static_cast<std::size_t>(o)] += d(p, o);
            for (long o = 0; o < out; ++o) (*gb)[static_cast<std::size_t>(o)] += sum[static_cast<std::size_t>(o)];
          }
          RowMat dx = d * ConstMap(w.ptr(), out, in);
          if (l > 0) {
            const double* a = (*acts)[l - 1].ptr();
            double* dp = dx.data();
            for (std::size_t i = 0; i < P * static_cast<std::size_t>(in); ++i)
              if (!(a[i] > 0.0)) dp[i] = 0.0;
          }
          d = std::move(dx);
        }
        ad::Tensor* gt = t.grad_target(parents[0]);
        if (gt == nullptr) return;
        const double* feat = features->data();
        for (std::size_t p = 0; p < P; ++p) {
          double s = 0.0;
          for (std::size_t l = 0; l < bands; ++l) {
            const double f = std::ldexp(1.0, static_cast<int>(l));
            s += f * (feat[p * F + 2 * l + 1] * d(static_cast<long>(p), static_cast<long>(2 * l)) -
                      feat[p * F + 2 * l] * d(static_cast<long>(p), static_cast<long>(2 * l + 1)));
          }
          (*gt)[p] += s;
        }
      },
      "neural_field");
}

ExplicitField1D::ExplicitField1D(OutputAffine affine)
    : grid_("field.explicit.grid", ad::Tensor({kNodes}, 0.0)) {
  affine_ = affine;
}

ad::Var ExplicitField1D::forward(ad::Tape& tape, ad::Var theta) {
  const std::size_t P = theta.value().size();
  const ad::Var flat = ad::reshape(theta, {P});
  return ad::affine(ad::interp_periodic(tape.param(grid_), flat), affine_.scale, affine_.shift);
}

std::array<double, kCropLength> standardize_crop(std::span<const double> crop) {
  if (crop.size() != kCropLength) throw ShapeError("crops must have exactly 65 samples");
  double mean = 0.0;
  for (double v : crop) mean += v;
  mean /= static_cast<double>(kCropLength);
  double var = 0.0;
  for (double v : crop) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(kCropLength));
  std::array<double, kCropLength> out{};
  for (std::size_t j = 0; j < kCropLength; ++j) out[j] = (crop[j] - mean) / (sd + 1e-6);
  return out;
}

Encoder1D::Encoder1D(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 13));
  std::size_t in = 1;
  for (std::size_t s = 0; s < kChannels.size(); ++s) {
    const std::size_t out = kChannels[s];
    const std::size_t fan_in = in * 5;
    const std::string tag = "encoder.stage" + std::to_string(s);
    stages_.push_back(Stage{
        ad::Parameter(tag + ".conv.weight", uniform_init({out, in, 5}, fan_in, rng)),
        ad::Parameter(tag + ".conv.bias", uniform_init({out}, fan_in, rng)),
        ad::Parameter(tag + ".norm.gamma", ad::Tensor({out}, 1.0)),
        ad::Parameter(tag + ".norm.beta", ad::Tensor({out}, 0.0)),
    });
    in = out;
  }
  // 66 samples -> 33 -> 16 -> 8 -> 4 -> 2 after five poolings.
  const std::size_t flat = kChannels.back() * 2;
  fc_weight_ = ad::Parameter("encoder.fc.weight", uniform_init({kHidden, flat}, flat, rng));
  fc_bias_ = ad::Parameter("encoder.fc.bias", uniform_init({kHidden}, flat, rng));
  head_weight_ = ad::Parameter("encoder.head.weight", uniform_init({2, kHidden}, kHidden, rng));
  head_bias_ = ad::Parameter("encoder.head.bias", uniform_init({2}, kHidden, rng));
}

std::vector<ad::Parameter*> Encoder1D::parameters() {
  std::vector<ad::Parameter*> ps;
  for (Stage& s : stages_) {
    ps.push_back(&s.weight);
    ps.push_back(&s.bias);
    ps.push_back(&s.gamma);
    ps.push_back(&s.beta);
  }
  ps.push_back(&fc_weight_);
  ps.push_back(&fc_bias_);
  ps.push_back(&head_weight_);
  ps.push_back(&head_bias_);
  return ps;
}

std::vector<ad::NamedTensor> Encoder1D::state() {
  std::vector<ad::NamedTensor> out;
  for (ad::Parameter* p : parameters()) out.push_back({p->name, p->value});
  return out;
}

void Encoder1D::load_state(const std::vector<ad::NamedTensor>& tensors) {
  for (ad::Parameter* p : parameters()) assign(*p, find_tensor(tensors, p->name));
}

ad::Var Encoder1D::head(ad::Tape& tape, std::span<const double> crops, std::size_t batch) {
  if (batch == 0 || crops.size() != batch * kCropLength) {
    throw ShapeError("encoder expects rows of exactly 65 samples");
  }
  ad::Tensor input({batch, 1, kCropLength});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto z = standardize_crop(crops.subspan(b * kCropLength, kCropLength));
    std::copy(z.begin(), z.end(), input.ptr() + b * kCropLength);
  }
  ad::Var h = ad::pad_right(tape.constant(std::move(input)), 1);
  for (Stage& s : stages_) {
    h = ad::conv1d(h, tape.param(s.weight), tape.param(s.bias));
    h = ad::silu(h);
    h = ad::maxpool1d(h);
    h = ad::group_norm(h, tape.param(s.gamma), tape.param(s.beta), kGroups);
  }
  const ad::Shape& shape = h.shape();
  h = ad::reshape(h, {shape[0], shape[1] * shape[2]});
  h = ad::silu(ad::dense(h, tape.param(fc_weight_), tape.param(fc_bias_)));
  return ad::dense(h, tape.param(head_weight_), tape.param(head_bias_));
}

ad::Var Encoder1D::forward(ad::Tape& tape, std::span<const double> crops, std::size_t batch) {
  return ad::atan2_rows(head(tape, crops, batch));
}

Angle Encoder1D::predict(std::span<const double> crop) {
  ad::Tape tape;
  return Angle(forward(tape, crop, 1).value()[0]);
}

ad::Var render_predicted_crops(ad::Tape& tape, Field1D& field, ad::Var theta) {
  const std::size_t P = theta.value().size();
  const ad::Var points = ad::add_outer(ad::reshape(theta, {P}), crop_offsets());
  const ad::Var values = field.forward(tape, points);
  return ad::reshape(values, {P, kCropLength});
}

std::array<double, kCropLength> render_predicted_crop(Field1D& field, Angle theta) {
  ad::Tape tape;
  const ad::Var th = tape.constant(ad::Tensor(ad::Shape{1}, {theta.radians()}));
  const ad::Tensor& v = render_predicted_crops(tape, field, th).value();
  std::array<double, kCropLength> out{};
  std::copy(v.data().begin(), v.data().end(), out.begin());
  return out;
}

}  // namespace qp
