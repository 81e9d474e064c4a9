#include "qp/optim.hpp"

#include <algorithm>
#include <cmath>

namespace qp::ad {

AdamState::AdamState(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    first_moment.emplace_back(p->value.shape(), 0.0);
    second_moment.emplace_back(p->value.shape(), 0.0);
  }
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr) {
  if (params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: parameter count does not match optimizer state");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = *params[k];
    if (p.grad.shape() != p.value.shape() || state.first_moment[k].shape() != p.value.shape()) {
      throw ShapeError("adam_step: shape mismatch for parameter '" + p.name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    auto w = p.value.data();
    auto g = p.grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double finite_difference_check(std::span<Parameter* const> params, const LossBuilder& loss,
                               const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw InvalidArgument("finite_difference_check: step must be > 0");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto evaluate = [&] {
    Tape tape;
    return loss(tape).item();
  };

  double worst = 0.0;
  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    const std::size_t probes =
        options.coords_per_param == 0 ? n : std::min(n, options.coords_per_param);
    for (std::size_t q = 0; q < probes; ++q) {
      const std::size_t i = probes == n ? q : (q * n) / probes + (n / probes) / 2;
      const double saved = p->value[i];
      p->value[i] = saved + options.step;
      const double up = evaluate();
      p->value[i] = saved - options.step;
      const double down = evaluate();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace qp::ad
