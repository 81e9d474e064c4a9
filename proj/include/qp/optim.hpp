#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qp/autodiff.hpp"

namespace qp::ad {

/// First/second-moment accumulators for a fixed list of parameters.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  AdamState() = default;
  explicit AdamState(std::span<Parameter* const> params);
};

/// One bias-corrected Adam update of `params` from their `.grad` fields.
/// Gradients are left untouched; the caller zeroes them.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr);

/// Builds a scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates probed per parameter tensor (evenly strided); 0 probes all.
  std::size_t coords_per_param = 0;
};

/// Largest relative difference between backprop gradients and central
/// differences over the probed coordinates, with denominator
/// max(|analytic|, |numeric|, 1e-8).
double finite_difference_check(std::span<Parameter* const> params, const LossBuilder& loss,
                               const GradCheckOptions& options = {});

}  // namespace qp::ad
