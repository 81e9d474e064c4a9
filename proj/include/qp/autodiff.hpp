#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "qp/common.hpp"

// Minimal reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tape records every operation of one forward pass. `Var` is a lightweight
// handle (tape pointer + node id); ops are free functions taking and
// returning Vars. Parameters live outside the tape and receive accumulated
// gradients when the tape is differentiated.
namespace qp::ad {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Vectorized kernels peel loops according to the
/// data address; a fixed alignment makes their summation order depend on
/// shapes only, so results are reproducible from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::span<const double> data);
  Tensor(Shape shape, std::initializer_list<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::vector<double> to_vector() const { return {data_.begin(), data_.end()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Returns a copy with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(double v);
  bool all_finite() const;

 private:
  Shape shape_;
  Buffer data_;
};

/// A named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad() { grad.fill(0.0); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const;
  double item() const;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input.
  Var constant(Tensor value);
  /// Differentiable input whose gradient is read back with grad().
  Var leaf(Tensor value);
  /// Trainable parameter; backward() adds into `p.grad`.
  Var param(Parameter& p);

  /// Records an op output. `fn` is called during backward with the node's own
  /// gradient available through `grad_of(self)`; it must add into parents'
  /// buffers obtained from `grad_target(parent)`. Throws NonFiniteError
  /// if `value` contains NaN/Inf.
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn, const char* op);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  /// Gradient of the last backward() loss w.r.t. `v`; zeros when `v` is
  /// unreachable from the loss.
  Tensor grad(Var v) const;

  /// Gradient buffer of node `id` during backward. Valid inside BackwardFn.
  const Tensor& grad_of(std::uint32_t id) const;
  /// Parent buffer to accumulate into, allocated (zeros) on first use;
  /// nullptr when the parent does not require a gradient.
  Tensor* grad_target(Var parent);

  /// Reverse pass from a scalar loss. Each reachable node is visited once in
  /// reverse recording order. Parameter gradients are accumulated (+=).
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    std::vector<std::uint32_t> parents;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };

  void check(Var v) const;
  Var push(Node node);

  std::deque<Node> nodes_;
};

// ---- differentiable primitives -------------------------------------------

/// x [B, in] · Wᵀ + b with W [out, in], b [out] -> [B, out].
Var dense(Var x, Var w, Var b);
/// Same-padded stride-1 convolution, kernel size 5.
/// x [B, Cin, L], w [Cout, Cin, 5], b [Cout] -> [B, Cout, L].
Var conv1d(Var x, Var w, Var b);
/// Window 2, stride 2 along the last axis. Odd lengths drop the last element.
Var maxpool1d(Var x);
/// Group normalization of x [B, C, L] over (C/G channels × L) per group,
/// followed by per-channel affine gamma [C], beta [C].
Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps = 1e-5);
/// Appends `count` zeros along the last axis.
Var pad_right(Var x, std::size_t count);

Var silu(Var x);
Var relu(Var x);
Var sin(Var x);
Var cos(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// factor · x + offset
Var affine(Var x, double factor, double offset);

/// Concatenates tensors of shape [P, k_i] along the last axis.
Var concat_columns(std::span<const Var> parts);
Var reshape(Var x, Shape shape);

/// a [P] ⊕ offsets [J] -> [P, J] with out[p, j] = a[p] + offsets[j].
Var add_outer(Var a, std::span<const double> offsets);
/// out[i] = v[indices[i]].
Var gather(Var v, std::span<const std::size_t> indices);
/// Angle atan2(xy[:,1], xy[:,0]) for xy [B, 2]; throws NonFiniteError when a
/// row norm is below 1e-8.
Var atan2_rows(Var xy);
/// Linear interpolation on a periodic grid over [0, 2π): grid [G], theta [P] -> [P].
Var interp_periodic(Var grid, Var theta);

/// Mean of all elements -> [1].
Var mean(Var x);
/// Sum over the last axis of (a - b)², a and b [R, J] -> [R].
Var squared_error_rows(Var a, Var b);
/// x [R, N] -> [R], minimum per row. `argmin` receives the selected column
/// (smallest index on ties); gradient flows only through that column.
Var min_rows(Var x, std::vector<std::size_t>* argmin = nullptr);

}  // namespace qp::ad
