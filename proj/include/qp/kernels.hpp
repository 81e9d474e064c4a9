#pragma once

#include <cstddef>
#include <span>

#include "qp/common.hpp"

// Dense compute kernels behind the autodiff ops. Every kernel has a plain
// loop `*_reference` version kept as the test oracle and a fast version
// (im2col + GEMM, OpenMP over independent outputs). Fast versions produce
// results independent of the worker count.
//
// Backward kernels accumulate (+=) into their gradient outputs.
namespace qp::kernels {

inline constexpr std::size_t kConvWidth = 5;

struct ConvDims {
  std::size_t batch;
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t length;
};

struct DenseDims {
  std::size_t batch;
  std::size_t in;
  std::size_t out;
};

void conv1d_forward_reference(std::span<const double> x, std::span<const double> w,
                              std::span<const double> b, const ConvDims& d,
                              std::span<double> y);
void conv1d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, const ConvDims& d, std::span<double> y);

void conv1d_backward_reference(std::span<const double> x, std::span<const double> w,
                               std::span<const double> dy, const ConvDims& d,
                               std::span<double> dx, std::span<double> dw,
                               std::span<double> db);
void conv1d_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, const ConvDims& d, std::span<double> dx,
                     std::span<double> dw, std::span<double> db);

void dense_forward_reference(std::span<const double> x, std::span<const double> w,
                             std::span<const double> b, const DenseDims& d,
                             std::span<double> y);
void dense_forward(std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, const DenseDims& d, std::span<double> y);

void dense_backward_reference(std::span<const double> x, std::span<const double> w,
                              std::span<const double> dy, const DenseDims& d,
                              std::span<double> dx, std::span<double> dw,
                              std::span<double> db);
void dense_backward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> dy, const DenseDims& d, std::span<double> dx,
                    std::span<double> dw, std::span<double> db);

}  // namespace qp::kernels
