#include "qp/kernels.hpp"

#include <Eigen/Core>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qp {

void set_jobs(int jobs) {
#ifdef _OPENMP
  omp_set_num_threads(jobs < 1 ? 1 : jobs);
#else
  (void)jobs;
#endif
}

int jobs() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace qp

namespace qp::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

constexpr long kHalf = static_cast<long>(kConvWidth / 2);

// col[(c*5 + k), b*L + t] = x[b, c, t + k - 2], zero outside [0, L).
RowMat im2col(std::span<const double> x, const ConvDims& d) {
  const long B = static_cast<long>(d.batch), C = static_cast<long>(d.in_channels),
             L = static_cast<long>(d.length);
  RowMat col(C * static_cast<long>(kConvWidth), B * L);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < B; ++b) {
    for (long c = 0; c < C; ++c) {
      const double* xs = x.data() + (b * C + c) * L;
      for (long k = 0; k < static_cast<long>(kConvWidth); ++k) {
        double* row = col.data() + (c * static_cast<long>(kConvWidth) + k) * B * L + b * L;
        for (long t = 0; t < L; ++t) {
          const long s = t + k - kHalf;
          row[t] = (s >= 0 && s < L) ? xs[s] : 0.0;
        }
      }
    }
  }
  return col;
}

}  // namespace

void conv1d_forward_reference(std::span<const double> x, std::span<const double> w,
                              std::span<const double> b, const ConvDims& d,
                              std::span<double> y) {
  const std::size_t C = d.in_channels, O = d.out_channels, L = d.length;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t t = 0; t < L; ++t) {
        double acc = b[o];
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t k = 0; k < kConvWidth; ++k) {
            const long s = static_cast<long>(t + k) - kHalf;
            if (s < 0 || s >= static_cast<long>(L)) continue;
            acc += w[(o * C + c) * kConvWidth + k] * x[(n * C + c) * L + static_cast<std::size_t>(s)];
          }
        }
        y[(n * O + o) * L + t] = acc;
      }
    }
  }
}

void conv1d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, const ConvDims& d, std::span<double> y) {
  const long B = static_cast<long>(d.batch), O = static_cast<long>(d.out_channels),
             L = static_cast<long>(d.length);
  const long K = static_cast<long>(d.in_channels * kConvWidth);
  const RowMat col = im2col(x, d);
  const ConstMap wm(w.data(), O, K);
  RowMat out = wm * col;  // [O, B*L]
#pragma omp parallel for schedule(static)
  for (long n = 0; n < B; ++n) {
    for (long o = 0; o < O; ++o) {
      const double* src = out.data() + o * B * L + n * L;
      double* dst = y.data() + (n * O + o) * L;
      for (long t = 0; t < L; ++t) dst[t] = src[t] + b[static_cast<std::size_t>(o)];
    }
  }
}

void conv1d_backward_reference(std::span<const double> x, std::span<const double> w,
                               std::span<const double> dy, const ConvDims& d,
                               std::span<double> dx, std::span<double> dw,
                               std::span<double> db) {
  const std::size_t C = d.in_channels, O = d.out_channels, L = d.length;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t t = 0; t < L; ++t) {
        const double g = dy[(n * O + o) * L + t];
        db[o] += g;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t k = 0; k < kConvWidth; ++k) {
            const long s = static_cast<long>(t + k) - kHalf;
            if (s < 0 || s >= static_cast<long>(L)) continue;
            const std::size_t xi = (n * C + c) * L + static_cast<std::size_t>(s);
            const std::size_t wi = (o * C + c) * kConvWidth + k;
            dw[wi] += g * x[xi];
            dx[xi] += g * w[wi];
          }
        }
      }
    }
  }
}

void conv1d_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, const ConvDims& d, std::span<double> dx,
                     std::span<double> dw, std::span<double> db) {
  const long B = static_cast<long>(d.batch), C = static_cast<long>(d.in_channels),
             O = static_cast<long>(d.out_channels), L = static_cast<long>(d.length);
  const long K = C * static_cast<long>(kConvWidth);

  RowMat dy_all(O, B * L);
#pragma omp parallel for schedule(static)
  for (long n = 0; n < B; ++n) {
    for (long o = 0; o < O; ++o) {
      const double* src = dy.data() + (n * O + o) * L;
      double* dst = dy_all.data() + o * B * L + n * L;
      for (long t = 0; t < L; ++t) dst[t] = src[t];
    }
  }

  const RowMat col = im2col(x, d);
  MutMap dwm(dw.data(), O, K);
  dwm.noalias() += dy_all * col.transpose();
  MutVec dbv(db.data(), O);
  dbv += dy_all.rowwise().sum();

  const ConstMap wm(w.data(), O, K);
  const RowMat dcol = wm.transpose() * dy_all;  // [K, B*L]
#pragma omp parallel for schedule(static)
  for (long n = 0; n < B; ++n) {
    for (long c = 0; c < C; ++c) {
      double* dxs = dx.data() + (n * C + c) * L;
      for (long k = 0; k < static_cast<long>(kConvWidth); ++k) {
        const double* row = dcol.data() + (c * static_cast<long>(kConvWidth) + k) * B * L + n * L;
        for (long t = 0; t < L; ++t) {
          const long s = t + k - kHalf;
          if (s >= 0 && s < L) dxs[s] += row[t];
        }
      }
    }
  }
}

void dense_forward_reference(std::span<const double> x, std::span<const double> w,
                             std::span<const double> b, const DenseDims& d,
                             std::span<double> y) {
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < d.out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < d.in; ++i) acc += x[n * d.in + i] * w[o * d.in + i];
      y[n * d.out + o] = acc;
    }
  }
}

void dense_forward(std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, const DenseDims& d, std::span<double> y) {
  const long B = static_cast<long>(d.batch), I = static_cast<long>(d.in),
             O = static_cast<long>(d.out);
  const ConstMap xm(x.data(), B, I);
  const ConstMap wm(w.data(), O, I);
  MutMap ym(y.data(), B, O);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += ConstVec(b.data(), O).transpose();
}

void dense_backward_reference(std::span<const double> x, std::span<const double> w,
                              std::span<const double> dy, const DenseDims& d,
                              std::span<double> dx, std::span<double> dw,
                              std::span<double> db) {
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < d.out; ++o) {
      const double g = dy[n * d.out + o];
      db[o] += g;
      for (std::size_t i = 0; i < d.in; ++i) {
        dw[o * d.in + i] += g * x[n * d.in + i];
        dx[n * d.in + i] += g * w[o * d.in + i];
      }
    }
  }
}

void dense_backward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> dy, const DenseDims& d, std::span<double> dx,
                    std::span<double> dw, std::span<double> db) {
  const long B = static_cast<long>(d.batch), I = static_cast<long>(d.in),
             O = static_cast<long>(d.out);
  const ConstMap xm(x.data(), B, I);
  const ConstMap wm(w.data(), O, I);
  const ConstMap dym(dy.data(), B, O);
  if (!dx.empty()) {
    MutMap dxm(dx.data(), B, I);
    dxm.noalias() += dym * wm;
  }
  MutMap dwm(dw.data(), O, I);
  dwm.noalias() += dym.transpose() * xm;
  MutVec dbv(db.data(), O);
  dbv += dym.colwise().sum().transpose();
}

}  // namespace qp::kernels
