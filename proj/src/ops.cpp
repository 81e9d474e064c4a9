#include <algorithm>
#include <cmath>
#include <string>

#include "qp/autodiff.hpp"
#include "qp/kernels.hpp"
#include "qp/rotations.hpp"

namespace qp::ad {
namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(Var x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(x.shape()));
  }
}

template <typename Fwd, typename Deriv>
Var unary(Var x, const char* op, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  const long n = static_cast<long>(xv.size());
  const double* xs = xv.ptr();
  double* ys = y.ptr();
#pragma omp parallel for schedule(static) if (n > 16384)
  for (long i = 0; i < n; ++i) ys[i] = fwd(xs[i]);
  return x.tape->record(
      std::move(y), {x},
      [x, deriv](Tape& t, std::uint32_t self) {
        Tensor* gx = t.grad_target(x);
        if (gx == nullptr) return;
        const double* g = t.grad_of(self).ptr();
        const double* xs = t.value(x).ptr();
        double* out = gx->ptr();
        const long n = static_cast<long>(gx->size());
#pragma omp parallel for schedule(static) if (n > 16384)
        for (long i = 0; i < n; ++i) out[i] += g[i] * deriv(xs[i]);
      },
      op);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var dense(Var x, Var w, Var b) {
  require_rank(x, 2, "dense");
  require_rank(w, 2, "dense");
  const kernels::DenseDims d{x.shape()[0], x.shape()[1], w.shape()[0]};
  if (w.shape()[1] != d.in || b.value().size() != d.out) {
    throw ShapeError("dense: x " + shape_string(x.shape()) + ", W " + shape_string(w.shape()) +
                     ", b " + shape_string(b.shape()));
  }
  Tensor y({d.batch, d.out});
  kernels::dense_forward(x.value().data(), w.value().data(), b.value().data(), d, y.data());
  return x.tape->record(
      std::move(y), {x, w, b},
      [x, w, b, d](Tape& t, std::uint32_t self) {
        Tensor* gx = t.grad_target(x);
        Tensor* gw = t.grad_target(w);
        Tensor* gb = t.grad_target(b);
        Tensor scratch_w, scratch_b;
        if (gw == nullptr) {
          scratch_w = Tensor(t.value(w).shape());
          gw = &scratch_w;
        }
        if (gb == nullptr) {
          scratch_b = Tensor(t.value(b).shape());
          gb = &scratch_b;
        }
        kernels::dense_backward(t.value(x).data(), t.value(w).data(), t.grad_of(self).data(), d,
                                gx ? gx->data() : std::span<double>{}, gw->data(), gb->data());
      },
      "dense");
}

Var conv1d(Var x, Var w, Var b) {
  require_rank(x, 3, "conv1d");
  require_rank(w, 3, "conv1d");
  const kernels::ConvDims d{x.shape()[0], x.shape()[1], w.shape()[0], x.shape()[2]};
  if (w.shape()[1] != d.in_channels || w.shape()[2] != kernels::kConvWidth ||
      b.value().size() != d.out_channels) {
    throw ShapeError("conv1d: x " + shape_string(x.shape()) + ", W " + shape_string(w.shape()) +
                     ", b " + shape_string(b.shape()));
  }
  Tensor y({d.batch, d.out_channels, d.length});
  kernels::conv1d_forward(x.value().data(), w.value().data(), b.value().data(), d, y.data());
  return x.tape->record(
      std::move(y), {x, w, b},
      [x, w, b, d](Tape& t, std::uint32_t self) {
        Tensor scratch_x, scratch_w, scratch_b;
        Tensor* gx = t.grad_target(x);
        Tensor* gw = t.grad_target(w);
        Tensor* gb = t.grad_target(b);
        if (gx == nullptr) {
          scratch_x = Tensor(t.value(x).shape());
          gx = &scratch_x;
        }
        if (gw == nullptr) {
          scratch_w = Tensor(t.value(w).shape());
          gw = &scratch_w;
        }
        if (gb == nullptr) {
          scratch_b = Tensor(t.value(b).shape());
          gb = &scratch_b;
        }
        kernels::conv1d_backward(t.value(x).data(), t.value(w).data(), t.grad_of(self).data(), d,
                                 gx->data(), gw->data(), gb->data());
      },
      "conv1d");
}

Var maxpool1d(Var x) {
  require_rank(x, 3, "maxpool1d");
  const std::size_t rows = x.shape()[0] * x.shape()[1];
  const std::size_t len = x.shape()[2];
  const std::size_t out_len = len / 2;
  if (out_len == 0) throw ShapeError("maxpool1d: length must be >= 2");
  const Tensor& xv = x.value();
  Tensor y({x.shape()[0], x.shape()[1], out_len});
  std::vector<std::size_t> argmax(rows * out_len);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < static_cast<long>(rows); ++r) {
    const std::size_t ru = static_cast<std::size_t>(r);
    for (std::size_t i = 0; i < out_len; ++i) {
      const std::size_t a = ru * len + 2 * i;
      const std::size_t pick = xv[a + 1] > xv[a] ? a + 1 : a;
      y[ru * out_len + i] = xv[pick];
      argmax[ru * out_len + i] = pick;
    }
  }
  return x.tape->record(
      std::move(y), {x},
      [x, argmax = std::move(argmax)](Tape& t, std::uint32_t self) {
        Tensor* gx = t.grad_target(x);
        if (gx == nullptr) return;
        const Tensor& g = t.grad_of(self);
        for (std::size_t i = 0; i < argmax.size(); ++i) (*gx)[argmax[i]] += g[i];
      },
      "maxpool1d");
}

Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps) {
  require_rank(x, 3, "group_norm");
  const std::size_t B = x.shape()[0], C = x.shape()[1], L = x.shape()[2];
  if (groups == 0 || C % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(C) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (gamma.value().size() != C || beta.value().size() != C) {
    throw ShapeError("group_norm: affine parameters must have one entry per channel");
  }
  const std::size_t per_group = (C / groups) * L;
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(B * groups);
  const double* gm = gamma.value().ptr();
  const double* bt = beta.value().ptr();

#pragma omp parallel for schedule(static)
  for (long bg = 0; bg < static_cast<long>(B * groups); ++bg) {
    const std::size_t base = static_cast<std::size_t>(bg) * per_group;
    double mu = 0.0;
    for (std::size_t i = 0; i < per_group; ++i) mu += xv[base + i];
    mu /= static_cast<double>(per_group);
    double var = 0.0;
    for (std::size_t i = 0; i < per_group; ++i) {
      const double dlt = xv[base + i] - mu;
      var += dlt * dlt;
    }
    var /= static_cast<double>(per_group);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(bg)] = is;
    for (std::size_t i = 0; i < per_group; ++i) {
      const std::size_t idx = base + i;
      const std::size_t c = (idx / L) % C;
      normalized[idx] = (xv[idx] - mu) * is;
      y[idx] = gm[c] * normalized[idx] + bt[c];
    }
  }

  return x.tape->record(
      std::move(y), {x, gamma, beta},
      [x, gamma, beta, B, C, L, groups, per_group, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const double* gm = t.value(gamma).ptr();
        if (Tensor* gg = t.grad_target(gamma)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gg)[(i / L) % C] += g[i] * normalized[i];
        }
        if (Tensor* gb = t.grad_target(beta)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[(i / L) % C] += g[i];
        }
        Tensor* gx = t.grad_target(x);
        if (gx == nullptr) return;
        const double n = static_cast<double>(per_group);
#pragma omp parallel for schedule(static)
        for (long bg = 0; bg < static_cast<long>(B * groups); ++bg) {
          const std::size_t base = static_cast<std::size_t>(bg) * per_group;
          double sum_dn = 0.0, sum_dn_n = 0.0;
          for (std::size_t i = 0; i < per_group; ++i) {
            const std::size_t idx = base + i;
            const double dn = g[idx] * gm[(idx / L) % C];
            sum_dn += dn;
            sum_dn_n += dn * normalized[idx];
          }
          const double is = inv_std[static_cast<std::size_t>(bg)];
          for (std::size_t i = 0; i < per_group; ++i) {
            const std::size_t idx = base + i;
            const double dn = g[idx] * gm[(idx / L) % C];
            (*gx)[idx] += is / n * (n * dn - sum_dn - normalized[idx] * sum_dn_n);
          }
        }
      },
      "group_norm");
}

Var pad_right(Var x, std::size_t count) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("pad_right: rank-0 input");
  const std::size_t len = s.back();
  const std::size_t rows = x.value().size() / len;
  Shape out_shape = s;
  out_shape.back() = len + count;
  Tensor y(out_shape, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.value().ptr() + r * len, len, y.ptr() + r * (len + count));
  }
  return x.tape->record(
      std::move(y), {x},
      [x, rows, len, count](Tape& t, std::uint32_t self) {
        Tensor* gx = t.grad_target(x);
        if (gx == nullptr) return;
        const Tensor& g = t.grad_of(self);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < len; ++i) (*gx)[r * len + i] += g[r * (len + count) + i];
      },
      "pad_right");
}

Var silu(Var x) {
  return unary(
      x, "silu", [](double v) { return v * sigmoid(v); },
      [](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Var relu(Var x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sin(Var x) {
  return unary(
      x, "sin", [](double v) { return std::sin(v); }, [](double v) { return std::cos(v); });
}

Var cos(Var x) {
  return unary(
      x, "cos", [](double v) { return std::cos(v); }, [](double v) { return -std::sin(v); });
}

Var scale(Var x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return factor * v; }, [factor](double) { return factor; });
}

Var affine(Var x, double factor, double offset) {
  return unary(
      x, "affine", [factor, offset](double v) { return factor * v + offset; },
      [factor](double) { return factor; });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return a.tape->record(
      std::move(y), {a, b},
      [a, b](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        if (Tensor* ga = t.grad_target(a))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (Tensor* gb = t.grad_target(b))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
      },
      "add");
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return a.tape->record(
      std::move(y), {a, b},
      [a, b](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        if (Tensor* ga = t.grad_target(a))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (Tensor* gb = t.grad_target(b))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
      },
      "sub");
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return a.tape->record(
      std::move(y), {a, b},
      [a, b](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        if (Tensor* ga = t.grad_target(a))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * t.value(b)[i];
        if (Tensor* gb = t.grad_target(b))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * t.value(a)[i];
      },
      "mul");
}

Var concat_columns(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_columns: no inputs");
  const std::size_t rows = parts[0].shape()[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    require_rank(p, 2, "concat_columns");
    if (p.shape()[0] != rows) throw ShapeError("concat_columns: row count mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor y({rows, total});
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.ptr() + r * widths[k], widths[k], y.ptr() + r * total + col);
    col += widths[k];
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].tape->record(
      std::move(y), parents,
      [parents, widths, rows, total](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        std::size_t col = 0;
        for (std::size_t k = 0; k < parents.size(); ++k) {
          if (Tensor* gp = t.grad_target(parents[k])) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < widths[k]; ++j)
                (*gp)[r * widths[k] + j] += g[r * total + col + j];
          }
          col += widths[k];
        }
      },
      "concat_columns");
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape->record(
      std::move(y), {x},
      [x](Tape& t, std::uint32_t self) {
        Tensor* gx = t.grad_target(x);
        if (gx == nullptr) return;
        const Tensor& g = t.grad_of(self);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
      },
      "reshape");
}

Var add_outer(Var a, std::span<const double> offsets) {
  const std::size_t P = a.value().size(), J = offsets.size();
  if (J == 0) throw ShapeError("add_outer: empty offsets");
  Tensor y({P, J});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t j = 0; j < J; ++j) y[p * J + j] = a.value()[p] + offsets[j];
  return a.tape->record(
      std::move(y), {a},
      [a, P, J](Tape& t, std::uint32_t self) {
        Tensor* ga = t.grad_target(a);
        if (ga == nullptr) return;
        const Tensor& g = t.grad_of(self);
        for (std::size_t p = 0; p < P; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < J; ++j) s += g[p * J + j];
          (*ga)[p] += s;
        }
      },
      "add_outer");
}

Var gather(Var v, std::span<const std::size_t> indices) {
  const std::size_t M = v.value().size();
  Tensor y({indices.size()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= M) throw ShapeError("gather: index out of range");
    y[i] = v.value()[indices[i]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return v.tape->record(
      std::move(y), {v},
      [v, idx = std::move(idx)](Tape& t, std::uint32_t self) {
        Tensor* gv = t.grad_target(v);
        if (gv == nullptr) return;
        const Tensor& g = t.grad_of(self);
        for (std::size_t i = 0; i < idx.size(); ++i) (*gv)[idx[i]] += g[i];
      },
      "gather");
}

Var atan2_rows(Var xy) {
  require_rank(xy, 2, "atan2_rows");
  if (xy.shape()[1] != 2) throw ShapeError("atan2_rows: expected [B, 2]");
  const std::size_t B = xy.shape()[0];
  const Tensor& v = xy.value();
  Tensor y({B});
  for (std::size_t i = 0; i < B; ++i) {
    const double u = v[2 * i], w = v[2 * i + 1];
    if (std::hypot(u, w) < 1e-8) {
      throw NonFiniteError("atan2_rows: degenerate head output (norm < 1e-8)");
    }
    y[i] = std::atan2(w, u);
  }
  return xy.tape->record(
      std::move(y), {xy},
      [xy, B](Tape& t, std::uint32_t self) {
        Tensor* gxy = t.grad_target(xy);
        if (gxy == nullptr) return;
        const Tensor& g = t.grad_of(self);
        const Tensor& v = t.value(xy);
        for (std::size_t i = 0; i < B; ++i) {
          const double u = v[2 * i], w = v[2 * i + 1];
          const double r2 = u * u + w * w;
          (*gxy)[2 * i] += g[i] * (-w / r2);
          (*gxy)[2 * i + 1] += g[i] * (u / r2);
        }
      },
      "atan2_rows");
}

namespace {

struct InterpWeights {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

InterpWeights interp_weights(double theta, std::size_t G) {
  double u = wrap_angle(theta) * (static_cast<double>(G) / kTwoPi);
  const double nearest = std::round(u);
  if (std::abs(u - nearest) < 1e-9) u = nearest;
  const double fl = std::floor(u);
  const std::size_t lo = static_cast<std::size_t>(fl) % G;
  return {lo, (lo + 1) % G, u - fl};
}

}  // namespace

Var interp_periodic(Var grid, Var theta) {
  const std::size_t G = grid.value().size();
  const std::size_t P = theta.value().size();
  Tensor y({P});
  std::vector<InterpWeights> w(P);
  for (std::size_t p = 0; p < P; ++p) {
    w[p] = interp_weights(theta.value()[p], G);
    y[p] = (1.0 - w[p].frac) * grid.value()[w[p].lo] + w[p].frac * grid.value()[w[p].hi];
  }
  return grid.tape->record(
      std::move(y), {grid, theta},
      [grid, theta, G, w = std::move(w)](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        if (Tensor* gg = t.grad_target(grid)) {
          for (std::size_t p = 0; p < w.size(); ++p) {
            (*gg)[w[p].lo] += g[p] * (1.0 - w[p].frac);
            (*gg)[w[p].hi] += g[p] * w[p].frac;
          }
        }
        if (Tensor* gt = t.grad_target(theta)) {
          const Tensor& gv = t.value(grid);
          const double slope_scale = static_cast<double>(G) / kTwoPi;
          for (std::size_t p = 0; p < w.size(); ++p)
            (*gt)[p] += g[p] * (gv[w[p].hi] - gv[w[p].lo]) * slope_scale;
        }
      },
      "interp_periodic");
}

Var mean(Var x) {
  const Tensor& v = x.value();
  double s = 0.0;
  for (double e : v.data()) s += e;
  const double n = static_cast<double>(v.size());
  return x.tape->record(
      Tensor::scalar(s / n), {x},
      [x, n](Tape& t, std::uint32_t self) {
        Tensor* gx = t.grad_target(x);
        if (gx == nullptr) return;
        const double g = t.grad_of(self)[0] / n;
        for (double& e : gx->data()) e += g;
      },
      "mean");
}

Var squared_error_rows(Var a, Var b) {
  require_same_shape(a, b, "squared_error_rows");
  require_rank(a, 2, "squared_error_rows");
  const std::size_t R = a.shape()[0], J = a.shape()[1];
  Tensor y({R});
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      const double d = a.value()[r * J + j] - b.value()[r * J + j];
      s += d * d;
    }
    y[r] = s;
  }
  return a.tape->record(
      std::move(y), {a, b},
      [a, b, R, J](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        Tensor* ga = t.grad_target(a);
        Tensor* gb = t.grad_target(b);
        for (std::size_t r = 0; r < R; ++r) {
          if (g[r] == 0.0) continue;
          for (std::size_t j = 0; j < J; ++j) {
            const double d = 2.0 * g[r] * (av[r * J + j] - bv[r * J + j]);
            if (ga) (*ga)[r * J + j] += d;
            if (gb) (*gb)[r * J + j] -= d;
          }
        }
      },
      "squared_error_rows");
}

Var min_rows(Var x, std::vector<std::size_t>* argmin) {
  require_rank(x, 2, "min_rows");
  const std::size_t R = x.shape()[0], N = x.shape()[1];
  Tensor y({R});
  std::vector<std::size_t> pick(R);
  for (std::size_t r = 0; r < R; ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < N; ++k)
      if (x.value()[r * N + k] < x.value()[r * N + best]) best = k;
    pick[r] = best;
    y[r] = x.value()[r * N + best];
  }
  if (argmin) *argmin = pick;
  return x.tape->record(
      std::move(y), {x},
      [x, N, pick = std::move(pick)](Tape& t, std::uint32_t self) {
        Tensor* gx = t.grad_target(x);
        if (gx == nullptr) return;
        const Tensor& g = t.grad_of(self);
        for (std::size_t r = 0; r < pick.size(); ++r) (*gx)[r * N + pick[r]] += g[r];
      },
      "min_rows");
}

}  // namespace qp::ad
