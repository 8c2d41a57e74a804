// Copyright 2026 The purefood Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "purefood/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace pf {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

[[noreturn]] void shape_error(const std::string& what, const Shape4& a,
                              const Shape4& b) {
  throw Error(ErrorKind::shape, what + ": " + a.str() + " vs " + b.str());
}

// Unrolls the receptive fields of image `n` into `col` (P x k*k*c), one row
// per output cell, columns ordered (dy, dx, c) to match the filter layout.
template <typename T>
void im2col(const Tensor<T>& x, std::size_t n, const ConvGeometry& g,
            std::size_t out_h, std::size_t out_w, AlignedVector<T>& col) {
  const Shape4& s = x.shape();
  const std::size_t row_len = g.k * g.k * s.c;
  col.assign(out_h * out_w * row_len, T(0));
  T* dst = col.data();
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox, dst += row_len) {
      for (std::size_t dy = 0; dy < g.k; ++dy) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.s + dy) -
                        static_cast<std::ptrdiff_t>(g.z);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) continue;
        for (std::size_t dx = 0; dx < g.k; ++dx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.s + dx) -
                          static_cast<std::ptrdiff_t>(g.z);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.w)) continue;
          const T* src = &x(n, static_cast<std::size_t>(iy),
                            static_cast<std::size_t>(ix), 0);
          std::copy(src, src + s.c, dst + (dy * g.k + dx) * s.c);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const AlignedVector<T>& col, std::size_t n, const ConvGeometry& g,
                std::size_t out_h, std::size_t out_w, Tensor<T>& dx) {
  const Shape4& s = dx.shape();
  const std::size_t row_len = g.k * g.k * s.c;
  const T* src = col.data();
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox, src += row_len) {
      for (std::size_t dy = 0; dy < g.k; ++dy) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.s + dy) -
                        static_cast<std::ptrdiff_t>(g.z);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) continue;
        for (std::size_t dxk = 0; dxk < g.k; ++dxk) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.s + dxk) -
                          static_cast<std::ptrdiff_t>(g.z);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.w)) continue;
          T* dst = &dx(n, static_cast<std::size_t>(iy),
                       static_cast<std::size_t>(ix), 0);
          const T* block = src + (dy * g.k + dxk) * s.c;
          for (std::size_t ch = 0; ch < s.c; ++ch) dst[ch] += block[ch];
        }
      }
    }
  }
}

template <typename T>
void check_conv_operands(const Tensor<T>& x, const Tensor<T>& filters,
                         const ConvGeometry& g) {
  const Shape4& fs = filters.shape();
  if (fs.h != g.k || fs.w != g.k) {
    throw Error(ErrorKind::shape, "filter spatial size " + fs.str() +
                                      " does not match kernel " +
                                      std::to_string(g.k));
  }
  if (x.shape().c != fs.c) {
    shape_error("input channels do not match filter channels", x.shape(), fs);
  }
}

template <typename T>
T relu_value(T v) {
  return v > T(0) ? v : T(0);
}

}  // namespace

std::size_t pool_output_size(std::size_t input, const PoolGeometry& g) {
  if (g.window < 1 || g.stride < 1) {
    throw Error(ErrorKind::geometry, "pool window and stride must be >= 1");
  }
  if (g.window > input) {
    throw Error(ErrorKind::geometry, "pool window " + std::to_string(g.window) +
                                         " exceeds input " +
                                         std::to_string(input));
  }
  if ((input - g.window) % g.stride != 0) {
    throw Error(ErrorKind::geometry,
                "pool window " + std::to_string(g.window) + " / stride " +
                    std::to_string(g.stride) + " does not tile input " +
                    std::to_string(input));
  }
  return (input - g.window) / g.stride + 1;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& filters,
                         const Tensor<T>& bias, const ConvGeometry& g,
                         Activation act) {
  check_conv_operands(x, filters, g);
  const Shape4& s = x.shape();
  const std::size_t f = filters.shape().i;
  if (bias.size() != f) {
    shape_error("bias length does not match filter count", bias.shape(),
                filters.shape());
  }
  const std::size_t oh = conv_output_size(s.h, g);
  const std::size_t ow = conv_output_size(s.w, g);
  const std::size_t row_len = g.k * g.k * s.c;

  Tensor<T> out({s.i, oh, ow, f});
  ConstMatMap<T> kernel(filters.raw(), static_cast<Eigen::Index>(f),
                        static_cast<Eigen::Index>(row_len));
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(
      bias.raw(), static_cast<Eigen::Index>(f));
  AlignedVector<T> col;
  for (std::size_t n = 0; n < s.i; ++n) {
    im2col(x, n, g, oh, ow, col);
    ConstMatMap<T> cols(col.data(), static_cast<Eigen::Index>(oh * ow),
                        static_cast<Eigen::Index>(row_len));
    MatMap<T> o(&out(n, 0, 0, 0), static_cast<Eigen::Index>(oh * ow),
                static_cast<Eigen::Index>(f));
    o.noalias() = cols * kernel.transpose();
    o.rowwise() += b;
  }
  if (act == Activation::relu) {
    for (T& v : out.data()) v = relu_value(v);
  } else if (act == Activation::softmax) {
    throw Error(ErrorKind::config, "softmax is not a convolution activation");
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& filters,
                             const ConvGeometry& g, const Tensor<T>& dout,
                             bool need_dx) {
  check_conv_operands(x, filters, g);
  const Shape4& s = x.shape();
  const std::size_t f = filters.shape().i;
  const std::size_t oh = conv_output_size(s.h, g);
  const std::size_t ow = conv_output_size(s.w, g);
  if (dout.shape() != Shape4{s.i, oh, ow, f}) {
    shape_error("conv output gradient", dout.shape(), Shape4{s.i, oh, ow, f});
  }
  const std::size_t row_len = g.k * g.k * s.c;
  const auto rows = static_cast<Eigen::Index>(oh * ow);

  ConvGrads<T> grads;
  grads.dfilters = Tensor<T>(filters.shape());
  grads.dbias = Tensor<T>({1, 1, 1, f});
  if (need_dx) grads.dx = Tensor<T>(s);

  ConstMatMap<T> kernel(filters.raw(), static_cast<Eigen::Index>(f),
                        static_cast<Eigen::Index>(row_len));
  MatMap<T> dkernel(grads.dfilters.raw(), static_cast<Eigen::Index>(f),
                    static_cast<Eigen::Index>(row_len));
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(
      grads.dbias.raw(), static_cast<Eigen::Index>(f));
  AlignedVector<T> col;
  AlignedVector<T> dcol(oh * ow * row_len);
  for (std::size_t n = 0; n < s.i; ++n) {
    im2col(x, n, g, oh, ow, col);
    ConstMatMap<T> cols(col.data(), rows, static_cast<Eigen::Index>(row_len));
    ConstMatMap<T> d(&dout(n, 0, 0, 0), rows, static_cast<Eigen::Index>(f));
    dkernel.noalias() += d.transpose() * cols;
    db += d.colwise().sum();
    if (need_dx) {
      MatMap<T> dc(dcol.data(), rows, static_cast<Eigen::Index>(row_len));
      dc.noalias() = d * kernel;
      col2im_add(dcol, n, g, oh, ow, grads.dx);
    }
  }
  return grads;
}

template <typename T>
Tensor<T> pool_forward(const Tensor<T>& x, const PoolGeometry& g) {
  const Shape4& s = x.shape();
  const std::size_t oh = pool_output_size(s.h, g);
  const std::size_t ow = pool_output_size(s.w, g);
  Tensor<T> out({s.i, oh, ow, s.c});
  const T inv_area = T(1) / static_cast<T>(g.window * g.window);
  for (std::size_t n = 0; n < s.i; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < s.c; ++ch) {
          T acc = g.mode == PoolMode::max ? -std::numeric_limits<T>::infinity()
                                          : T(0);
          for (std::size_t dy = 0; dy < g.window; ++dy) {
            for (std::size_t dx = 0; dx < g.window; ++dx) {
              const T v = x(n, oy * g.stride + dy, ox * g.stride + dx, ch);
              acc = g.mode == PoolMode::max ? std::max(acc, v) : acc + v;
            }
          }
          out(n, oy, ox, ch) = g.mode == PoolMode::max ? acc : acc * inv_area;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> pool_backward(const Tensor<T>& x, const PoolGeometry& g,
                        const Tensor<T>& dout) {
  const Shape4& s = x.shape();
  const std::size_t oh = pool_output_size(s.h, g);
  const std::size_t ow = pool_output_size(s.w, g);
  if (dout.shape() != Shape4{s.i, oh, ow, s.c}) {
    shape_error("pool output gradient", dout.shape(), Shape4{s.i, oh, ow, s.c});
  }
  Tensor<T> dx(s);
  const T inv_area = T(1) / static_cast<T>(g.window * g.window);
  for (std::size_t n = 0; n < s.i; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < s.c; ++ch) {
          const T d = dout(n, oy, ox, ch);
          if (g.mode == PoolMode::average) {
            for (std::size_t dy = 0; dy < g.window; ++dy) {
              for (std::size_t dxw = 0; dxw < g.window; ++dxw) {
                dx(n, oy * g.stride + dy, ox * g.stride + dxw, ch) += d * inv_area;
              }
            }
            continue;
          }
          std::size_t by = oy * g.stride;
          std::size_t bx = ox * g.stride;
          T best = x(n, by, bx, ch);
          for (std::size_t dy = 0; dy < g.window; ++dy) {
            for (std::size_t dxw = 0; dxw < g.window; ++dxw) {
              const std::size_t y = oy * g.stride + dy;
              const std::size_t xx = ox * g.stride + dxw;
              if (x(n, y, xx, ch) > best) {
                best = x(n, y, xx, ch);
                by = y;
                bx = xx;
              }
            }
          }
          dx(n, by, bx, ch) += d;
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  const Shape4& s = x.shape();
  return x.reshaped({s.i, 1, 1, s.h * s.w * s.c});
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights,
                        const Tensor<T>& bias, Activation act) {
  const Shape4& s = x.shape();
  const Shape4& ws = weights.shape();
  const std::size_t n_in = s.h * s.w * s.c;
  if (ws.i != 1 || ws.h != 1 || ws.w != n_in) {
    shape_error("dense input does not match weights", s, ws);
  }
  if (bias.size() != ws.c) shape_error("dense bias", bias.shape(), ws);
  Tensor<T> out({s.i, 1, 1, ws.c});
  ConstMatMap<T> in(x.raw(), static_cast<Eigen::Index>(s.i),
                    static_cast<Eigen::Index>(n_in));
  ConstMatMap<T> w(weights.raw(), static_cast<Eigen::Index>(n_in),
                   static_cast<Eigen::Index>(ws.c));
  MatMap<T> o(out.raw(), static_cast<Eigen::Index>(s.i),
              static_cast<Eigen::Index>(ws.c));
  o.noalias() = in * w;
  o.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
      bias.raw(), static_cast<Eigen::Index>(ws.c));
  switch (act) {
    case Activation::none:
      return out;
    case Activation::relu:
      return relu(out);
    case Activation::softmax:
      return softmax(out);
  }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights,
                             const Tensor<T>& dout) {
  const Shape4& s = x.shape();
  const Shape4& ws = weights.shape();
  const std::size_t n_in = s.h * s.w * s.c;
  if (ws.w != n_in || dout.shape() != Shape4{s.i, 1, 1, ws.c}) {
    shape_error("dense backward operands", dout.shape(), ws);
  }
  DenseGrads<T> g{Tensor<T>(s), Tensor<T>(ws), Tensor<T>({1, 1, 1, ws.c})};
  const auto rows = static_cast<Eigen::Index>(s.i);
  const auto nin = static_cast<Eigen::Index>(n_in);
  const auto nout = static_cast<Eigen::Index>(ws.c);
  ConstMatMap<T> in(x.raw(), rows, nin);
  ConstMatMap<T> w(weights.raw(), nin, nout);
  ConstMatMap<T> d(dout.raw(), rows, nout);
  MatMap<T>(g.dweights.raw(), nin, nout).noalias() = in.transpose() * d;
  MatMap<T>(g.dx.raw(), rows, nin).noalias() = d * w.transpose();
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.dbias.raw(), nout) =
      d.colwise().sum();
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data()) v = relu_value(v);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  if (y.shape() != dy.shape()) shape_error("relu backward", y.shape(), dy.shape());
  Tensor<T> dx(dy.shape());
  for (std::size_t k = 0; k < dy.size(); ++k) {
    dx[k] = y[k] > T(0) ? dy[k] : T(0);
  }
  return dx;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const Shape4& s = x.shape();
  const std::size_t n = s.h * s.w * s.c;
  Tensor<T> p(s);
  for (std::size_t r = 0; r < s.i; ++r) {
    const T* in = x.raw() + r * n;
    T* out = p.raw() + r * n;
    const T peak = *std::max_element(in, in + n);
    T total = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(in[j] - peak);
      total += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= total;
  }
  return p;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& p, const Tensor<T>& dp) {
  if (p.shape() != dp.shape()) shape_error("softmax backward", p.shape(), dp.shape());
  const Shape4& s = p.shape();
  const std::size_t n = s.h * s.w * s.c;
  Tensor<T> dz(s);
  for (std::size_t r = 0; r < s.i; ++r) {
    const T* pr = p.raw() + r * n;
    const T* gr = dp.raw() + r * n;
    T dot = T(0);
    for (std::size_t j = 0; j < n; ++j) dot += pr[j] * gr[j];
    for (std::size_t j = 0; j < n; ++j) dz[r * n + j] = pr[j] * (gr[j] - dot);
  }
  return dz;
}

template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& x, double rate, bool training,
                                 Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(ErrorKind::config,
                "dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) {
    return {x, Tensor<T>(x.shape(), T(1))};
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  DropoutResult<T> r{Tensor<T>(x.shape()), Tensor<T>(x.shape())};
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const bool keep = uniform(rng) >= rate;
    r.mask[k] = keep ? keep_scale : T(0);
    r.y[k] = x[k] * r.mask[k];
  }
  return r;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& dy) {
  if (mask.shape() != dy.shape()) shape_error("dropout backward", mask.shape(), dy.shape());
  Tensor<T> dx(dy.shape());
  for (std::size_t k = 0; k < dy.size(); ++k) dx[k] = dy[k] * mask[k];
  return dx;
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& state,
                            bool training, BatchNormCache<T>* cache) {
  return batchnorm_forward(x, state.gamma, state.beta, state.running_mean,
                           state.running_var, state.eps, state.momentum,
                           training, training, cache);
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                            const Tensor<T>& beta, Tensor<T>& running_mean,
                            Tensor<T>& running_var, double eps, double momentum,
                            bool training, bool update_running,
                            BatchNormCache<T>* cache) {
  const Shape4& s = x.shape();
  const std::size_t c = s.c;
  const Tensor<T>* operands[] = {&gamma, &beta, &running_mean, &running_var};
  for (const Tensor<T>* t : operands) {
    if (t->size() != c) shape_error("batch-norm parameter", t->shape(), s);
  }
  if (!(eps > 0.0)) throw Error(ErrorKind::config, "batch-norm eps must be > 0");
  const std::size_t count = s.i * s.h * s.w;
  if (training && count < 2) {
    throw Error(ErrorKind::degenerate,
                "batch-norm training needs >= 2 values per channel, got input " +
                    s.str());
  }

  std::vector<T> mean(c), inv_std(c), var(c);
  if (training) {
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) sum[k % c] += x[k];
    for (std::size_t ch = 0; ch < c; ++ch) sum[ch] /= static_cast<double>(count);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = x[k] - sum[k % c];
      sq[k % c] += d * d;
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = sq[ch] / static_cast<double>(count);
      mean[ch] = static_cast<T>(sum[ch]);
      var[ch] = static_cast<T>(v);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(v + eps));
      if (update_running) {
        const double unbiased = v * static_cast<double>(count) /
                                static_cast<double>(count - 1);
        running_mean[ch] = static_cast<T>((1.0 - momentum) * running_mean[ch] +
                                          momentum * sum[ch]);
        running_var[ch] = static_cast<T>((1.0 - momentum) * running_var[ch] +
                                         momentum * unbiased);
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      inv_std[ch] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps));
    }
  }

  Tensor<T> y(s);
  Tensor<T> x_hat(s);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t ch = k % c;
    x_hat[k] = (x[k] - mean[ch]) * inv_std[ch];
    y[k] = gamma[ch] * x_hat[k] + beta[ch];
  }
  if (cache != nullptr) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->training = training;
    if (training) {
      cache->batch_mean = std::move(mean);
      cache->batch_var = std::move(var);
    } else {
      cache->batch_mean.clear();
      cache->batch_var.clear();
    }
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache,
                                     const Tensor<T>& gamma,
                                     const Tensor<T>& dy) {
  const Shape4& s = dy.shape();
  if (cache.x_hat.shape() != s) shape_error("batch-norm backward", s, cache.x_hat.shape());
  const std::size_t c = s.c;
  const double count = static_cast<double>(s.i * s.h * s.w);
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t k = 0; k < dy.size(); ++k) {
    sum_dy[k % c] += dy[k];
    sum_dy_xhat[k % c] += static_cast<double>(dy[k]) * cache.x_hat[k];
  }
  BatchNormGrads<T> g{Tensor<T>(s), Tensor<T>({1, 1, 1, c}), Tensor<T>({1, 1, 1, c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    g.dgamma[ch] = static_cast<T>(sum_dy_xhat[ch]);
    g.dbeta[ch] = static_cast<T>(sum_dy[ch]);
  }
  for (std::size_t k = 0; k < dy.size(); ++k) {
    const std::size_t ch = k % c;
    const double scale = static_cast<double>(gamma[ch]) * cache.inv_std[ch];
    if (cache.training) {
      g.dx[k] = static_cast<T>(scale / count *
                               (count * dy[k] - sum_dy[ch] -
                                cache.x_hat[k] * sum_dy_xhat[ch]));
    } else {
      g.dx[k] = static_cast<T>(scale * dy[k]);
    }
  }
  return g;
}

template <typename T>
double l1_penalty(const ParamStore<T>& params, double coefficient) {
  double total = 0.0;
  for (const auto& p : params) {
    if (p.role != ParamRole::weight) continue;
    for (T v : p.value.data()) total += std::abs(static_cast<double>(v));
  }
  return coefficient * total;
}

template <typename T>
double l2_penalty(const ParamStore<T>& params, double coefficient) {
  double total = 0.0;
  for (const auto& p : params) {
    if (p.role != ParamRole::weight) continue;
    for (T v : p.value.data()) total += static_cast<double>(v) * v;
  }
  return coefficient * total;
}

#define PF_INSTANTIATE(T)                                                        \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&,          \
                                    const Tensor<T>&, const ConvGeometry&,       \
                                    Activation);                                 \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,      \
                                        const ConvGeometry&, const Tensor<T>&,   \
                                        bool);                                   \
  template Tensor<T> pool_forward(const Tensor<T>&, const PoolGeometry&);        \
  template Tensor<T> pool_backward(const Tensor<T>&, const PoolGeometry&,        \
                                   const Tensor<T>&);                            \
  template Tensor<T> flatten(const Tensor<T>&);                                  \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&,           \
                                   const Tensor<T>&, Activation);                \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&,      \
                                        const Tensor<T>&);                       \
  template Tensor<T> relu(const Tensor<T>&);                                     \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> softmax(const Tensor<T>&);                                  \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);       \
  template DropoutResult<T> dropout_forward(const Tensor<T>&, double, bool,      \
                                            Rng&);                               \
  template Tensor<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, BatchNormState<T>&,     \
                                       bool, BatchNormCache<T>*);                \
  template Tensor<T> batchnorm_forward(                                          \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,          \
      Tensor<T>&, double, double, bool, bool, BatchNormCache<T>*);               \
  template BatchNormGrads<T> batchnorm_backward(                                 \
      const BatchNormCache<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template double l1_penalty(const ParamStore<T>&, double);                      \
  template double l2_penalty(const ParamStore<T>&, double);
PF_INSTANTIATE(float)
PF_INSTANTIATE(double)
#undef PF_INSTANTIATE

}  // namespace pf
