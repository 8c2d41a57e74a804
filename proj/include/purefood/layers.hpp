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

// Forward and backward kernels for every layer kind. All kernels are pure
// functions of their arguments except the batch-norm running-stat update.

#pragma once

#include "purefood/params.hpp"
#include "purefood/rng.hpp"
#include "purefood/tensor.hpp"

namespace pf {

enum class Activation { none, relu, softmax };
enum class PoolMode { max, average };

struct PoolGeometry {
  std::size_t window = 2;
  std::size_t stride = 2;
  PoolMode mode = PoolMode::max;
};

// Output side of a pooling layer. Windows must tile the input exactly.
std::size_t pool_output_size(std::size_t input, const PoolGeometry& g);

// Convolution. `filters` is (f, k, k, c_in), `bias` is (1, 1, 1, f).
// Cross-correlation orientation: out(n, y, x, f) =
//   sum_{dy, dx, c} in_padded(n, y*s + dy, x*s + dx, c) * K(f, dy, dx, c) + b(f)

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& filters,
                         const Tensor<T>& bias, const ConvGeometry& g,
                         Activation act = Activation::none);

template <typename T>
struct ConvGrads {
  Tensor<T> dx;
  Tensor<T> dfilters;
  Tensor<T> dbias;
};

// Gradients of a bias-added, pre-activation convolution output.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& filters,
                             const ConvGeometry& g, const Tensor<T>& dout,
                             bool need_dx = true);

// Pooling (no padding).

template <typename T>
Tensor<T> pool_forward(const Tensor<T>& x, const PoolGeometry& g);

// Max pooling routes each gradient to the first maximal cell of its window.
template <typename T>
Tensor<T> pool_backward(const Tensor<T>& x, const PoolGeometry& g,
                        const Tensor<T>& dout);

// (i, h, w, c) -> (i, 1, 1, h*w*c), row-major order kept.
template <typename T>
Tensor<T> flatten(const Tensor<T>& x);

// Dense: x is (i, 1, 1, n_in), weights (1, 1, n_in, n_out), bias (1, 1, 1, n_out).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights,
                        const Tensor<T>& bias, Activation act = Activation::none);

template <typename T>
struct DenseGrads {
  Tensor<T> dx;
  Tensor<T> dweights;
  Tensor<T> dbias;
};

// Gradients of the pre-activation dense output.
template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights,
                             const Tensor<T>& dout);

// Activations.

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// dy masked by y > 0, where y is the ReLU output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy);

// Row-wise softmax over the trailing h*w*c values of each image, with the
// row maximum subtracted before exponentiation.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

// Vector-Jacobian product of softmax given its output `p`.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& p, const Tensor<T>& dp);

// Dropout (inverted: survivors scaled by 1 / (1 - rate) at training time).

template <typename T>
struct DropoutResult {
  Tensor<T> y;
  Tensor<T> mask;  // per-element multiplier: 0 or 1 / (1 - rate)
};

template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& x, double rate,
                                 bool training, Rng& rng);

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& dy);

// Batch normalization over (batch x spatial) per channel.

// Per-channel state. All tensors are (1, 1, 1, c).
template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNormState identity(std::size_t channels) {
    const Shape4 s{1, 1, 1, channels};
    return {Tensor<T>(s, T(1)), Tensor<T>(s, T(0)), Tensor<T>(s, T(0)),
            Tensor<T>(s, T(1))};
  }
};

template <typename T>
struct BatchNormCache {
  Tensor<T> x_hat;            // normalized input
  std::vector<T> inv_std;     // 1 / sqrt(var + eps) per channel
  std::vector<T> batch_mean;  // empty in inference mode
  std::vector<T> batch_var;   // biased batch variance
  bool training = false;
};

// Training mode standardizes by batch statistics and folds them into the
// running statistics (unbiased variance, weight `momentum`). Inference mode
// standardizes by the running statistics and leaves `state` untouched.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& state,
                            bool training, BatchNormCache<T>* cache = nullptr);

// Same computation on caller-owned tensors; running stats are updated in place
// when `update_running` is set.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                            const Tensor<T>& beta, Tensor<T>& running_mean,
                            Tensor<T>& running_var, double eps, double momentum,
                            bool training, bool update_running,
                            BatchNormCache<T>* cache);

template <typename T>
struct BatchNormGrads {
  Tensor<T> dx;
  Tensor<T> dgamma;
  Tensor<T> dbeta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache,
                                     const Tensor<T>& gamma,
                                     const Tensor<T>& dy);

// Weight penalties. Only ParamRole::weight tensors contribute.

template <typename T>
double l1_penalty(const ParamStore<T>& params, double coefficient);

template <typename T>
double l2_penalty(const ParamStore<T>& params, double coefficient);

}  // namespace pf
