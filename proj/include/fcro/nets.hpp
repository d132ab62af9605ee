/*
 * Copyright 2026 The FCRO Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Fully connected encoders and heads with hand-written reverse mode, plus
// Adam with decoupled weight decay.
//
// Inputs are p x B (one sample per column). Hidden layers apply the
// configured activation; the output layer is affine only.

#ifndef FCRO_NETS_HPP_
#define FCRO_NETS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "fcro/linalg.hpp"

namespace fcro {

enum class Activation { kRelu, kTanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  Activation activation = Activation::kRelu;
  std::uint64_t seed = 0;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  void validate() const;
};

struct MlpParams {
  MlpSpec spec;
  std::vector<Matrix> weights;  // layer l: out x in
  std::vector<Matrix> biases;   // layer l: out x 1
  // Bumped on every parameter update; forward caches remember it.
  std::uint64_t version = 0;
  std::uint64_t instance = 0;
};

struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  double squared_norm() const;
};

struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  std::uint64_t version = 0;
  std::uint64_t instance = 0;
};

struct ForwardResult {
  Matrix z;
  ForwardCache cache;
};

struct BackwardResult {
  MlpGrads grads;
  Matrix grad_x;
};

// Gaussian weights with variance 2/fan_in (relu) or 1/fan_in (tanh), zero
// biases. Deterministic in spec.seed.
MlpParams init(const MlpSpec& spec);

ForwardResult forward(const MlpParams& params, const Matrix& x);
// Inference only, no cache.
Matrix predict(const MlpParams& params, const Matrix& x);
// Throws std::logic_error if the cache does not belong to the current
// parameter version.
BackwardResult backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_z);

MlpGrads zero_grads(const MlpParams& params);

struct AdamConfig {
  double lr = 1e-4;
  double weight_decay = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Matrix> m_weights, m_biases;
  std::vector<Matrix> v_weights, v_biases;
};

AdamState adam_init(const MlpParams& params, const AdamConfig& config);
// params <- params * (1 - lr * wd), then the bias-corrected Adam update.
void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads);

// JSON manifest at `dir/name.json` plus one CSV per weight and bias.
void save_checkpoint(const std::string& dir, const std::string& name, const MlpParams& params,
                     std::size_t step);
MlpParams load_checkpoint(const std::string& dir, const std::string& name,
                          std::size_t* step = nullptr);

}  // namespace fcro

#endif  // FCRO_NETS_HPP_
