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

#include "fcro/nets.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace fcro {

namespace {

std::atomic<std::uint64_t> next_instance{1};

double activate(Activation a, double x) {
  return a == Activation::kRelu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

double activate_derivative(Activation a, double pre) {
  if (a == Activation::kRelu) return pre > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(pre);
  return 1.0 - t * t;
}

Matrix affine(const Matrix& w, const Matrix& b, const Matrix& x) {
  Matrix out = matmul(w, x);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double bi = b(i, 0);
    for (double& v : out.row(i)) v += bi;
  }
  return out;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation '" + name + "' (expected relu or tanh)");
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("MlpSpec: dims must be >= 1");
  for (auto h : hidden_dims)
    if (h < 1) throw std::invalid_argument("MlpSpec: hidden dims must be >= 1");
}

double MlpGrads::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights) s += squared_frobenius_norm(w);
  for (const auto& b : biases) s += squared_frobenius_norm(b);
  return s;
}

MlpParams init(const MlpSpec& spec) {
  spec.validate();
  MlpParams params;
  params.spec = spec;
  params.instance = next_instance.fetch_add(1);
  std::mt19937_64 rng(spec.seed);
  std::size_t fan_in = spec.input_dim;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t fan_out = l < spec.hidden_dims.size() ? spec.hidden_dims[l] : spec.output_dim;
    const double var = (spec.activation == Activation::kRelu ? 2.0 : 1.0) / static_cast<double>(fan_in);
    std::normal_distribution<double> gauss(0.0, std::sqrt(var));
    Matrix w(fan_out, fan_in);
    for (double& x : w.data()) x = gauss(rng);
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(fan_out, 1);
    fan_in = fan_out;
  }
  return params;
}

ForwardResult forward(const MlpParams& params, const Matrix& x) {
  if (x.rows() != params.spec.input_dim) {
    throw ShapeError("forward: input", x, params.weights.front());
  }
  ForwardResult out;
  out.cache.version = params.version;
  out.cache.instance = params.instance;
  const std::size_t layers = params.weights.size();
  Matrix a = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix pre = affine(params.weights[l], params.biases[l], a);
    out.cache.inputs.push_back(std::move(a));
    if (l + 1 < layers) {
      a = pre;
      for (double& v : a.data()) v = activate(params.spec.activation, v);
    } else {
      out.z = pre;
    }
    out.cache.pre.push_back(std::move(pre));
  }
  return out;
}

Matrix predict(const MlpParams& params, const Matrix& x) {
  if (x.rows() != params.spec.input_dim) throw ShapeError("predict: input", x, params.weights.front());
  Matrix a = x;
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    a = affine(params.weights[l], params.biases[l], a);
    if (l + 1 < layers)
      for (double& v : a.data()) v = activate(params.spec.activation, v);
  }
  return a;
}

BackwardResult backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_z) {
  if (cache.instance != params.instance || cache.version != params.version ||
      cache.pre.size() != params.weights.size()) {
    throw std::logic_error("backward: stale forward cache (parameters changed since forward)");
  }
  const std::size_t layers = params.weights.size();
  if (grad_z.rows() != cache.pre.back().rows() || grad_z.cols() != cache.pre.back().cols()) {
    throw ShapeError("backward: grad_z", grad_z, cache.pre.back());
  }
  BackwardResult out;
  out.grads.weights.resize(layers);
  out.grads.biases.resize(layers);
  Matrix delta = grad_z;  // gradient w.r.t. pre-activation of layer l
  for (std::size_t l = layers; l-- > 0;) {
    out.grads.weights[l] = matmul_nt(delta, cache.inputs[l]);
    Matrix gb(delta.rows(), 1);
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      double s = 0.0;
      for (double v : delta.row(i)) s += v;
      gb(i, 0) = s;
    }
    out.grads.biases[l] = std::move(gb);
    Matrix upstream = matmul_tn(params.weights[l], delta);
    if (l > 0) {
      const Matrix& pre = cache.pre[l - 1];
      for (std::size_t i = 0; i < upstream.size(); ++i)
        upstream.data()[i] *= activate_derivative(params.spec.activation, pre.data()[i]);
      delta = std::move(upstream);
    } else {
      out.grad_x = std::move(upstream);
    }
  }
  return out;
}

MlpGrads zero_grads(const MlpParams& params) {
  MlpGrads g;
  for (const auto& w : params.weights) g.weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : params.biases) g.biases.emplace_back(b.rows(), b.cols());
  return g;
}

AdamState adam_init(const MlpParams& params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  for (const auto& w : params.weights) {
    s.m_weights.emplace_back(w.rows(), w.cols());
    s.v_weights.emplace_back(w.rows(), w.cols());
  }
  for (const auto& b : params.biases) {
    s.m_biases.emplace_back(b.rows(), b.cols());
    s.v_biases.emplace_back(b.rows(), b.cols());
  }
  return s;
}

namespace {

void adam_update(const AdamConfig& c, double correction1, double correction2, Matrix& param,
                 const Matrix& grad, Matrix& m, Matrix& v) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) throw ShapeError("adam_step", param, grad);
  const double decay = 1.0 - c.lr * c.weight_decay;
  auto p = param.data();
  auto g = grad.data();
  auto md = m.data();
  auto vd = v.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * g[i];
    vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = md[i] / correction1;
    const double v_hat = vd[i] / correction2;
    p[i] = p[i] * decay - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace

void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads) {
  if (grads.weights.size() != params.weights.size() || grads.biases.size() != params.biases.size()) {
    throw std::invalid_argument("adam_step: gradient layer count does not match parameters");
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    adam_update(c, correction1, correction2, params.weights[l], grads.weights[l],
                state.m_weights[l], state.v_weights[l]);
    adam_update(c, correction1, correction2, params.biases[l], grads.biases[l], state.m_biases[l],
                state.v_biases[l]);
  }
  ++params.version;
}

void save_checkpoint(const std::string& dir, const std::string& name, const MlpParams& params,
                     std::size_t step) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["spec"] = {{"input_dim", params.spec.input_dim},
                      {"hidden_dims", params.spec.hidden_dims},
                      {"output_dim", params.spec.output_dim},
                      {"activation", to_string(params.spec.activation)}};
  manifest["seed"] = params.spec.seed;
  manifest["step"] = step;
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const std::string w = name + "_layer" + std::to_string(l) + "_weight.csv";
    const std::string b = name + "_layer" + std::to_string(l) + "_bias.csv";
    write_matrix_csv((fs::path(dir) / w).string(), params.weights[l]);
    write_matrix_csv((fs::path(dir) / b).string(), params.biases[l]);
    layers.push_back({{"weight", w}, {"bias", b}});
  }
  manifest["layers"] = layers;
  std::ofstream out(fs::path(dir) / (name + ".json"), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint manifest in " + dir);
  out << manifest.dump(2) << '\n';
}

MlpParams load_checkpoint(const std::string& dir, const std::string& name, std::size_t* step) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / (name + ".json");
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + manifest_path.string());
  auto manifest = nlohmann::json::parse(in);
  MlpSpec spec;
  const auto& js = manifest.at("spec");
  spec.input_dim = js.at("input_dim").get<std::size_t>();
  spec.hidden_dims = js.at("hidden_dims").get<std::vector<std::size_t>>();
  spec.output_dim = js.at("output_dim").get<std::size_t>();
  spec.activation = activation_from_string(js.at("activation").get<std::string>());
  spec.seed = manifest.at("seed").get<std::uint64_t>();
  spec.validate();
  MlpParams params = init(spec);
  const auto& layers = manifest.at("layers");
  if (layers.size() != params.weights.size()) {
    throw std::runtime_error(manifest_path.string() + ": layer count does not match spec");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix w = read_matrix_csv((fs::path(dir) / layers[l].at("weight").get<std::string>()).string());
    Matrix b = read_matrix_csv((fs::path(dir) / layers[l].at("bias").get<std::string>()).string());
    if (w.rows() != params.weights[l].rows() || w.cols() != params.weights[l].cols() ||
        b.rows() != params.biases[l].rows() || b.cols() != params.biases[l].cols()) {
      throw std::runtime_error(manifest_path.string() + ": layer " + std::to_string(l) +
                               " has the wrong shape");
    }
    params.weights[l] = std::move(w);
    params.biases[l] = std::move(b);
  }
  if (step) *step = manifest.at("step").get<std::size_t>();
  return params;
}

}  // namespace fcro
