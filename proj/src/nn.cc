// Copyright 2026 The AdaDFQ Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adadfq/nn.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "adadfq/errors.h"

namespace adadfq {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Tensor uniform_tensor(Shape shape, double bound, SeededRng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = (2.0 * rng.uniform() - 1.0) * bound;
  return Tensor(std::move(shape), std::move(values), true);
}

LinearLayer make_linear(std::size_t in, std::size_t out, SeededRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  LinearLayer layer;
  layer.weight = uniform_tensor({out, in}, bound, rng);
  layer.bias = uniform_tensor({out}, bound, rng);
  return layer;
}

BatchNormLayer make_batch_norm(std::size_t d) {
  BatchNormLayer bn;
  bn.gamma = Tensor::full({d}, 1.0, true);
  bn.beta = Tensor::zeros({d}, true);
  bn.running_mean.assign(d, 0.0);
  bn.running_var.assign(d, 1.0);
  return bn;
}

Tensor linear_forward(LinearLayer& layer, const Tensor& x, bool observe) {
  if (!layer.quant) {
    return add_rowwise(matmul(x, transpose(layer.weight)), layer.bias);
  }
  Tensor weight = fake_quant_weights(layer.weight, layer.quant->spec);
  Tensor out = add_rowwise(matmul(x, transpose(weight)), layer.bias);
  return fake_quant_activation(out, layer.quant->spec, layer.quant->output_state,
                               observe);
}

Tensor batch_norm_forward(BatchNormLayer& bn, const Tensor& x, bool training,
                          bool update) {
  const std::size_t d = bn.features();
  Tensor mean_t, var_t;
  if (training && !bn.frozen_stats) {
    if (x.rows() < 2) {
      throw ContractError("batch norm in train mode needs at least 2 rows");
    }
    mean_t = column_mean(x);
    var_t = column_var(x);
    if (update) {
      for (std::size_t j = 0; j < d; ++j) {
        bn.running_mean[j] = (1.0 - bn.momentum) * bn.running_mean[j] +
                             bn.momentum * mean_t.at(j);
        bn.running_var[j] = (1.0 - bn.momentum) * bn.running_var[j] +
                            bn.momentum * var_t.at(j);
      }
    }
  } else {
    mean_t = Tensor({d}, bn.running_mean);
    var_t = Tensor({d}, bn.running_var);
  }
  Tensor normalized =
      div_rowwise(sub_rowwise(x, mean_t), sqrt(add_scalar(var_t, bn.eps)));
  return add_rowwise(mul_rowwise(normalized, bn.gamma), bn.beta);
}

std::size_t layer_input_width(const Layer& layer) {
  return std::visit(
      Overloaded{[](const LinearLayer& l) { return l.in_features(); },
                 [](const BatchNormLayer& b) { return b.features(); },
                 [](const ReluLayer&) { return std::size_t{0}; }},
      layer);
}

}  // namespace

MlpNetwork::MlpNetwork(std::size_t input_dim, std::size_t output_dim,
                       std::vector<Layer> layers)
    : input_dim_(input_dim), output_dim_(output_dim), layers_(std::move(layers)) {
  std::size_t width = input_dim_;
  for (const Layer& layer : layers_) {
    std::size_t expected = layer_input_width(layer);
    if (expected != 0 && expected != width) {
      throw DimensionError("layer expects width " + std::to_string(expected) +
                           " but receives " + std::to_string(width));
    }
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
      if (lin->bias.numel() != lin->out_features()) {
        throw DimensionError("linear bias " + shape_string(lin->bias.shape()) +
                             " does not match weight " +
                             shape_string(lin->weight.shape()));
      }
      width = lin->out_features();
    }
  }
  if (width != output_dim_) {
    throw DimensionError("network ends at width " + std::to_string(width) +
                         ", declared output " + std::to_string(output_dim_));
  }
}

MlpNetwork MlpNetwork::make(std::size_t input_dim,
                            const std::vector<std::size_t>& hidden,
                            std::size_t output_dim, SeededRng& init_rng) {
  std::vector<Layer> layers;
  std::size_t width = input_dim;
  for (std::size_t h : hidden) {
    layers.emplace_back(make_linear(width, h, init_rng));
    layers.emplace_back(make_batch_norm(h));
    layers.emplace_back(ReluLayer{});
    width = h;
  }
  layers.emplace_back(make_linear(width, output_dim, init_rng));
  return MlpNetwork(input_dim, output_dim, std::move(layers));
}

Tensor MlpNetwork::forward(const Tensor& x, const ForwardOptions& options) {
  if (x.rank() != 2 || x.cols() != input_dim_) {
    throw DimensionError("network input width " + std::to_string(input_dim_) +
                         " does not accept " + shape_string(x.shape()));
  }
  const bool training = mode_ == Mode::kTrain;
  const bool update = training && options.update_statistics;
  Tensor h = x;
  for (Layer& layer : layers_) {
    h = std::visit(
        Overloaded{
            [&](LinearLayer& l) { return linear_forward(l, h, update); },
            [&](BatchNormLayer& b) {
              if (options.bn_inputs) options.bn_inputs->push_back(h);
              return batch_norm_forward(b, h, training, update);
            },
            [&](ReluLayer&) { return relu(h); }},
        layer);
  }
  return h;
}

std::vector<Tensor> MlpNetwork::parameters() const {
  std::vector<Tensor> out;
  for (const Layer& layer : layers_) {
    if (const auto* l = std::get_if<LinearLayer>(&layer)) {
      out.push_back(l->weight);
      out.push_back(l->bias);
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
      out.push_back(b->gamma);
      out.push_back(b->beta);
    }
  }
  return out;
}

std::vector<NamedTensor> MlpNetwork::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "layers." + std::to_string(i) + ".";
    if (const auto* l = std::get_if<LinearLayer>(&layers_[i])) {
      out.push_back({prefix + "weight", l->weight});
      out.push_back({prefix + "bias", l->bias});
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layers_[i])) {
      const Shape s{b->features()};
      out.push_back({prefix + "gamma", b->gamma});
      out.push_back({prefix + "beta", b->beta});
      out.push_back({prefix + "running_mean", Tensor(s, b->running_mean)});
      out.push_back({prefix + "running_var", Tensor(s, b->running_var)});
    }
  }
  return out;
}

void MlpNetwork::set_requires_grad(bool requires_grad) {
  for (Tensor& p : parameters()) p.set_requires_grad(requires_grad);
}

void MlpNetwork::zero_grad() {
  for (Tensor& p : parameters()) p.zero_grad();
}

MlpNetwork MlpNetwork::clone() const {
  std::vector<Layer> layers;
  for (const Layer& layer : layers_) {
    layers.push_back(std::visit(
        Overloaded{
            [](const LinearLayer& l) -> Layer {
              LinearLayer c = l;
              c.weight = l.weight.detach().set_requires_grad(l.weight.requires_grad());
              c.bias = l.bias.detach().set_requires_grad(l.bias.requires_grad());
              return c;
            },
            [](const BatchNormLayer& b) -> Layer {
              BatchNormLayer c = b;
              c.gamma = b.gamma.detach().set_requires_grad(b.gamma.requires_grad());
              c.beta = b.beta.detach().set_requires_grad(b.beta.requires_grad());
              return c;
            },
            [](const ReluLayer& r) -> Layer { return r; }},
        layer));
  }
  MlpNetwork copy(input_dim_, output_dim_, std::move(layers));
  copy.mode_ = mode_;
  return copy;
}

std::size_t MlpNetwork::num_batch_norm_layers() const {
  return batch_norm_layers().size();
}

std::vector<const BatchNormLayer*> MlpNetwork::batch_norm_layers() const {
  std::vector<const BatchNormLayer*> out;
  for (const Layer& layer : layers_) {
    if (const auto* b = std::get_if<BatchNormLayer>(&layer)) out.push_back(b);
  }
  return out;
}

// ---- ConditionalGenerator --------------------------------------------------

ConditionalGenerator::ConditionalGenerator(Tensor embedding, MlpNetwork body,
                                           std::size_t noise_dim)
    : embedding_(std::move(embedding)), body_(std::move(body)),
      noise_dim_(noise_dim) {
  if (embedding_.rank() != 2 ||
      body_.input_dim() != noise_dim_ + embedding_.cols()) {
    throw DimensionError("generator body input " +
                         std::to_string(body_.input_dim()) +
                         " != noise " + std::to_string(noise_dim_) +
                         " + embedding " + shape_string(embedding_.shape()));
  }
}

ConditionalGenerator ConditionalGenerator::make(
    std::size_t num_classes, std::size_t noise_dim, std::size_t embed_dim,
    const std::vector<std::size_t>& hidden, std::size_t output_dim,
    SeededRng& init_rng) {
  std::vector<double> table(num_classes * embed_dim);
  for (double& v : table) v = init_rng.normal();
  Tensor embedding({num_classes, embed_dim}, std::move(table), true);
  MlpNetwork body =
      MlpNetwork::make(noise_dim + embed_dim, hidden, output_dim, init_rng);
  return ConditionalGenerator(std::move(embedding), std::move(body), noise_dim);
}

Tensor ConditionalGenerator::generate(const Tensor& noise, const Tensor& labels,
                                      const ForwardOptions& options) {
  if (noise.rank() != 2 || noise.cols() != noise_dim_) {
    throw DimensionError("generator expects noise [B x " +
                         std::to_string(noise_dim_) + "], got " +
                         shape_string(noise.shape()));
  }
  if (labels.rank() != 2 || labels.cols() != num_classes() ||
      labels.rows() != noise.rows()) {
    throw DimensionError("generator expects labels [" +
                         std::to_string(noise.rows()) + " x " +
                         std::to_string(num_classes()) + "], got " +
                         shape_string(labels.shape()));
  }
  auto y = labels.data();
  const std::size_t c = num_classes();
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    int ones = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = y[i * c + j];
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) {
      throw ContractError("label row " + std::to_string(i) + " is not one-hot");
    }
  }
  Tensor embedded = matmul(labels, embedding_);
  return body_.forward(concat_cols(noise, embedded), options);
}

std::vector<Tensor> ConditionalGenerator::parameters() const {
  std::vector<Tensor> out{embedding_};
  for (Tensor& p : body_.parameters()) out.push_back(p);
  return out;
}

std::vector<NamedTensor> ConditionalGenerator::state() const {
  std::vector<NamedTensor> out{{"embedding", embedding_}};
  for (NamedTensor& t : body_.state()) {
    out.push_back({"body." + t.name, t.tensor});
  }
  return out;
}

void ConditionalGenerator::zero_grad() {
  embedding_.zero_grad();
  body_.zero_grad();
}

// ---- Optimizers ------------------------------------------------------------

Optimizer::Optimizer(std::vector<Tensor> params) : params_(std::move(params)) {}

void Optimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Optimizer::require_grads() const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("optimizer step: parameter " + std::to_string(i) +
                          " " + shape_string(params_[i].shape()) +
                          " has no gradient");
    }
  }
}

SgdMomentum::SgdMomentum(std::vector<Tensor> params, double lr,
                         double momentum, double weight_decay, bool nesterov)
    : Optimizer(std::move(params)), lr_(lr), momentum_(momentum),
      weight_decay_(weight_decay), nesterov_(nesterov) {
  for (const Tensor& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void SgdMomentum::step() {
  require_grads();
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].mutable_data();
    auto g = params_[k].grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = g[i] + weight_decay_ * w[i];
      v[i] = momentum_ * v[i] + d;
      w[i] -= lr_ * (nesterov_ ? d + momentum_ * v[i] : v[i]);
    }
  }
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr,
                             double beta1, double beta2, double eps)
    : Optimizer(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  require_grads();
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].mutable_data();
    auto g = params_[k].grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
      const double m_hat = m_[k][i] / c1;
      const double v_hat = v_[k][i] / c2;
      w[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

// ---- Losses ----------------------------------------------------------------

Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes) {
  std::vector<double> values(labels.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ContractError("label " + std::to_string(labels[i]) +
                          " outside [0, " + std::to_string(num_classes) + ")");
    }
    values[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor({labels.size(), num_classes}, std::move(values));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw DimensionError("cross_entropy: " + shape_string(logits.shape()) +
                         " logits for " + std::to_string(labels.size()) +
                         " labels");
  }
  Tensor picked = row_sum(mul(log_softmax(logits), one_hot(labels, logits.cols())));
  return neg(mean(picked));
}

// ---- Supervised training ---------------------------------------------------

double train_classifier(MlpNetwork& net, const Tensor& x,
                        const std::vector<int>& labels,
                        const TrainOptions& options) {
  if (x.rank() != 2 || x.rows() != labels.size()) {
    throw DimensionError("train_classifier: " + shape_string(x.shape()) +
                         " features for " + std::to_string(labels.size()) +
                         " labels");
  }
  if (options.epochs == 0 || options.batch_size < 2) {
    throw ConfigError("train_classifier: need epochs >= 1 and batch_size >= 2");
  }
  const std::size_t n = labels.size(), d = x.cols();
  SeededRng rng = SeededRng(options.seed).substream(Stream::kSplit);
  AdamOptimizer opt(net.parameters(), options.lr);
  net.set_mode(Mode::kTrain);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto xs = x.data();
  double last_epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 2 <= n; start += options.batch_size) {
      const std::size_t end = std::min(n, start + options.batch_size);
      std::vector<double> bx;
      std::vector<int> by;
      bx.reserve((end - start) * d);
      for (std::size_t k = start; k < end; ++k) {
        auto row = xs.subspan(order[k] * d, d);
        bx.insert(bx.end(), row.begin(), row.end());
        by.push_back(labels[order[k]]);
      }
      Tensor loss = cross_entropy(net.forward(Tensor({end - start, d}, std::move(bx))), by);
      opt.zero_grad();
      loss.backward();
      opt.step();
      loss_sum += loss.item();
      ++batches;
    }
    last_epoch_loss = loss_sum / static_cast<double>(batches);
  }
  net.set_mode(Mode::kEval);
  return last_epoch_loss;
}

std::vector<int> predict(MlpNetwork& net, const Tensor& x) {
  NoGradGuard no_grad;
  const Mode previous = net.mode();
  net.set_mode(Mode::kEval);
  ForwardOptions opts;
  opts.update_statistics = false;
  auto idx = argmax_rows(net.forward(x, opts));
  net.set_mode(previous);
  return {idx.begin(), idx.end()};
}

double accuracy(MlpNetwork& net, const Tensor& x, const std::vector<int>& labels) {
  if (labels.empty()) throw ContractError("accuracy: no samples");
  auto pred = predict(net, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace adadfq
