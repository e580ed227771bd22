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

#ifndef ADADFQ_NN_H_
#define ADADFQ_NN_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "adadfq/quantizer.h"
#include "adadfq/rng.h"
#include "adadfq/tensor.h"

namespace adadfq {

enum class Mode { kTrain, kEval };

// Fake quantization of a linear layer's weights and output activation.
struct LinearQuant {
  QuantSpec spec;
  FakeQuantState output_state;
};

struct LinearLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  std::optional<LinearQuant> quant;

  std::size_t in_features() const { return weight.cols(); }
  std::size_t out_features() const { return weight.rows(); }
};

// Running statistics follow
//   running = (1 - momentum) * running + momentum * batch_stat
// with the biased batch variance, the same estimator used to normalize.
struct BatchNormLayer {
  Tensor gamma;  // [d]
  Tensor beta;   // [d]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  // Always normalize with the running statistics, even in train mode.
  bool frozen_stats = false;

  std::size_t features() const { return running_mean.size(); }
};

struct ReluLayer {};

using Layer = std::variant<LinearLayer, BatchNormLayer, ReluLayer>;

struct ForwardOptions {
  // When set, receives the input of every BatchNormLayer in order.
  std::vector<Tensor>* bn_inputs = nullptr;
  // Train mode only: update BN running statistics and activation ranges.
  bool update_statistics = true;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Feed-forward stack of linear, batch-norm and ReLU layers. Parameters are
// shared Tensor handles, so copying is disabled; use clone().
class MlpNetwork {
 public:
  MlpNetwork() = default;
  MlpNetwork(std::size_t input_dim, std::size_t output_dim,
             std::vector<Layer> layers);
  MlpNetwork(MlpNetwork&&) = default;
  MlpNetwork& operator=(MlpNetwork&&) = default;
  MlpNetwork(const MlpNetwork&) = delete;
  MlpNetwork& operator=(const MlpNetwork&) = delete;

  // input -> [Linear -> BN -> ReLU] x hidden.size() -> Linear -> output.
  static MlpNetwork make(std::size_t input_dim,
                         const std::vector<std::size_t>& hidden,
                         std::size_t output_dim, SeededRng& init_rng);

  Tensor forward(const Tensor& x, const ForwardOptions& options = {});

  std::vector<Tensor> parameters() const;
  // Trainable parameters plus BN running statistics, as stable names
  // ("layers.<i>.weight", "layers.<i>.running_mean", ...).
  std::vector<NamedTensor> state() const;

  void set_mode(Mode mode) { mode_ = mode; }
  Mode mode() const { return mode_; }
  void set_requires_grad(bool requires_grad);
  void zero_grad();

  MlpNetwork clone() const;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  std::size_t num_batch_norm_layers() const;
  std::vector<const BatchNormLayer*> batch_norm_layers() const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<Layer> layers_;
  Mode mode_ = Mode::kTrain;
};

// Label-conditioned generator: x = body(concat(z, y * embedding)).
class ConditionalGenerator {
 public:
  ConditionalGenerator() = default;
  ConditionalGenerator(Tensor embedding, MlpNetwork body, std::size_t noise_dim);
  ConditionalGenerator(ConditionalGenerator&&) = default;
  ConditionalGenerator& operator=(ConditionalGenerator&&) = default;

  static ConditionalGenerator make(std::size_t num_classes,
                                   std::size_t noise_dim,
                                   std::size_t embed_dim,
                                   const std::vector<std::size_t>& hidden,
                                   std::size_t output_dim, SeededRng& init_rng);

  // `labels` must be one-hot rows ([B x C]); throws ContractError otherwise.
  Tensor generate(const Tensor& noise, const Tensor& labels,
                  const ForwardOptions& options = {});

  std::vector<Tensor> parameters() const;
  std::vector<NamedTensor> state() const;
  void set_mode(Mode mode) { body_.set_mode(mode); }
  void zero_grad();

  std::size_t noise_dim() const { return noise_dim_; }
  std::size_t num_classes() const { return embedding_.rows(); }
  std::size_t output_dim() const { return body_.output_dim(); }
  const Tensor& embedding() const { return embedding_; }
  MlpNetwork& body() { return body_; }
  const MlpNetwork& body() const { return body_; }

 private:
  Tensor embedding_;  // [C x e]
  MlpNetwork body_;
  std::size_t noise_dim_ = 0;
};

class Optimizer {
 public:
  explicit Optimizer(std::vector<Tensor> params);
  virtual ~Optimizer() = default;

  // Throws ContractError if any parameter has no gradient.
  virtual void step() = 0;
  void zero_grad();

 protected:
  void require_grads() const;
  std::vector<Tensor> params_;
};

// SGD with momentum in the reformulated Nesterov form:
//   g = grad + weight_decay * w
//   v = momentum * v + g
//   w -= lr * (g + momentum * v)        (nesterov)
//   w -= lr * v                         (plain heavy ball)
class SgdMomentum : public Optimizer {
 public:
  SgdMomentum(std::vector<Tensor> params, double lr, double momentum = 0.9,
              double weight_decay = 1e-4, bool nesterov = true);
  void step() override;
  double lr() const { return lr_; }

 private:
  double lr_, momentum_, weight_decay_;
  bool nesterov_;
  std::vector<std::vector<double>> velocity_;
};

// Adam with bias correction.
class AdamOptimizer : public Optimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double lr = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step() override;

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Mean softmax cross-entropy against integer labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Rows of `labels` as one-hot [B x C].
Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes);

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

// Minibatch Adam on cross-entropy; the sample order is reshuffled every
// epoch from `seed`. Returns the mean loss of the final epoch.
double train_classifier(MlpNetwork& net, const Tensor& x,
                        const std::vector<int>& labels,
                        const TrainOptions& options);

// Eval-mode argmax predictions.
std::vector<int> predict(MlpNetwork& net, const Tensor& x);
double accuracy(MlpNetwork& net, const Tensor& x, const std::vector<int>& labels);

}  // namespace adadfq

#endif  // ADADFQ_NN_H_
