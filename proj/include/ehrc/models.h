/*
 * Copyright 2026 The EHR Consensus Authors.
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

// Predictors over time-major inputs, trainers, metrics, stratified k-fold
// evaluation and the feature-family ablation harness.

#ifndef EHRC_MODELS_H_
#define EHRC_MODELS_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ehrc/encode.h"
#include "ehrc/nn.h"

namespace ehrc {

// steps[t] is subjects x features; every step has the same shape. Tensor
// inputs have 7 steps (oldest first), bag-of-words and flat inputs have 1.
struct SequenceData {
  std::vector<Eigen::MatrixXd> steps;

  static SequenceData single(Eigen::MatrixXd x);
  static SequenceData from_tensor(const SparseTemporalTensor& tensor);

  std::size_t n_steps() const { return steps.size(); }
  std::size_t n_subjects() const;
  std::size_t n_features() const;
  void validate() const;

  SequenceData rows(const std::vector<std::size_t>& subjects) const;
  SequenceData columns(const std::vector<std::size_t>& features) const;
  // Sum over steps: subjects x features.
  Eigen::MatrixXd summed() const;
};

struct TrainSpec {
  double learning_rate = 0.001;
  int epochs = 10;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;
  std::vector<std::size_t> units{100, 50};
  std::vector<double> dropout{0.1, 0.3};
  std::vector<std::size_t> dae_widths{500, 500, 500};
  double corruption = 0.05;
  // Pretraining epochs for the autoencoder.
  int dae_epochs = 30;
  // Inverse-prevalence sample weights.
  bool balance_classes = true;

  void validate() const;
};

// Per-feature z-score; zero-variance features get scale 1.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);  // rows are samples
  static Standardizer fit(const SequenceData& data);  // pooled over steps
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t n_features() const = 0;
  // Probability of the event class per subject, in [0, 1].
  virtual Eigen::VectorXd predict(const SequenceData& data) const = 0;
  // Text form starting with "ehrc-model <kind>".
  virtual void save(std::ostream& out) const = 0;
};

std::unique_ptr<Predictor> load_predictor(std::istream& in);

// Wraps an arbitrary scoring function; not serialisable.
class FunctionPredictor : public Predictor {
 public:
  using Fn = std::function<Eigen::VectorXd(const SequenceData&)>;
  FunctionPredictor(std::size_t n_features, Fn fn, std::string kind = "function")
      : n_features_(n_features), fn_(std::move(fn)), kind_(std::move(kind)) {}
  std::string kind() const override { return kind_; }
  std::size_t n_features() const override { return n_features_; }
  Eigen::VectorXd predict(const SequenceData& data) const override;
  void save(std::ostream& out) const override;

 private:
  std::size_t n_features_;
  Fn fn_;
  std::string kind_;
};

// Logistic regression on step-summed, standardized features.
class LogisticModel {
 public:
  LogisticModel() = default;
  // Zero-initialised.
  explicit LogisticModel(std::size_t n_features);

  Eigen::VectorXd probability(const Eigen::MatrixXd& z) const;  // z: samples x features
  // Weighted mean log loss; accumulates gradients.
  double loss_and_grad(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w);
  std::vector<nn::Param*> params() { return {&w_, &b_}; }
  std::vector<const nn::Param*> params() const { return {&w_, &b_}; }
  const nn::Param& weights() const { return w_; }
  const nn::Param& bias() const { return b_; }

 private:
  nn::Param w_;
  nn::Param b_;
};

class LogisticPredictor : public Predictor {
 public:
  LogisticPredictor(Standardizer standardizer, LogisticModel model)
      : standardizer_(std::move(standardizer)), model_(std::move(model)) {}
  std::string kind() const override { return "logistic"; }
  std::size_t n_features() const override {
    return static_cast<std::size_t>(standardizer_.mean.size());
  }
  Eigen::VectorXd predict(const SequenceData& data) const override;
  void save(std::ostream& out) const override;

  // Coefficients and intercept on the raw step-summed scale.
  Eigen::VectorXd raw_coefficients() const;
  double raw_intercept() const;

  const Standardizer& standardizer() const { return standardizer_; }
  LogisticModel& model() { return model_; }
  const LogisticModel& model() const { return model_; }

 private:
  Standardizer standardizer_;
  LogisticModel model_;
};

// Stacked gated recurrent layers with inverted dropout after each and a
// 2-logit head on the last hidden state.
class RecurrentNet {
 public:
  RecurrentNet() = default;
  RecurrentNet(std::size_t n_inputs, const std::vector<std::size_t>& units,
               std::vector<double> dropout, Rng& rng);

  // xs[t] is features x batch (already standardized).
  Eigen::MatrixXd logits(const std::vector<Eigen::MatrixXd>& xs) const;
  // With `rng` null dropout is disabled.
  double loss_and_grad(const std::vector<Eigen::MatrixXd>& xs,
                       const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                       Rng* dropout_rng);
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;

  std::size_t n_inputs() const;
  const std::vector<std::size_t>& units() const { return units_; }
  const std::vector<double>& dropout() const { return dropout_; }

 private:
  std::vector<std::size_t> units_;
  std::vector<double> dropout_;
  std::vector<nn::GruLayer> grus_;
  nn::DenseLayer head_;
};

// Symmetric denoising autoencoder: sigmoid encoder layers, mirrored decoder
// with a linear output.
class DenoisingAutoencoder {
 public:
  DenoisingAutoencoder() = default;
  DenoisingAutoencoder(std::size_t n_inputs, const std::vector<std::size_t>& widths,
                       Rng& rng);

  // x: features x batch.
  Eigen::MatrixXd encode(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& x) const;
  // Mean squared reconstruction error of `clean` from `input`; accumulates
  // gradients.
  double loss_and_grad(const Eigen::MatrixXd& input, const Eigen::MatrixXd& clean);
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;
  std::vector<nn::Param*> encoder_params();
  std::vector<const nn::Param*> encoder_params() const;

  std::size_t n_inputs() const;
  const std::vector<std::size_t>& widths() const { return widths_; }

 private:
  std::vector<std::size_t> widths_;
  std::vector<nn::DenseLayer> encoder_;
  std::vector<nn::DenseLayer> decoder_;
};

class RecurrentPredictor : public Predictor {
 public:
  RecurrentPredictor(Standardizer standardizer, RecurrentNet net,
                     std::optional<DenoisingAutoencoder> encoder = std::nullopt)
      : standardizer_(std::move(standardizer)),
        net_(std::move(net)),
        encoder_(std::move(encoder)) {}
  std::string kind() const override {
    return encoder_ ? "deep_patient" : "recurrent";
  }
  std::size_t n_features() const override {
    return static_cast<std::size_t>(standardizer_.mean.size());
  }
  Eigen::VectorXd predict(const SequenceData& data) const override;
  void save(std::ostream& out) const override;

  RecurrentNet& net() { return net_; }

 private:
  Standardizer standardizer_;
  RecurrentNet net_;
  std::optional<DenoisingAutoencoder> encoder_;
};

// Each cell zeroed independently with probability `rate`.
Eigen::MatrixXd corrupt_mask(const Eigen::MatrixXd& x, double rate, std::uint64_t seed);

struct PretrainResult {
  Standardizer standardizer;
  DenoisingAutoencoder autoencoder;
  std::vector<double> epoch_loss;  // mean reconstruction loss per epoch
};

// x: samples x features (raw). Uses spec.dae_epochs, batch_size, learning_rate,
// seed; corruption happens on the raw scale before standardizing.
PretrainResult pretrain_denoising_autoencoder(const Eigen::MatrixXd& x,
                                              const std::vector<std::size_t>& widths,
                                              double rate, const TrainSpec& spec);

std::unique_ptr<LogisticPredictor> train_logistic(const SequenceData& data,
                                                  const Eigen::VectorXd& y,
                                                  const TrainSpec& spec);
std::unique_ptr<RecurrentPredictor> train_recurrent(const SequenceData& data,
                                                    const Eigen::VectorXd& y,
                                                    const TrainSpec& spec);
// Autoencoder pretrained on every (subject, step) row, then the recurrent
// classifier on the encoded steps.
std::unique_ptr<RecurrentPredictor> train_deep_patient(const SequenceData& data,
                                                       const Eigen::VectorXd& y,
                                                       const TrainSpec& spec);

// ---- metrics ----------------------------------------------------------------

// Rank statistic with midranks for ties. Throws ValidationError on
// single-class labels.
double auc_score(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

struct Metrics {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;  // empty when only one class is present
};

// Predicted positive iff score >= threshold. Undefined ratios are 0.
Metrics compute_metrics(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                        double threshold = 0.5);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single value
};
MeanSd mean_sd(const std::vector<double>& values);

struct MetricsReport {
  MeanSd sensitivity;
  MeanSd specificity;
  MeanSd f1;
  MeanSd auc;
  std::vector<Metrics> folds;
  friend bool operator==(const MetricsReport& a, const MetricsReport& b);
};
MetricsReport summarize(std::vector<Metrics> folds);

// Fold id per subject; each class is shuffled and dealt round-robin.
std::vector<int> stratified_folds(const Eigen::VectorXd& labels, int k,
                                  std::uint64_t seed);

using Trainer = std::function<std::unique_ptr<Predictor>(
    const SequenceData& train, const Eigen::VectorXd& y, std::uint64_t seed)>;

// Folds run concurrently; each uses the seed derived from (seed, fold).
MetricsReport kfold_evaluate(const Trainer& trainer, const SequenceData& data,
                             const Eigen::VectorXd& labels, int k, std::uint64_t seed);
MetricsReport kfold_evaluate_serial(const Trainer& trainer, const SequenceData& data,
                                    const Eigen::VectorXd& labels, int k,
                                    std::uint64_t seed);

struct FeatureSubset {
  std::string name;
  std::vector<Family> families;
};

// The ten feature-family subsets, in order.
const std::vector<FeatureSubset>& ablation_subsets();

struct AblationRow {
  FeatureSubset subset;
  std::size_t n_features = 0;
  MetricsReport report;
};

std::vector<AblationRow> ablation_run(const SequenceData& data,
                                      const FeatureVocabulary& vocab,
                                      const Eigen::VectorXd& labels,
                                      const Trainer& trainer, int k, std::uint64_t seed,
                                      const std::vector<FeatureSubset>& subsets =
                                          ablation_subsets());

}  // namespace ehrc

#endif  // EHRC_MODELS_H_
