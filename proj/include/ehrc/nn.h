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

// Small neural-network toolkit: parameters with Adam state, gated recurrent
// and dense layers with hand-written backward passes, dropout, and the
// two-logit softmax head. Activations are laid out units x batch.

#ifndef EHRC_NN_H_
#define EHRC_NN_H_

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ehrc/random.h"

namespace ehrc::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;
  Mat v;

  Param() = default;
  Param(std::string n, Mat init);
  void zero_grad() { grad.setZero(); }
};

// Glorot-uniform rows x cols matrix.
Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng);

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-7)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}
  void step(const std::vector<Param*>& params);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
};

// h' = (1 - z) * h + z * tanh(Wh x + Uh (r * h) + bh), with
// z = sigmoid(Wz x + Uz h + bz) and r = sigmoid(Wr x + Ur h + br).
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(Eigen::Index inputs, Eigen::Index units, Rng& rng);

  struct Cache {
    std::vector<Mat> x, h_prev, z, r, cand;
  };

  Eigen::Index inputs() const { return wz_.value.cols(); }
  Eigen::Index units() const { return wz_.value.rows(); }

  // Hidden state after every step; h starts at zero.
  std::vector<Mat> forward(const std::vector<Mat>& xs, Cache* cache) const;
  // d_outputs[t] is dLoss/dh_t (zero matrices allowed). Accumulates
  // parameter gradients and returns dLoss/dx_t.
  std::vector<Mat> backward(const Cache& cache, const std::vector<Mat>& d_outputs);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;

 private:
  Param wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_;
};

enum class Activation { kLinear, kSigmoid, kRelu, kTanh };

class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(Eigen::Index inputs, Eigen::Index outputs, Activation act, Rng& rng,
             std::string name = "dense");

  struct Cache {
    Mat x, y;
  };

  Eigen::Index inputs() const { return w_.value.cols(); }
  Eigen::Index outputs() const { return w_.value.rows(); }
  Activation activation() const { return act_; }

  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Cache& cache, const Mat& dy);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;

 private:
  Param w_, b_;
  Activation act_ = Activation::kLinear;
};

// Inverted-dropout mask (entries 0 or 1/(1-rate)).
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

// Two-logit softmax probability of class 1 per column.
Vec softmax_positive(const Mat& logits);

// Weighted cross-entropy mean over the batch; fills dLoss/dlogits.
double softmax_cross_entropy(const Mat& logits, const Vec& labels,
                             const Vec& weights, Mat* d_logits);

// Flat parameter (de)serialisation: "param <name> <rows> <cols>" then values.
void write_params(std::ostream& out, const std::vector<const Param*>& params);
void read_params(std::istream& in, const std::vector<Param*>& params);

}  // namespace ehrc::nn

#endif  // EHRC_NN_H_
