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

#include "ehrc/nn.h"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "ehrc/core.h"

namespace ehrc::nn {
namespace {

Mat sigmoid(const Mat& a) {
  return a.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Mat zeros_like(const Mat& m) { return Mat::Zero(m.rows(), m.cols()); }

}  // namespace

Param::Param(std::string n, Mat init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(zeros_like(value)),
      m(zeros_like(value)),
      v(zeros_like(value)) {}

Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      out(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
    }
  }
  return out;
}

void Adam::step(const std::vector<Param*>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params) {
    p->m = beta1_ * p->m + (1.0 - beta1_) * p->grad;
    p->v = beta2_ * p->v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    p->value.array() -=
        lr_ * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + eps_);
  }
}

GruLayer::GruLayer(Eigen::Index inputs, Eigen::Index units, Rng& rng)
    : wz_("gru.wz", glorot(units, inputs, rng)),
      uz_("gru.uz", glorot(units, units, rng)),
      bz_("gru.bz", Mat::Zero(units, 1)),
      wr_("gru.wr", glorot(units, inputs, rng)),
      ur_("gru.ur", glorot(units, units, rng)),
      br_("gru.br", Mat::Zero(units, 1)),
      wh_("gru.wh", glorot(units, inputs, rng)),
      uh_("gru.uh", glorot(units, units, rng)),
      bh_("gru.bh", Mat::Zero(units, 1)) {}

std::vector<Mat> GruLayer::forward(const std::vector<Mat>& xs, Cache* cache) const {
  const Eigen::Index batch = xs.empty() ? 0 : xs.front().cols();
  Mat h = Mat::Zero(units(), batch);
  std::vector<Mat> out;
  out.reserve(xs.size());
  if (cache != nullptr) *cache = Cache{};
  for (const Mat& x : xs) {
    Mat z = sigmoid((wz_.value * x + uz_.value * h).colwise() + bz_.value.col(0));
    Mat r = sigmoid((wr_.value * x + ur_.value * h).colwise() + br_.value.col(0));
    Mat cand = ((wh_.value * x + uh_.value * r.cwiseProduct(h)).colwise() +
                bh_.value.col(0))
                   .array()
                   .tanh()
                   .matrix();
    Mat next = h + z.cwiseProduct(cand - h);
    if (cache != nullptr) {
      cache->x.push_back(x);
      cache->h_prev.push_back(h);
      cache->z.push_back(std::move(z));
      cache->r.push_back(std::move(r));
      cache->cand.push_back(std::move(cand));
    }
    out.push_back(next);
    h = std::move(next);
  }
  return out;
}

std::vector<Mat> GruLayer::backward(const Cache& cache,
                                    const std::vector<Mat>& d_outputs) {
  const std::size_t steps = cache.x.size();
  std::vector<Mat> dxs(steps);
  Mat dh_next;
  for (std::size_t s = steps; s-- > 0;) {
    const Mat& x = cache.x[s];
    const Mat& h = cache.h_prev[s];
    const Mat& z = cache.z[s];
    const Mat& r = cache.r[s];
    const Mat& cand = cache.cand[s];

    Mat dh = d_outputs[s];
    if (dh_next.size() != 0) dh += dh_next;

    const Mat d_cand = dh.cwiseProduct(z);
    const Mat dz = dh.cwiseProduct(cand - h);
    Mat dh_prev = dh.cwiseProduct(Mat::Ones(z.rows(), z.cols()) - z);

    const Mat da_h = d_cand.array() * (1.0 - cand.array().square());
    const Mat rh = r.cwiseProduct(h);
    wh_.grad += da_h * x.transpose();
    uh_.grad += da_h * rh.transpose();
    bh_.grad += da_h.rowwise().sum();
    const Mat d_rh = uh_.value.transpose() * da_h;
    const Mat dr = d_rh.cwiseProduct(h);
    dh_prev += d_rh.cwiseProduct(r);

    const Mat da_z = dz.array() * z.array() * (1.0 - z.array());
    const Mat da_r = dr.array() * r.array() * (1.0 - r.array());
    wz_.grad += da_z * x.transpose();
    uz_.grad += da_z * h.transpose();
    bz_.grad += da_z.rowwise().sum();
    wr_.grad += da_r * x.transpose();
    ur_.grad += da_r * h.transpose();
    br_.grad += da_r.rowwise().sum();
    dh_prev += uz_.value.transpose() * da_z + ur_.value.transpose() * da_r;

    dxs[s] = wz_.value.transpose() * da_z + wr_.value.transpose() * da_r +
             wh_.value.transpose() * da_h;
    dh_next = std::move(dh_prev);
  }
  return dxs;
}

std::vector<Param*> GruLayer::params() {
  return {&wz_, &uz_, &bz_, &wr_, &ur_, &br_, &wh_, &uh_, &bh_};
}

std::vector<const Param*> GruLayer::params() const {
  return {&wz_, &uz_, &bz_, &wr_, &ur_, &br_, &wh_, &uh_, &bh_};
}

DenseLayer::DenseLayer(Eigen::Index inputs, Eigen::Index outputs, Activation act,
                       Rng& rng, std::string name)
    : w_(name + ".w", glorot(outputs, inputs, rng)),
      b_(name + ".b", Mat::Zero(outputs, 1)),
      act_(act) {}

Mat DenseLayer::forward(const Mat& x, Cache* cache) const {
  Mat a = (w_.value * x).colwise() + b_.value.col(0);
  switch (act_) {
    case Activation::kLinear: break;
    case Activation::kSigmoid: a = sigmoid(a); break;
    case Activation::kRelu: a = a.cwiseMax(0.0); break;
    case Activation::kTanh: a = a.array().tanh().matrix(); break;
  }
  if (cache != nullptr) {
    cache->x = x;
    cache->y = a;
  }
  return a;
}

Mat DenseLayer::backward(const Cache& cache, const Mat& dy) {
  Mat da;
  switch (act_) {
    case Activation::kLinear: da = dy; break;
    case Activation::kSigmoid:
      da = dy.array() * cache.y.array() * (1.0 - cache.y.array());
      break;
    case Activation::kRelu:
      da = dy.array() * (cache.y.array() > 0.0).cast<double>();
      break;
    case Activation::kTanh:
      da = dy.array() * (1.0 - cache.y.array().square());
      break;
  }
  w_.grad += da * cache.x.transpose();
  b_.grad += da.rowwise().sum();
  return w_.value.transpose() * da;
}

std::vector<Param*> DenseLayer::params() { return {&w_, &b_}; }
std::vector<const Param*> DenseLayer::params() const { return {&w_, &b_}; }

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Mat mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      mask(r, c) = uniform01(rng) < rate ? 0.0 : keep;
    }
  }
  return mask;
}

Vec softmax_positive(const Mat& logits) {
  Vec out(logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    out(c) = 1.0 / (1.0 + std::exp(logits(0, c) - logits(1, c)));
  }
  return out;
}

double softmax_cross_entropy(const Mat& logits, const Vec& labels,
                             const Vec& weights, Mat* d_logits) {
  const Eigen::Index n = logits.cols();
  double loss = 0.0;
  if (d_logits != nullptr) d_logits->resize(2, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double a = logits(0, c);
    const double b = logits(1, c);
    const double m = std::max(a, b);
    const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    const double p1 = std::exp(b - lse);
    const double y = labels(c);
    loss += weights(c) * (lse - (y > 0.5 ? b : a));
    if (d_logits != nullptr) {
      (*d_logits)(0, c) = weights(c) * ((1.0 - p1) - (y > 0.5 ? 0.0 : 1.0)) / n;
      (*d_logits)(1, c) = weights(c) * (p1 - (y > 0.5 ? 1.0 : 0.0)) / n;
    }
  }
  return loss / static_cast<double>(n);
}

void write_params(std::ostream& out, const std::vector<const Param*>& params) {
  char buf[64];
  for (const Param* p : params) {
    out << "param " << p->name << ' ' << p->value.rows() << ' ' << p->value.cols()
        << '\n';
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        auto res = std::to_chars(buf, buf + sizeof(buf), p->value(r, c));
        out << (c == 0 ? "" : " ") << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
      }
      out << '\n';
    }
  }
}

void read_params(std::istream& in, const std::vector<Param*>& params) {
  for (Param* p : params) {
    std::string tag;
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(in >> tag >> name >> rows >> cols) || tag != "param") {
      throw ValidationError("model file: expected parameter " + p->name);
    }
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw ValidationError("model file: parameter " + name + " does not match " +
                            p->name + " shape");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        std::string token;
        if (!(in >> token)) throw ValidationError("model file: truncated " + name);
        double v = 0.0;
        auto res = std::from_chars(token.data(), token.data() + token.size(), v);
        if (res.ec != std::errc()) throw ValidationError("model file: bad value " + token);
        p->value(r, c) = v;
      }
    }
  }
}

}  // namespace ehrc::nn
