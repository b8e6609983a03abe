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

#include "ehrc/models.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ehrc/core.h"

namespace ehrc {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Idx = Eigen::Index;

constexpr Idx kPredictChunk = 1024;

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("model file: bad number '" + s + "'");
  }
  return v;
}

void check_labels(const Vec& y, std::size_t n) {
  if (static_cast<std::size_t>(y.size()) != n) {
    throw ValidationError("label count " + std::to_string(y.size()) +
                          " does not match subject count " + std::to_string(n));
  }
  for (Idx i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw ValidationError("labels must be 0 or 1");
  }
}

Vec sample_weights(const Vec& y, bool balance) {
  Vec w = Vec::Ones(y.size());
  if (!balance || y.size() == 0) return w;
  const double n = static_cast<double>(y.size());
  const double pos = y.sum();
  const double neg = n - pos;
  for (Idx i = 0; i < y.size(); ++i) {
    const double c = y(i) > 0.5 ? pos : neg;
    w(i) = c > 0 ? n / (2.0 * c) : 1.0;
  }
  return w;
}

std::vector<Idx> batch_indices(const std::vector<std::size_t>& perm, std::size_t start,
                               std::size_t end) {
  std::vector<Idx> idx;
  idx.reserve(end - start);
  for (std::size_t i = start; i < end; ++i) idx.push_back(static_cast<Idx>(perm[i]));
  return idx;
}

void zero_grads(const std::vector<nn::Param*>& params) {
  for (auto* p : params) p->zero_grad();
}

// Standardized, features x subjects copy of every step.
std::vector<Mat> feature_major(const SequenceData& data, const Standardizer& st) {
  std::vector<Mat> out;
  out.reserve(data.n_steps());
  for (const auto& step : data.steps) out.push_back(st.apply(step).transpose());
  return out;
}

void write_vector_param(std::ostream& out, const std::string& name, const Vec& v) {
  nn::Param p(name, v);
  nn::write_params(out, {&p});
}

Vec read_vector_param(std::istream& in, const std::string& name, Idx n) {
  nn::Param p(name, Mat::Zero(n, 1));
  nn::read_params(in, {&p});
  return p.value.col(0);
}

void write_standardizer(std::ostream& out, const Standardizer& st) {
  write_vector_param(out, "std.mean", st.mean);
  write_vector_param(out, "std.scale", st.scale);
}

Standardizer read_standardizer(std::istream& in, Idx n) {
  Standardizer st;
  st.mean = read_vector_param(in, "std.mean", n);
  st.scale = read_vector_param(in, "std.scale", n);
  return st;
}

template <typename T>
std::vector<T> read_list(std::istream& in, const std::string& key) {
  std::string line;
  while (std::getline(in, line) && line.empty()) {
  }
  std::istringstream ls(line);
  std::string k;
  ls >> k;
  if (k != key) throw ValidationError("model file: expected '" + key + "'");
  std::vector<T> out;
  std::string tok;
  while (ls >> tok) {
    if constexpr (std::is_same_v<T, double>) {
      out.push_back(parse_double(tok));
    } else {
      T v{};
      auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc()) throw ValidationError("model file: bad value " + tok);
      out.push_back(v);
    }
  }
  return out;
}

template <typename T>
void write_list(std::ostream& out, const std::string& key, const std::vector<T>& values) {
  out << key;
  for (const auto& v : values) {
    if constexpr (std::is_same_v<T, double>) {
      out << ' ' << format_double(v);
    } else {
      out << ' ' << v;
    }
  }
  out << '\n';
}

}  // namespace

// ---- SequenceData ----------------------------------------------------------

SequenceData SequenceData::single(Eigen::MatrixXd x) {
  SequenceData d;
  d.steps.push_back(std::move(x));
  return d;
}

SequenceData SequenceData::from_tensor(const SparseTemporalTensor& tensor) {
  SequenceData d;
  d.steps = tensor_to_steps(tensor);
  return d;
}

std::size_t SequenceData::n_subjects() const {
  return steps.empty() ? 0 : static_cast<std::size_t>(steps.front().rows());
}

std::size_t SequenceData::n_features() const {
  return steps.empty() ? 0 : static_cast<std::size_t>(steps.front().cols());
}

void SequenceData::validate() const {
  if (steps.empty()) throw ValidationError("sequence has no time steps");
  for (const auto& s : steps) {
    if (s.rows() != steps.front().rows() || s.cols() != steps.front().cols()) {
      throw ValidationError("time steps differ in shape");
    }
    if (!s.allFinite()) throw ValidationError("input contains non-finite values");
  }
}

SequenceData SequenceData::rows(const std::vector<std::size_t>& subjects) const {
  std::vector<Idx> idx(subjects.begin(), subjects.end());
  SequenceData d;
  for (const auto& s : steps) d.steps.push_back(s(idx, Eigen::all));
  return d;
}

SequenceData SequenceData::columns(const std::vector<std::size_t>& features) const {
  std::vector<Idx> idx(features.begin(), features.end());
  SequenceData d;
  for (const auto& s : steps) d.steps.push_back(s(Eigen::all, idx));
  return d;
}

Eigen::MatrixXd SequenceData::summed() const {
  Mat out = Mat::Zero(static_cast<Idx>(n_subjects()), static_cast<Idx>(n_features()));
  for (const auto& s : steps) out += s;
  return out;
}

void TrainSpec::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (units.empty()) throw ConfigError("units must list at least one layer");
  if (dropout.size() != units.size()) {
    throw ConfigError("dropout needs one rate per recurrent layer");
  }
  for (double d : dropout) {
    if (d < 0.0 || d >= 1.0) throw ConfigError("dropout rates must be in [0, 1)");
  }
  for (auto u : units) {
    if (u == 0) throw ConfigError("units must be positive");
  }
  for (auto u : dae_widths) {
    if (u == 0) throw ConfigError("dae_widths must be positive");
  }
  if (corruption < 0.0 || corruption > 1.0) throw ConfigError("corruption must be in [0, 1]");
  if (dae_epochs < 0) throw ConfigError("dae_epochs must be >= 0");
}

// ---- Standardizer ------------------------------------------------------------

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer st;
  const double n = static_cast<double>(std::max<Idx>(x.rows(), 1));
  st.mean = x.colwise().sum().transpose() / n;
  st.scale.resize(x.cols());
  for (Idx j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - st.mean(j)).square().sum() / n;
    st.scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return st;
}

Standardizer Standardizer::fit(const SequenceData& data) {
  const Idx f = static_cast<Idx>(data.n_features());
  Standardizer st;
  st.mean = Vec::Zero(f);
  st.scale = Vec::Ones(f);
  const double n = static_cast<double>(data.n_subjects() * data.n_steps());
  if (n == 0) return st;
  for (const auto& s : data.steps) st.mean += s.colwise().sum().transpose();
  st.mean /= n;
  Vec var = Vec::Zero(f);
  for (const auto& s : data.steps) {
    var += (s.rowwise() - st.mean.transpose()).array().square().matrix().colwise().sum().transpose();
  }
  var /= n;
  for (Idx j = 0; j < f; ++j) st.scale(j) = var(j) > 1e-24 ? std::sqrt(var(j)) : 1.0;
  return st;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) {
    throw ValidationError("input has " + std::to_string(x.cols()) +
                          " features, model expects " + std::to_string(mean.size()));
  }
  return ((x.rowwise() - mean.transpose()).array().rowwise() /
          scale.transpose().array())
      .matrix();
}

// ---- FunctionPredictor -------------------------------------------------------

Eigen::VectorXd FunctionPredictor::predict(const SequenceData& data) const {
  return fn_(data);
}

void FunctionPredictor::save(std::ostream&) const {
  throw ValidationError("predictor '" + kind_ + "' cannot be saved");
}

// ---- logistic ----------------------------------------------------------------

LogisticModel::LogisticModel(std::size_t n_features)
    : w_("logistic.w", Mat::Zero(1, static_cast<Idx>(n_features))),
      b_("logistic.b", Mat::Zero(1, 1)) {}

Eigen::VectorXd LogisticModel::probability(const Eigen::MatrixXd& z) const {
  Vec a = (z * w_.value.row(0).transpose()).array() + b_.value(0, 0);
  return a.unaryExpr([](double t) { return 1.0 / (1.0 + std::exp(-t)); });
}

double LogisticModel::loss_and_grad(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& w) {
  const Vec a = (z * w_.value.row(0).transpose()).array() + b_.value(0, 0);
  const double n = static_cast<double>(z.rows());
  double loss = 0.0;
  Vec resid(a.size());
  for (Idx i = 0; i < a.size(); ++i) {
    // softplus(a) - y a
    const double sp = a(i) > 0 ? a(i) + std::log1p(std::exp(-a(i)))
                               : std::log1p(std::exp(a(i)));
    loss += w(i) * (sp - y(i) * a(i));
    resid(i) = w(i) * (1.0 / (1.0 + std::exp(-a(i))) - y(i)) / n;
  }
  w_.grad.row(0) += (z.transpose() * resid).transpose();
  b_.grad(0, 0) += resid.sum();
  return loss / n;
}

Eigen::VectorXd LogisticPredictor::predict(const SequenceData& data) const {
  return model_.probability(standardizer_.apply(data.summed()));
}

Eigen::VectorXd LogisticPredictor::raw_coefficients() const {
  return model_.weights().value.row(0).transpose().cwiseQuotient(standardizer_.scale);
}

double LogisticPredictor::raw_intercept() const {
  return model_.bias().value(0, 0) - raw_coefficients().dot(standardizer_.mean);
}

void LogisticPredictor::save(std::ostream& out) const {
  out << "ehrc-model logistic\n";
  out << "features " << n_features() << '\n';
  write_standardizer(out, standardizer_);
  nn::write_params(out, model_.params());
}

std::unique_ptr<LogisticPredictor> train_logistic(const SequenceData& data,
                                                  const Eigen::VectorXd& y,
                                                  const TrainSpec& spec) {
  spec.validate();
  data.validate();
  check_labels(y, data.n_subjects());
  const Mat x = data.summed();
  Standardizer st = Standardizer::fit(x);
  const Mat z = st.apply(x);
  const Vec w = sample_weights(y, spec.balance_classes);
  LogisticModel model(data.n_features());
  nn::Adam adam(spec.learning_rate);
  Rng shuffle_rng = make_rng(spec.seed, {2});
  const std::size_t n = data.n_subjects();
  auto params = model.params();
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const auto perm = random_permutation(n, shuffle_rng);
    for (std::size_t start = 0; start < n; start += spec.batch_size) {
      const auto idx = batch_indices(perm, start, std::min(n, start + spec.batch_size));
      zero_grads(params);
      model.loss_and_grad(z(idx, Eigen::all), y(idx), w(idx));
      adam.step(params);
    }
  }
  return std::make_unique<LogisticPredictor>(std::move(st), std::move(model));
}

// ---- recurrent ---------------------------------------------------------------

RecurrentNet::RecurrentNet(std::size_t n_inputs, const std::vector<std::size_t>& units,
                           std::vector<double> dropout, Rng& rng)
    : units_(units), dropout_(std::move(dropout)) {
  if (units_.empty() || dropout_.size() != units_.size()) {
    throw ConfigError("recurrent net needs one dropout rate per layer");
  }
  std::size_t in = n_inputs;
  for (auto u : units_) {
    grus_.emplace_back(static_cast<Idx>(in), static_cast<Idx>(u), rng);
    in = u;
  }
  head_ = nn::DenseLayer(static_cast<Idx>(in), 2, nn::Activation::kLinear, rng, "head");
}

std::size_t RecurrentNet::n_inputs() const {
  return grus_.empty() ? 0 : static_cast<std::size_t>(grus_.front().inputs());
}

Eigen::MatrixXd RecurrentNet::logits(const std::vector<Eigen::MatrixXd>& xs) const {
  std::vector<Mat> h = xs;
  for (const auto& gru : grus_) h = gru.forward(h, nullptr);
  return head_.forward(h.back(), nullptr);
}

double RecurrentNet::loss_and_grad(const std::vector<Eigen::MatrixXd>& xs,
                                   const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                   Rng* dropout_rng) {
  if (xs.empty()) throw ValidationError("sequence length 0");
  const std::size_t layers = grus_.size();
  std::vector<nn::GruLayer::Cache> caches(layers);
  std::vector<std::vector<Mat>> masks(layers);
  std::vector<Mat> h = xs;
  for (std::size_t l = 0; l < layers; ++l) {
    h = grus_[l].forward(h, &caches[l]);
    if (dropout_rng != nullptr && dropout_[l] > 0.0) {
      for (auto& step : h) {
        masks[l].push_back(nn::dropout_mask(step.rows(), step.cols(), dropout_[l], *dropout_rng));
        step = step.cwiseProduct(masks[l].back());
      }
    }
  }
  nn::DenseLayer::Cache head_cache;
  const Mat logit = head_.forward(h.back(), &head_cache);
  Mat d_logit;
  const double loss = nn::softmax_cross_entropy(logit, y, w, &d_logit);

  const std::size_t steps = xs.size();
  std::vector<Mat> d(steps);
  const Mat d_last = head_.backward(head_cache, d_logit);
  for (std::size_t t = 0; t + 1 < steps; ++t) d[t] = Mat::Zero(d_last.rows(), d_last.cols());
  d[steps - 1] = d_last;
  for (std::size_t l = layers; l-- > 0;) {
    if (!masks[l].empty()) {
      for (std::size_t t = 0; t < steps; ++t) d[t] = d[t].cwiseProduct(masks[l][t]);
    }
    d = grus_[l].backward(caches[l], d);
  }
  return loss;
}

std::vector<nn::Param*> RecurrentNet::params() {
  std::vector<nn::Param*> out;
  for (auto& g : grus_) {
    auto p = g.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  auto p = head_.params();
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<const nn::Param*> RecurrentNet::params() const {
  std::vector<const nn::Param*> out;
  for (const auto& g : grus_) {
    auto p = g.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  auto p = head_.params();
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

// ---- autoencoder -------------------------------------------------------------

DenoisingAutoencoder::DenoisingAutoencoder(std::size_t n_inputs,
                                           const std::vector<std::size_t>& widths,
                                           Rng& rng)
    : widths_(widths) {
  if (widths_.empty()) throw ConfigError("autoencoder needs at least one layer");
  std::size_t in = n_inputs;
  for (std::size_t l = 0; l < widths_.size(); ++l) {
    encoder_.emplace_back(static_cast<Idx>(in), static_cast<Idx>(widths_[l]),
                          nn::Activation::kSigmoid, rng, "enc" + std::to_string(l));
    in = widths_[l];
  }
  for (std::size_t l = widths_.size(); l-- > 0;) {
    const std::size_t out = l == 0 ? n_inputs : widths_[l - 1];
    const auto act = l == 0 ? nn::Activation::kLinear : nn::Activation::kSigmoid;
    decoder_.emplace_back(static_cast<Idx>(widths_[l]), static_cast<Idx>(out), act, rng,
                          "dec" + std::to_string(l));
  }
}

std::size_t DenoisingAutoencoder::n_inputs() const {
  return encoder_.empty() ? 0 : static_cast<std::size_t>(encoder_.front().inputs());
}

Eigen::MatrixXd DenoisingAutoencoder::encode(const Eigen::MatrixXd& x) const {
  Mat h = x;
  for (const auto& layer : encoder_) h = layer.forward(h, nullptr);
  return h;
}

Eigen::MatrixXd DenoisingAutoencoder::reconstruct(const Eigen::MatrixXd& x) const {
  Mat h = encode(x);
  for (const auto& layer : decoder_) h = layer.forward(h, nullptr);
  return h;
}

double DenoisingAutoencoder::loss_and_grad(const Eigen::MatrixXd& input,
                                           const Eigen::MatrixXd& clean) {
  std::vector<nn::DenseLayer::Cache> enc(encoder_.size());
  std::vector<nn::DenseLayer::Cache> dec(decoder_.size());
  Mat h = input;
  for (std::size_t l = 0; l < encoder_.size(); ++l) h = encoder_[l].forward(h, &enc[l]);
  for (std::size_t l = 0; l < decoder_.size(); ++l) h = decoder_[l].forward(h, &dec[l]);
  const Mat diff = h - clean;
  const double count = static_cast<double>(diff.size());
  Mat d = 2.0 * diff / count;
  for (std::size_t l = decoder_.size(); l-- > 0;) d = decoder_[l].backward(dec[l], d);
  for (std::size_t l = encoder_.size(); l-- > 0;) d = encoder_[l].backward(enc[l], d);
  return diff.squaredNorm() / count;
}

std::vector<nn::Param*> DenoisingAutoencoder::encoder_params() {
  std::vector<nn::Param*> out;
  for (auto& l : encoder_) {
    auto p = l.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const nn::Param*> DenoisingAutoencoder::encoder_params() const {
  std::vector<const nn::Param*> out;
  for (const auto& l : encoder_) {
    auto p = l.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<nn::Param*> DenoisingAutoencoder::params() {
  auto out = encoder_params();
  for (auto& l : decoder_) {
    auto p = l.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const nn::Param*> DenoisingAutoencoder::params() const {
  auto out = encoder_params();
  for (const auto& l : decoder_) {
    auto p = l.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

Eigen::MatrixXd corrupt_mask(const Eigen::MatrixXd& x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw ValidationError("corruption rate must be in [0, 1]");
  Mat out = x;
  if (rate == 0.0) return out;
  Rng rng = make_rng(seed, {0xc0ffee});
  for (Idx c = 0; c < out.cols(); ++c) {
    for (Idx r = 0; r < out.rows(); ++r) {
      if (uniform01(rng) < rate) out(r, c) = 0.0;
    }
  }
  return out;
}

PretrainResult pretrain_denoising_autoencoder(const Eigen::MatrixXd& x,
                                              const std::vector<std::size_t>& widths,
                                              double rate, const TrainSpec& spec) {
  spec.validate();
  if (!x.allFinite()) throw ValidationError("input contains non-finite values");
  PretrainResult result;
  result.standardizer = Standardizer::fit(x);
  Rng init = make_rng(spec.seed, {11});
  result.autoencoder = DenoisingAutoencoder(static_cast<std::size_t>(x.cols()), widths, init);
  const Mat clean = result.standardizer.apply(x).transpose();
  nn::Adam adam(spec.learning_rate);
  Rng shuffle_rng = make_rng(spec.seed, {12});
  const std::size_t n = static_cast<std::size_t>(x.rows());
  auto params = result.autoencoder.params();
  for (int epoch = 0; epoch < spec.dae_epochs; ++epoch) {
    const Mat noisy =
        result.standardizer.apply(corrupt_mask(x, rate, derive_seed(spec.seed, {13, static_cast<std::uint64_t>(epoch)})))
            .transpose();
    const auto perm = random_permutation(n, shuffle_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += spec.batch_size) {
      const std::size_t end = std::min(n, start + spec.batch_size);
      const auto idx = batch_indices(perm, start, end);
      zero_grads(params);
      const double loss =
          result.autoencoder.loss_and_grad(noisy(Eigen::all, idx), clean(Eigen::all, idx));
      total += loss * static_cast<double>(end - start);
      adam.step(params);
    }
    result.epoch_loss.push_back(n > 0 ? total / static_cast<double>(n) : 0.0);
  }
  return result;
}

// ---- recurrent predictor -----------------------------------------------------

namespace {

RecurrentNet fit_recurrent(const std::vector<Mat>& xs, const Vec& y, const TrainSpec& spec) {
  const std::size_t n = static_cast<std::size_t>(xs.front().cols());
  Rng init = make_rng(spec.seed, {1});
  RecurrentNet net(static_cast<std::size_t>(xs.front().rows()), spec.units, spec.dropout,
                   init);
  const Vec w = sample_weights(y, spec.balance_classes);
  nn::Adam adam(spec.learning_rate);
  Rng shuffle_rng = make_rng(spec.seed, {2});
  Rng drop_rng = make_rng(spec.seed, {3});
  auto params = net.params();
  std::vector<Mat> batch(xs.size());
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const auto perm = random_permutation(n, shuffle_rng);
    for (std::size_t start = 0; start < n; start += spec.batch_size) {
      const auto idx = batch_indices(perm, start, std::min(n, start + spec.batch_size));
      for (std::size_t t = 0; t < xs.size(); ++t) batch[t] = xs[t](Eigen::all, idx);
      zero_grads(params);
      net.loss_and_grad(batch, y(idx), w(idx), &drop_rng);
      adam.step(params);
    }
  }
  return net;
}

std::vector<Mat> encode_steps(const DenoisingAutoencoder& dae, const std::vector<Mat>& xs) {
  std::vector<Mat> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(dae.encode(x));
  return out;
}

}  // namespace

Eigen::VectorXd RecurrentPredictor::predict(const SequenceData& data) const {
  data.validate();
  const Idx n = static_cast<Idx>(data.n_subjects());
  Vec out(n);
  for (Idx start = 0; start < n; start += kPredictChunk) {
    const Idx len = std::min(kPredictChunk, n - start);
    std::vector<Mat> xs;
    xs.reserve(data.n_steps());
    for (const auto& s : data.steps) {
      Mat x = standardizer_.apply(s.middleRows(start, len)).transpose();
      xs.push_back(encoder_ ? encoder_->encode(x) : std::move(x));
    }
    out.segment(start, len) = nn::softmax_positive(net_.logits(xs));
  }
  return out;
}

void RecurrentPredictor::save(std::ostream& out) const {
  out << "ehrc-model " << kind() << '\n';
  out << "features " << n_features() << '\n';
  write_list(out, "units", net_.units());
  write_list(out, "dropout", net_.dropout());
  if (encoder_) write_list(out, "widths", encoder_->widths());
  write_standardizer(out, standardizer_);
  if (encoder_) nn::write_params(out, encoder_->params());
  nn::write_params(out, net_.params());
}

std::unique_ptr<RecurrentPredictor> train_recurrent(const SequenceData& data,
                                                    const Eigen::VectorXd& y,
                                                    const TrainSpec& spec) {
  spec.validate();
  data.validate();
  check_labels(y, data.n_subjects());
  Standardizer st = Standardizer::fit(data);
  RecurrentNet net = fit_recurrent(feature_major(data, st), y, spec);
  return std::make_unique<RecurrentPredictor>(std::move(st), std::move(net));
}

std::unique_ptr<RecurrentPredictor> train_deep_patient(const SequenceData& data,
                                                       const Eigen::VectorXd& y,
                                                       const TrainSpec& spec) {
  spec.validate();
  data.validate();
  check_labels(y, data.n_subjects());
  const Idx n = static_cast<Idx>(data.n_subjects());
  Mat rows(n * static_cast<Idx>(data.n_steps()), static_cast<Idx>(data.n_features()));
  for (std::size_t t = 0; t < data.n_steps(); ++t) {
    rows.middleRows(static_cast<Idx>(t) * n, n) = data.steps[t];
  }
  PretrainResult pre = pretrain_denoising_autoencoder(rows, spec.dae_widths, spec.corruption, spec);
  const auto encoded = encode_steps(pre.autoencoder, feature_major(data, pre.standardizer));
  RecurrentNet net = fit_recurrent(encoded, y, spec);
  return std::make_unique<RecurrentPredictor>(std::move(pre.standardizer), std::move(net),
                                              std::move(pre.autoencoder));
}

std::unique_ptr<Predictor> load_predictor(std::istream& in) {
  std::string magic;
  std::string kind;
  if (!(in >> magic >> kind) || magic != "ehrc-model") {
    throw ValidationError("not a model file");
  }
  std::string key;
  std::size_t features = 0;
  if (!(in >> key >> features) || key != "features") {
    throw ValidationError("model file: missing feature count");
  }
  const Idx f = static_cast<Idx>(features);
  if (kind == "logistic") {
    Standardizer st = read_standardizer(in, f);
    LogisticModel model(features);
    nn::read_params(in, model.params());
    return std::make_unique<LogisticPredictor>(std::move(st), std::move(model));
  }
  if (kind == "recurrent" || kind == "deep_patient") {
    in >> std::ws;
    const auto units = read_list<std::size_t>(in, "units");
    const auto dropout = read_list<double>(in, "dropout");
    std::optional<DenoisingAutoencoder> dae;
    std::size_t net_inputs = features;
    Rng dummy(0);
    if (kind == "deep_patient") {
      const auto widths = read_list<std::size_t>(in, "widths");
      dae = DenoisingAutoencoder(features, widths, dummy);
      net_inputs = widths.back();
    }
    Standardizer st = read_standardizer(in, f);
    if (dae) nn::read_params(in, dae->params());
    RecurrentNet net(net_inputs, units, dropout, dummy);
    nn::read_params(in, net.params());
    return std::make_unique<RecurrentPredictor>(std::move(st), std::move(net), std::move(dae));
  }
  throw ValidationError("unknown model kind '" + kind + "'");
}

// ---- metrics -----------------------------------------------------------------

double auc_score(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  const Idx n = scores.size();
  std::vector<Idx> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Idx{0});
  std::sort(order.begin(), order.end(), [&](Idx a, Idx b) { return scores(a) < scores(b); });
  double pos = 0.0;
  double rank_sum = 0.0;
  for (Idx i = 0; i < n;) {
    Idx j = i;
    while (j < n && scores(order[static_cast<std::size_t>(j)]) ==
                        scores(order[static_cast<std::size_t>(i)])) {
      ++j;
    }
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (Idx t = i; t < j; ++t) {
      if (labels(order[static_cast<std::size_t>(t)]) > 0.5) {
        rank_sum += mid;
        pos += 1.0;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) {
    throw ValidationError("AUC undefined: labels contain a single class");
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

Metrics compute_metrics(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                        double threshold) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  if (!scores.allFinite()) throw ValidationError("scores contain non-finite values");
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (Idx i = 0; i < scores.size(); ++i) {
    const bool pred = scores(i) >= threshold;
    const bool actual = labels(i) > 0.5;
    if (pred && actual) tp += 1;
    if (pred && !actual) fp += 1;
    if (!pred && actual) fn += 1;
    if (!pred && !actual) tn += 1;
  }
  Metrics m;
  m.sensitivity = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.specificity = tn + fp > 0 ? tn / (tn + fp) : 0.0;
  m.f1 = tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  if (tp + fn > 0 && tn + fp > 0) m.auc = auc_score(scores, labels);
  return m;
}

MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

bool operator==(const MetricsReport& a, const MetricsReport& b) {
  auto same = [](const MeanSd& x, const MeanSd& y) { return x.mean == y.mean && x.sd == y.sd; };
  if (!same(a.sensitivity, b.sensitivity) || !same(a.specificity, b.specificity) ||
      !same(a.f1, b.f1) || !same(a.auc, b.auc) || a.folds.size() != b.folds.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.folds.size(); ++i) {
    const auto& x = a.folds[i];
    const auto& y = b.folds[i];
    if (x.sensitivity != y.sensitivity || x.specificity != y.specificity || x.f1 != y.f1 ||
        x.auc != y.auc) {
      return false;
    }
  }
  return true;
}

MetricsReport summarize(std::vector<Metrics> folds) {
  std::vector<double> sens, spec, f1, auc;
  for (const auto& m : folds) {
    sens.push_back(m.sensitivity);
    spec.push_back(m.specificity);
    f1.push_back(m.f1);
    if (m.auc) auc.push_back(*m.auc);
  }
  MetricsReport r;
  r.sensitivity = mean_sd(sens);
  r.specificity = mean_sd(spec);
  r.f1 = mean_sd(f1);
  r.auc = mean_sd(auc);
  r.folds = std::move(folds);
  return r;
}

std::vector<int> stratified_folds(const Eigen::VectorXd& labels, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("k-fold needs k >= 2");
  std::vector<std::size_t> by_class[2];
  for (Idx i = 0; i < labels.size(); ++i) {
    by_class[labels(i) > 0.5 ? 1 : 0].push_back(static_cast<std::size_t>(i));
  }
  const char* names[2] = {"control", "event"};
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < static_cast<std::size_t>(k)) {
      throw ValidationError("class '" + std::string(names[c]) + "' has " +
                            std::to_string(by_class[c].size()) +
                            " subjects, fewer than k = " + std::to_string(k));
    }
  }
  std::vector<int> fold(static_cast<std::size_t>(labels.size()), 0);
  for (int c = 0; c < 2; ++c) {
    Rng rng = make_rng(seed, {0xf01d, static_cast<std::uint64_t>(c)});
    auto members = by_class[c];
    shuffle_in_place(members, rng);
    for (std::size_t p = 0; p < members.size(); ++p) {
      fold[members[p]] = static_cast<int>(p % static_cast<std::size_t>(k));
    }
  }
  return fold;
}

namespace {

Metrics run_fold(const Trainer& trainer, const SequenceData& data, const Vec& labels,
                 const std::vector<int>& fold, int f, std::uint64_t seed) {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? test : train).push_back(i);
  std::vector<Idx> tr(train.begin(), train.end());
  std::vector<Idx> te(test.begin(), test.end());
  auto model = trainer(data.rows(train), labels(tr), derive_seed(seed, {static_cast<std::uint64_t>(f)}));
  return compute_metrics(model->predict(data.rows(test)), labels(te));
}

void check_kfold_inputs(const SequenceData& data, const Vec& labels) {
  data.validate();
  check_labels(labels, data.n_subjects());
}

}  // namespace

MetricsReport kfold_evaluate(const Trainer& trainer, const SequenceData& data,
                             const Eigen::VectorXd& labels, int k, std::uint64_t seed) {
  check_kfold_inputs(data, labels);
  const auto fold = stratified_folds(labels, k, seed);
  std::vector<Metrics> results(static_cast<std::size_t>(k));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));
#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < k; ++f) {
    try {
      results[static_cast<std::size_t>(f)] = run_fold(trainer, data, labels, fold, f, seed);
    } catch (...) {
      errors[static_cast<std::size_t>(f)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return summarize(std::move(results));
}

MetricsReport kfold_evaluate_serial(const Trainer& trainer, const SequenceData& data,
                                    const Eigen::VectorXd& labels, int k,
                                    std::uint64_t seed) {
  check_kfold_inputs(data, labels);
  const auto fold = stratified_folds(labels, k, seed);
  std::vector<Metrics> results;
  for (int f = 0; f < k; ++f) results.push_back(run_fold(trainer, data, labels, fold, f, seed));
  return summarize(std::move(results));
}

const std::vector<FeatureSubset>& ablation_subsets() {
  using F = Family;
  static const std::vector<FeatureSubset> subsets = {
      {"Demographics", {F::kDemographic}},
      {"Diagnoses", {F::kHospitalisation}},
      {"Prescriptions", {F::kPrescription}},
      {"History of major disease", {F::kHistoryOfDisease}},
      {"Blood test indicator", {F::kBloodTestMarker}},
      {"Blood test value", {F::kBloodTestValue}},
      {"Demographics + diagnoses", {F::kDemographic, F::kHospitalisation}},
      {"Demographics + diagnoses + history", {F::kDemographic, F::kHospitalisation, F::kHistoryOfDisease}},
      {"Demographics + diagnoses + history + prescriptions",
       {F::kDemographic, F::kHospitalisation, F::kHistoryOfDisease, F::kPrescription}},
      {"All features",
       {F::kDemographic, F::kHospitalisation, F::kHistoryOfDisease, F::kPrescription,
        F::kBloodTestMarker, F::kBloodTestValue}},
  };
  return subsets;
}

std::vector<AblationRow> ablation_run(const SequenceData& data,
                                      const FeatureVocabulary& vocab,
                                      const Eigen::VectorXd& labels, const Trainer& trainer,
                                      int k, std::uint64_t seed,
                                      const std::vector<FeatureSubset>& subsets) {
  if (vocab.feature_count() != data.n_features()) {
    throw ValidationError("vocabulary has " + std::to_string(vocab.feature_count()) +
                          " features, data has " + std::to_string(data.n_features()));
  }
  std::vector<AblationRow> rows;
  for (const auto& subset : subsets) {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < data.n_features(); ++j) {
      const auto fam = vocab.family(j);
      if (fam && std::find(subset.families.begin(), subset.families.end(), *fam) !=
                     subset.families.end()) {
        cols.push_back(j);
      }
    }
    if (cols.empty()) {
      throw ValidationError("feature subset '" + subset.name + "' is empty");
    }
    AblationRow row;
    row.subset = subset;
    row.n_features = cols.size();
    row.report = kfold_evaluate(trainer, data.columns(cols), labels, k, seed);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ehrc
