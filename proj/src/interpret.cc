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

#include "ehrc/interpret.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ehrc/core.h"
#include "ehrc/random.h"

namespace ehrc {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Idx = Eigen::Index;

constexpr std::uint64_t kPfiStream = 0x9f1;
constexpr std::uint64_t kLimeStream = 0x11e;

std::vector<Idx> feature_permutation(std::size_t n, std::size_t feature, int repeat,
                                     std::uint64_t seed) {
  Rng rng = make_rng(seed, {kPfiStream, feature, static_cast<std::uint64_t>(repeat)});
  const auto perm = random_permutation(n, rng);
  return {perm.begin(), perm.end()};
}

bool constant_column(const SequenceData& data, std::size_t j) {
  const Idx col = static_cast<Idx>(j);
  for (const auto& s : data.steps) {
    if (s.rows() == 0) continue;
    if ((s.col(col).array() != s(0, col)).any()) return false;
  }
  return true;
}

double error_of(const Predictor& predictor, const SequenceData& data, const Vec& labels) {
  return 1.0 - auc_score(predictor.predict(data), labels);
}

void check_pfi_inputs(const SequenceData& data, const Vec& labels,
                      const std::vector<std::string>& tokens, const PfiOptions& options) {
  data.validate();
  if (static_cast<std::size_t>(labels.size()) != data.n_subjects()) {
    throw ValidationError("label count does not match subject count");
  }
  if (tokens.size() != data.n_features()) {
    throw ValidationError("token list has " + std::to_string(tokens.size()) +
                          " entries, data has " + std::to_string(data.n_features()) +
                          " features");
  }
  if (options.n_repeats < 1) throw ConfigError("n_repeats must be >= 1");
  const double pos = labels.sum();
  if (pos == 0.0 || pos == static_cast<double>(labels.size())) {
    throw ValidationError("permutation importance needs both classes in the labels");
  }
}

// Permutes column j of `work` in place for every repeat, restoring it after.
std::vector<double> feature_deltas(const Predictor& predictor, SequenceData& work,
                                   const Vec& labels, std::size_t j, double baseline,
                                   const PfiOptions& options) {
  std::vector<double> deltas(static_cast<std::size_t>(options.n_repeats), 0.0);
  if (constant_column(work, j)) return deltas;
  const Idx col = static_cast<Idx>(j);
  std::vector<Vec> original;
  for (const auto& s : work.steps) original.push_back(s.col(col));
  for (int r = 0; r < options.n_repeats; ++r) {
    const auto perm = feature_permutation(work.n_subjects(), j, r, options.seed);
    for (std::size_t t = 0; t < work.n_steps(); ++t) work.steps[t].col(col) = original[t](perm);
    deltas[static_cast<std::size_t>(r)] = error_of(predictor, work, labels) - baseline;
  }
  for (std::size_t t = 0; t < work.n_steps(); ++t) work.steps[t].col(col) = original[t];
  return deltas;
}

PfiResult assemble_pfi(const std::vector<std::vector<double>>& deltas,
                       const std::vector<std::string>& tokens, double baseline) {
  PfiResult out;
  out.baseline_error = baseline;
  out.importance.tokens = tokens;
  out.importance.source = ImportanceSource::kPfi;
  for (const auto& d : deltas) {
    const auto ms = mean_sd(d);
    out.importance.scores.push_back(ms.mean);
    out.sd.push_back(ms.sd);
  }
  return out;
}

// Weighted ridge with an unpenalised intercept.
std::pair<Vec, double> weighted_ridge(const Mat& z, const Vec& y, const Vec& w, double alpha) {
  const double sw = w.sum();
  const Vec zbar = z.transpose() * w / sw;
  const double ybar = w.dot(y) / sw;
  const Mat zc = z.rowwise() - zbar.transpose();
  const Mat zw = zc.array().colwise() * w.array();
  Mat a = zc.transpose() * zw;
  a.diagonal().array() += alpha;
  const Vec b = zw.transpose() * (y.array() - ybar).matrix();
  Vec beta = a.ldlt().solve(b);
  return {beta, ybar - zbar.dot(beta)};
}

ImportanceVector aggregate_lime(const std::vector<LimeExplanation>& explanations,
                                const std::vector<std::string>& tokens) {
  std::vector<double> sum(tokens.size(), 0.0);
  std::vector<double> count(tokens.size(), 0.0);
  for (const auto& e : explanations) {
    for (std::size_t a = 0; a < e.active.size(); ++a) {
      sum[e.active[a]] += std::abs(e.weights[a]);
      count[e.active[a]] += 1.0;
    }
  }
  ImportanceVector out;
  out.tokens = tokens;
  out.source = ImportanceSource::kLime;
  out.scores.resize(tokens.size(), 0.0);
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    if (count[j] > 0) out.scores[j] = sum[j] / count[j];
  }
  return out;
}

void check_lime_inputs(const SequenceData& data, const std::vector<std::string>& tokens) {
  data.validate();
  if (data.n_subjects() == 0) throw ValidationError("dataset is empty");
  if (tokens.size() != data.n_features()) {
    throw ValidationError("token list does not match the feature count");
  }
}

}  // namespace

LimeOptions lime_subject_options(const LimeOptions& options, std::size_t i) {
  LimeOptions o = options;
  o.seed = derive_seed(options.seed, {kLimeStream, i});
  return o;
}

std::string_view importance_source_name(ImportanceSource source) {
  return source == ImportanceSource::kPfi ? "pfi" : "lime";
}

void ImportanceVector::validate() const {
  if (tokens.size() != scores.size()) {
    throw ValidationError("importance vector: token and score counts differ");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("importance vector has a non-finite score");
  }
}

void ImportanceVector::write(std::ostream& out) const {
  validate();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << tokens[i] << ' ' << format_double(scores[i]) << '\n';
  }
}

ImportanceVector ImportanceVector::read(std::istream& in, ImportanceSource source) {
  ImportanceVector v;
  v.source = source;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto space = line.rfind(' ');
    if (space == std::string::npos || space == 0) {
      throw ValidationError("importance file line " + std::to_string(lineno) +
                            ": expected 'token score'");
    }
    double score = 0.0;
    const char* first = line.data() + space + 1;
    const char* last = line.data() + line.size();
    auto res = std::from_chars(first, last, score);
    if (res.ec != std::errc() || res.ptr != last) {
      throw ValidationError("importance file line " + std::to_string(lineno) + ": bad score");
    }
    v.tokens.push_back(line.substr(0, space));
    v.scores.push_back(score);
  }
  v.validate();
  return v;
}

SequenceData permute_feature(const SequenceData& data, std::size_t feature, int repeat,
                             std::uint64_t seed) {
  SequenceData out = data;
  const auto perm = feature_permutation(data.n_subjects(), feature, repeat, seed);
  const Idx col = static_cast<Idx>(feature);
  for (std::size_t t = 0; t < data.n_steps(); ++t) {
    out.steps[t].col(col) = data.steps[t].col(col)(perm);
  }
  return out;
}

PfiResult pfi(const Predictor& predictor, const SequenceData& data, const Eigen::VectorXd& labels,
              const std::vector<std::string>& tokens, const PfiOptions& options) {
  check_pfi_inputs(data, labels, tokens, options);
  const double baseline = error_of(predictor, data, labels);
  const std::size_t f = data.n_features();
  std::vector<std::vector<double>> deltas(f);
  std::vector<std::exception_ptr> errors(f);
#pragma omp parallel
  {
    SequenceData work = data;
#pragma omp for schedule(dynamic)
    for (std::size_t j = 0; j < f; ++j) {
      try {
        deltas[j] = feature_deltas(predictor, work, labels, j, baseline, options);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return assemble_pfi(deltas, tokens, baseline);
}

PfiResult pfi_serial(const Predictor& predictor, const SequenceData& data,
                     const Eigen::VectorXd& labels, const std::vector<std::string>& tokens,
                     const PfiOptions& options) {
  check_pfi_inputs(data, labels, tokens, options);
  const double baseline = error_of(predictor, data, labels);
  SequenceData work = data;
  std::vector<std::vector<double>> deltas;
  for (std::size_t j = 0; j < data.n_features(); ++j) {
    deltas.push_back(feature_deltas(predictor, work, labels, j, baseline, options));
  }
  return assemble_pfi(deltas, tokens, baseline);
}

LimeExplanation lime_local(const Predictor& predictor, const SequenceData& subject,
                           const LimeOptions& options) {
  subject.validate();
  if (subject.n_subjects() != 1) throw ValidationError("lime_local explains one subject");
  if (options.n_samples < 2) throw ConfigError("LIME needs at least 2 samples");
  if (!(options.kernel_width > 0.0)) throw ConfigError("kernel width must be > 0");
  if (options.top_k == 0) throw ConfigError("top_k must be >= 1");

  LimeExplanation out;
  for (std::size_t j = 0; j < subject.n_features(); ++j) {
    for (const auto& s : subject.steps) {
      if (s(0, static_cast<Idx>(j)) != 0.0) {
        out.active.push_back(j);
        break;
      }
    }
  }
  const std::size_t d = out.active.size();
  out.weights.assign(d, 0.0);
  if (d == 0) {
    const Vec p = predictor.predict(subject);
    if (!p.allFinite()) throw ValidationError("predictor returned a non-finite value");
    out.intercept = p(0);
    return out;
  }

  const Idx n = static_cast<Idx>(options.n_samples);
  Rng rng = make_rng(options.seed, {kLimeStream});
  Mat z = Mat::Ones(n, static_cast<Idx>(d));
  std::vector<std::size_t> pool(d);
  for (Idx s = 1; s < n; ++s) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    const auto drop = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(d)));
    for (std::size_t k = 0; k < drop; ++k) {
      const auto pick = static_cast<std::size_t>(
          uniform_int(rng, static_cast<std::int64_t>(k), static_cast<std::int64_t>(d) - 1));
      std::swap(pool[k], pool[pick]);
      z(s, static_cast<Idx>(pool[k])) = 0.0;
    }
  }

  SequenceData batch;
  for (const auto& step : subject.steps) {
    Mat m = step.replicate(n, 1);
    for (std::size_t a = 0; a < d; ++a) {
      const Idx col = static_cast<Idx>(out.active[a]);
      m.col(col).array() *= z.col(static_cast<Idx>(a)).array();
    }
    batch.steps.push_back(std::move(m));
  }
  const Vec y = predictor.predict(batch);
  if (!y.allFinite()) throw ValidationError("predictor returned a non-finite value");
  if ((y.array() == y(0)).all()) {
    out.intercept = y(0);
    return out;
  }

  const Vec dist = (static_cast<double>(d) - z.rowwise().sum().array()) / static_cast<double>(d);
  const double w2 = options.kernel_width * options.kernel_width;
  const Vec kernel = (-(dist.array().square()) / w2).exp();

  auto [beta, intercept] = weighted_ridge(z, y, kernel, options.ridge);
  if (d <= options.top_k) {
    for (std::size_t a = 0; a < d; ++a) out.weights[a] = beta(static_cast<Idx>(a));
    out.intercept = intercept;
    return out;
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(beta(static_cast<Idx>(a))) > std::abs(beta(static_cast<Idx>(b)));
  });
  order.resize(options.top_k);
  std::sort(order.begin(), order.end());
  std::vector<Idx> cols(order.begin(), order.end());
  auto [refit, refit_intercept] = weighted_ridge(z(Eigen::all, cols), y, kernel, options.ridge);
  for (std::size_t k = 0; k < order.size(); ++k) out.weights[order[k]] = refit(static_cast<Idx>(k));
  out.intercept = refit_intercept;
  return out;
}

ImportanceVector lime_global(const Predictor& predictor, const SequenceData& data,
                             const std::vector<std::string>& tokens, const LimeOptions& options) {
  check_lime_inputs(data, tokens);
  const std::size_t n = data.n_subjects();
  std::vector<LimeExplanation> explanations(n);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      explanations[i] = lime_local(predictor, data.rows({i}), lime_subject_options(options, i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return aggregate_lime(explanations, tokens);
}

ImportanceVector lime_global_serial(const Predictor& predictor, const SequenceData& data,
                                    const std::vector<std::string>& tokens,
                                    const LimeOptions& options) {
  check_lime_inputs(data, tokens);
  std::vector<LimeExplanation> explanations;
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    explanations.push_back(lime_local(predictor, data.rows({i}), lime_subject_options(options, i)));
  }
  return aggregate_lime(explanations, tokens);
}

ImportanceVector normalize_importance(const ImportanceVector& v) {
  v.validate();
  double total = 0.0;
  for (double s : v.scores) total += std::abs(s);
  if (total == 0.0) throw ValidationError("cannot normalise an all-zero importance vector");
  ImportanceVector out = v;
  for (double& s : out.scores) s = std::abs(s) / total;
  out.normalized = true;
  return out;
}

RankedList rank_features(const std::vector<double>& scores) {
  RankedList order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

CumulativeCurve cumulative_distribution(const ImportanceVector& normalized) {
  normalized.validate();
  std::vector<double> sorted = normalized.scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  CumulativeCurve out;
  double run = 0.0;
  for (double s : sorted) {
    run += s;
    out.cumulative.push_back(run);
    // Slack absorbs rounding in sums such as 90 x 0.01.
    if (out.n90 == 0 && run >= 0.9 - 1e-12) out.n90 = out.cumulative.size();
  }
  return out;
}

}  // namespace ehrc
