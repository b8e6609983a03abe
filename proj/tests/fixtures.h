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

// Synthetic cohorts encoded for model tests.

#ifndef EHRC_TESTS_FIXTURES_H_
#define EHRC_TESTS_FIXTURES_H_

#include <vector>

#include <Eigen/Dense>

#include "ehrc/encode.h"
#include "ehrc/models.h"
#include "ehrc/random.h"
#include "ehrc/synth.h"

namespace ehrc::testing {

struct EncodedCohort {
  SyntheticCohort synthetic;
  FeatureVocabulary vocab;
  EncodedTensor encoded;
  SequenceData data;
  Eigen::VectorXd y;
};

inline EncodedCohort encode_synthetic(const SynthConfig& config) {
  EncodedCohort out;
  out.synthetic = generate_cohort(config);
  out.vocab = build_vocabulary(out.synthetic.cohort, config.outcome_kind, false);
  out.encoded = encode_sparse(out.synthetic.cohort, config.outcome_kind, out.vocab);
  out.data = SequenceData::from_tensor(out.encoded.tensor);
  const auto labels = out.synthetic.cohort.labels_for(config.outcome_kind);
  out.y.resize(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.y(static_cast<Eigen::Index>(i)) = labels[i].is_event() ? 1.0 : 0.0;
  }
  return out;
}

// Small cohort: 5 latent groups over 61 dynamic features, risk only on
// group 0.
inline SynthConfig small_planted_config(std::size_t n_subjects, std::uint64_t seed,
                                        double weight = 10.0) {
  SynthConfig c;
  c.n_subjects = n_subjects;
  c.n_hospitalisation = 30;
  c.n_prescription = 20;
  c.n_blood_marker = 6;
  c.n_blood_value = 5;
  c.n_history = 3;
  c.n_demographic = 2;
  c.n_latent_groups = 5;
  c.within_group_corr = 0.9;
  c.sparsity_target = 0.83;
  c.event_rate = 0.15;
  c.risk_weights = {weight, 0.0, 0.0, 0.0, 0.0};
  c.seed = seed;
  return c;
}

// Train/test split by subject index parity class.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<Eigen::Index> train_idx() const { return {train.begin(), train.end()}; }
  std::vector<Eigen::Index> test_idx() const { return {test.begin(), test.end()}; }
};

inline Split split_70_30(std::size_t n) {
  Split s;
  for (std::size_t i = 0; i < n; ++i) (i % 10 < 7 ? s.train : s.test).push_back(i);
  return s;
}

// k row blocks against k column blocks of ones; each cell flipped with
// probability `flip`.
struct PlantedBlocks {
  Eigen::MatrixXd a;
  std::vector<int> row_labels;
  std::vector<int> col_labels;
};

inline PlantedBlocks planted_blocks(int n, int m, int k, double flip, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0xb10c});
  PlantedBlocks out;
  out.a.resize(n, m);
  for (int i = 0; i < n; ++i) out.row_labels.push_back(i * k / n);
  for (int j = 0; j < m; ++j) out.col_labels.push_back(j * k / m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double v = out.row_labels[i] == out.col_labels[j] ? 1.0 : 0.0;
      if (uniform01(rng) < flip) v = 1.0 - v;
      out.a(i, j) = v;
    }
  }
  return out;
}

// Independent Bernoulli(density) cells.
inline Eigen::MatrixXd noise_matrix(int n, int m, double density, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x4015e});
  Eigen::MatrixXd a(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) a(i, j) = uniform01(rng) < density ? 1.0 : 0.0;
  }
  return a;
}

// 500 subjects, 60 dynamic features in 3 latent groups, light background
// noise, no static features.
inline SynthConfig three_group_config(std::uint64_t seed) {
  SynthConfig c;
  c.n_subjects = 500;
  c.n_hospitalisation = 20;
  c.n_prescription = 20;
  c.n_blood_marker = 10;
  c.n_blood_value = 10;
  c.n_history = 0;
  c.n_demographic = 0;
  c.n_latent_groups = 3;
  c.background_rate = 0.01;
  c.sparsity_target = 0.9;
  c.risk_weights = {1.0, 0.0, 0.0};
  c.seed = seed;
  return c;
}

}  // namespace ehrc::testing

#endif  // EHRC_TESTS_FIXTURES_H_
