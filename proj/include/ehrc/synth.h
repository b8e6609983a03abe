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

// Synthetic cohort generator with planted feature groups and a planted risk
// signal. Each subject belongs to at most one latent group; members of a
// group emit Poisson event counts on that group's features, which makes the
// group's features mutually correlated. Labels follow a logistic model on
// group membership.

#ifndef EHRC_SYNTH_H_
#define EHRC_SYNTH_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ehrc/core.h"

namespace ehrc {

struct SynthConfig {
  std::size_t n_subjects = 2000;
  std::size_t n_hospitalisation = 318;
  std::size_t n_prescription = 196;
  // 51 tested panels plus "other": 52 markers and 51 value features.
  std::size_t n_blood_marker = 52;
  std::size_t n_blood_value = 51;
  std::size_t n_history = 10;
  // 2 = age and sex, 1 = age only, 0 = none.
  std::size_t n_demographic = 2;

  std::size_t n_latent_groups = 82;
  double within_group_corr = 0.942;
  // Independent Poisson rate per (feature, bin) on top of group activity.
  double background_rate = 0.0;
  double event_rate = 0.3;
  double sparsity_target = 0.989;
  // One coefficient per latent group; empty means default_risk_weight on the
  // first fifth of the groups and zero elsewhere.
  std::vector<double> risk_weights;
  double default_risk_weight = 2.0;
  double history_rate = 0.05;
  double sentence_length_min = 80.0;
  double sentence_length_max = 100.0;
  OutcomeKind outcome_kind = OutcomeKind::kSuddenDeathComposite;
  std::uint64_t seed = 1;
  // Stream used for label draws; defaults to `seed`.
  std::optional<std::uint64_t> label_seed;

  void validate() const;
  std::size_t dynamic_feature_count() const {
    return n_hospitalisation + n_prescription + n_blood_marker + n_blood_value;
  }
  std::size_t total_feature_count() const {
    return dynamic_feature_count() + n_history + n_demographic;
  }
  std::vector<double> effective_risk_weights() const;
};

// Key-value text: one "key = value" per line, '#' comments. risk_weights is a
// comma-separated list. Unknown keys are a ConfigError.
SynthConfig parse_synth_config(const std::string& text);
void apply_synth_setting(SynthConfig& config, const std::string& key,
                         const std::string& value);

// Parameters solved from the config targets.
struct GeneratorParameters {
  double membership_prob = 0.0;  // per group
  double group_rate = 0.0;       // per (feature, bin) Poisson rate for members
  double intercept = 0.0;        // logistic intercept
  double expected_sparsity = 0.0;
};

// Throws ConfigError naming the achievable bound when infeasible.
GeneratorParameters solve_parameters(const SynthConfig& config);

struct GroundTruth {
  std::vector<std::string> feature_tokens;
  std::vector<int> feature_group;  // -1 for static features
  std::vector<std::string> subject_ids;
  std::vector<int> subject_group;  // -1 for none
  std::vector<double> subject_risk;
  std::vector<std::string> excluded_subjects;  // generated without any event
  GeneratorParameters parameters;

  void write(std::ostream& out) const;
};

struct SyntheticCohort {
  Cohort cohort;
  GroundTruth truth;
};

SyntheticCohort generate_cohort(const SynthConfig& config);

struct CohortStats {
  std::size_t n_subjects = 0;
  std::size_t n_features = 0;
  double sparsity = 0.0;
  double length_min = 0.0;
  double length_max = 0.0;
  double length_mean = 0.0;
  double length_sd = 0.0;  // population standard deviation
  double event_rate = 0.0;
};

CohortStats cohort_stats(const Cohort& cohort, OutcomeKind kind);

}  // namespace ehrc

#endif  // EHRC_SYNTH_H_
