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

// Global feature importance: permutation importance, local surrogate
// explanations aggregated over a dataset, and ranking utilities.

#ifndef EHRC_INTERPRET_H_
#define EHRC_INTERPRET_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ehrc/models.h"

namespace ehrc {

enum class ImportanceSource { kPfi, kLime };

std::string_view importance_source_name(ImportanceSource source);

struct ImportanceVector {
  std::vector<std::string> tokens;
  std::vector<double> scores;
  ImportanceSource source = ImportanceSource::kPfi;
  bool normalized = false;

  std::size_t size() const { return scores.size(); }
  void validate() const;
  // "token score" per line, scores in shortest round-trip form.
  void write(std::ostream& out) const;
  static ImportanceVector read(std::istream& in, ImportanceSource source);
};

// ---- permutation importance -------------------------------------------------

struct PfiOptions {
  int n_repeats = 5;
  std::uint64_t seed = 1;
};

struct PfiResult {
  ImportanceVector importance;  // mean of e_perm - e_orig per feature
  std::vector<double> sd;       // spread over repeats (sample sd)
  double baseline_error = 0.0;
};

// Error is 1 - AUC. Feature j is permuted across subjects jointly in every
// time step. Features run in parallel.
PfiResult pfi(const Predictor& predictor, const SequenceData& data,
              const Eigen::VectorXd& labels, const std::vector<std::string>& tokens,
              const PfiOptions& options = {});
PfiResult pfi_serial(const Predictor& predictor, const SequenceData& data,
                     const Eigen::VectorXd& labels,
                     const std::vector<std::string>& tokens,
                     const PfiOptions& options = {});

// The permuted copy used for (feature, repeat); exposed for tests.
SequenceData permute_feature(const SequenceData& data, std::size_t feature,
                             int repeat, std::uint64_t seed);

// ---- local surrogates -------------------------------------------------------

struct LimeOptions {
  std::size_t n_samples = 1000;
  double kernel_width = 0.25;
  std::size_t top_k = 10;
  double ridge = 1.0;
  std::uint64_t seed = 1;
};

struct LimeExplanation {
  std::vector<std::size_t> active;  // interpretable features: nonzero in x
  std::vector<double> weights;      // aligned with `active`; at most top_k nonzero
  double intercept = 0.0;
};

// `subject` is a single-subject SequenceData. Perturbations drop random
// subsets of the active features (all steps); proximity is
// exp(-d^2 / width^2) on the fraction dropped.
LimeExplanation lime_local(const Predictor& predictor, const SequenceData& subject,
                           const LimeOptions& options = {});

// Options used for subject `i` inside lime_global (seed derived from i).
LimeOptions lime_subject_options(const LimeOptions& options, std::size_t i);

// Mean |weight| per feature over the subjects where it is active; zero for
// features never active. Subjects run in parallel with per-subject seeds.
ImportanceVector lime_global(const Predictor& predictor, const SequenceData& data,
                             const std::vector<std::string>& tokens,
                             const LimeOptions& options = {});
ImportanceVector lime_global_serial(const Predictor& predictor, const SequenceData& data,
                                    const std::vector<std::string>& tokens,
                                    const LimeOptions& options = {});

// ---- ranking -----------------------------------------------------------------

// |s| / sum |s|. Throws ValidationError on an all-zero vector.
ImportanceVector normalize_importance(const ImportanceVector& v);

using RankedList = std::vector<std::size_t>;

// Descending score; ties by ascending index.
RankedList rank_features(const std::vector<double>& scores);

struct CumulativeCurve {
  std::vector<double> cumulative;  // over scores sorted descending
  std::size_t n90 = 0;             // shortest prefix reaching 0.9
};

CumulativeCurve cumulative_distribution(const ImportanceVector& normalized);

}  // namespace ehrc

#endif  // EHRC_INTERPRET_H_
