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

// Rank biased overlap, its cluster-level variant, and agreement between the
// feature rankings of several models.

#ifndef EHRC_CONSENSUS_H_
#define EHRC_CONSENSUS_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ehrc/core.h"
#include "ehrc/interpret.h"

namespace ehrc {

struct RboParams {
  double p = 0.9;
  // Evaluation depth; unset means the shorter list's length.
  std::optional<std::size_t> depth;

  void validate() const;
};

// (X_k / k) p^k + ((1 - p) / p) sum_{d=1..k} (X_d / d) p^d, where X_d is the
// overlap of the two depth-d heads. Items must be unique within each list.
template <typename T>
double rbo(const std::vector<T>& s, const std::vector<T>& t, const RboParams& params = {}) {
  params.validate();
  if (s.empty() || t.empty()) throw ValidationError("rbo of an empty list");
  const std::size_t shortest = std::min(s.size(), t.size());
  const std::size_t k = params.depth.value_or(shortest);
  if (k > shortest) {
    throw ValidationError("rbo depth " + std::to_string(k) + " exceeds list length " +
                          std::to_string(shortest));
  }
  if (std::set<T>(s.begin(), s.end()).size() != s.size() ||
      std::set<T>(t.begin(), t.end()).size() != t.size()) {
    throw ValidationError("rbo lists must not repeat items");
  }
  std::set<T> seen_s;
  std::set<T> seen_t;
  double overlap = 0.0;
  double sum = 0.0;
  double pd = 1.0;
  for (std::size_t d = 1; d <= k; ++d) {
    const T& a = s[d - 1];
    const T& b = t[d - 1];
    if (a == b) {
      overlap += 1.0;
    } else {
      if (seen_t.count(a)) overlap += 1.0;
      if (seen_s.count(b)) overlap += 1.0;
    }
    seen_s.insert(a);
    seen_t.insert(b);
    pd *= params.p;
    sum += overlap / static_cast<double>(d) * pd;
  }
  const double p = params.p;
  // Rounding can push identical lists a hair past 1.
  return std::clamp(overlap / static_cast<double>(k) * pd + (1.0 - p) / p * sum, 0.0, 1.0);
}

using ClusterList = std::vector<int>;

// Features replaced by their cluster, keeping first appearances only.
ClusterList cluster_rank(const RankedList& ranked, const std::vector<int>& feature_labels);

// rbo over cluster_rank of both lists at depth min of the deduplicated lengths.
double clustered_rbo(const RankedList& s, const RankedList& t,
                     const std::vector<int>& feature_labels, const RboParams& params = {});

struct ModelImportance {
  std::string name;
  ImportanceVector importance;
};

struct AgreementMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd values;

  void validate() const;
  // Header row of names, then one row per model; tab separated.
  void write(std::ostream& out) const;
  friend bool operator==(const AgreementMatrix& a, const AgreementMatrix& b) {
    return a.names == b.names && a.values == b.values;
  }
};

struct Agreement {
  AgreementMatrix raw;
  std::optional<AgreementMatrix> clustered;
};

// Pairwise rbo between models (and clustered rbo when labels are given).
// Every model must carry the same token list. Pairs run in parallel.
Agreement agreement_matrix(const std::vector<ModelImportance>& models,
                           const std::vector<int>* feature_labels,
                           const RboParams& params = {});
Agreement agreement_matrix_serial(const std::vector<ModelImportance>& models,
                                  const std::vector<int>* feature_labels,
                                  const RboParams& params = {});

struct CrossOutcomeRow {
  std::string name;
  double score = 0.0;
  std::size_t shared = 0;
  std::vector<std::string> only_first;
  std::vector<std::string> only_second;
};

// Clustered rbo between each model's rankings for two outcomes, restricted
// to the tokens both vocabularies contain. Models are matched by name.
std::vector<CrossOutcomeRow> cross_outcome_agreement(
    const std::vector<ModelImportance>& first, const std::vector<ModelImportance>& second,
    const std::map<std::string, int>& token_labels, const RboParams& params = {});

// "history", "demographics", "hospitalisation", "prescription", "blood test";
// "other" for tokens outside the encoded families.
std::string family_tag(std::string_view token);

struct TopKEntry {
  std::string model;
  std::size_t rank = 0;  // 1-based
  std::string token;
  double score = 0.0;
  std::string family;
};

std::vector<TopKEntry> top_k_table(const std::vector<ModelImportance>& models, std::size_t k);
void write_top_k_table(std::ostream& out, const std::vector<TopKEntry>& rows);

}  // namespace ehrc

#endif  // EHRC_CONSENSUS_H_
