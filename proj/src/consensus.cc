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

#include "ehrc/consensus.h"

#include <algorithm>
#include <ostream>
#include <unordered_set>

#include "ehrc/encode.h"

namespace ehrc {
namespace {

// Up to ten tokens, comma separated, for error messages.
std::string first_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size() && i < 10; ++i) {
    if (i) out += ", ";
    out += tokens[i];
  }
  if (tokens.size() > 10) out += ", ...";
  return out;
}

std::vector<std::string> missing_from(const std::vector<std::string>& a,
                                      const std::vector<std::string>& b) {
  std::unordered_set<std::string> in_b(b.begin(), b.end());
  std::vector<std::string> out;
  for (const auto& t : a) {
    if (!in_b.count(t)) out.push_back(t);
  }
  return out;
}

void check_models(const std::vector<ModelImportance>& models,
                  const std::vector<int>* feature_labels) {
  if (models.size() < 2) throw ValidationError("agreement needs at least two models");
  const auto& ref = models.front();
  ref.importance.validate();
  for (std::size_t m = 1; m < models.size(); ++m) {
    const auto& imp = models[m].importance;
    imp.validate();
    if (imp.tokens == ref.importance.tokens) continue;
    auto extra = missing_from(imp.tokens, ref.importance.tokens);
    auto absent = missing_from(ref.importance.tokens, imp.tokens);
    std::string msg = "model '" + models[m].name + "' vocabulary differs from '" + ref.name + "'";
    if (!extra.empty()) msg += "; extra: " + first_tokens(extra);
    if (!absent.empty()) msg += "; missing: " + first_tokens(absent);
    if (extra.empty() && absent.empty()) msg += "; same tokens in a different order";
    throw ValidationError(msg);
  }
  if (feature_labels && feature_labels->size() != ref.importance.size()) {
    throw ValidationError("cluster labels cover " + std::to_string(feature_labels->size()) +
                          " features, rankings have " +
                          std::to_string(ref.importance.size()));
  }
}

AgreementMatrix identity_matrix(const std::vector<ModelImportance>& models) {
  AgreementMatrix m;
  for (const auto& model : models) m.names.push_back(model.name);
  const auto n = static_cast<Eigen::Index>(models.size());
  m.values = Eigen::MatrixXd::Identity(n, n);
  return m;
}

struct PairScores {
  double raw = 0.0;
  double clustered = 0.0;
};

PairScores score_pair(const RankedList& a, const RankedList& b,
                      const std::vector<int>* feature_labels, const RboParams& params) {
  PairScores s;
  s.raw = rbo(a, b, params);
  if (feature_labels) s.clustered = clustered_rbo(a, b, *feature_labels, params);
  return s;
}

Agreement assemble(const std::vector<ModelImportance>& models,
                   const std::vector<int>* feature_labels,
                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                   const std::vector<PairScores>& scores) {
  Agreement out;
  out.raw = identity_matrix(models);
  if (feature_labels) out.clustered = identity_matrix(models);
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const auto i = static_cast<Eigen::Index>(pairs[q].first);
    const auto j = static_cast<Eigen::Index>(pairs[q].second);
    out.raw.values(i, j) = out.raw.values(j, i) = scores[q].raw;
    if (feature_labels) {
      out.clustered->values(i, j) = out.clustered->values(j, i) = scores[q].clustered;
    }
  }
  return out;
}

Agreement agreement_impl(const std::vector<ModelImportance>& models,
                         const std::vector<int>* feature_labels, const RboParams& params,
                         bool parallel) {
  check_models(models, feature_labels);
  params.validate();
  std::vector<RankedList> ranked;
  for (const auto& m : models) ranked.push_back(rank_features(m.importance.scores));
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) pairs.emplace_back(i, j);
  }
  std::vector<PairScores> scores(pairs.size());
  const auto n_pairs = static_cast<std::int64_t>(pairs.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t q = 0; q < n_pairs; ++q) {
      const auto& [i, j] = pairs[static_cast<std::size_t>(q)];
      scores[static_cast<std::size_t>(q)] = score_pair(ranked[i], ranked[j], feature_labels, params);
    }
  } else {
    for (std::int64_t q = 0; q < n_pairs; ++q) {
      const auto& [i, j] = pairs[static_cast<std::size_t>(q)];
      scores[static_cast<std::size_t>(q)] = score_pair(ranked[i], ranked[j], feature_labels, params);
    }
  }
  return assemble(models, feature_labels, pairs, scores);
}

}  // namespace

void RboParams::validate() const {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("rbo p must lie in (0, 1)");
  if (depth && *depth < 1) throw ConfigError("rbo depth must be >= 1");
}

ClusterList cluster_rank(const RankedList& ranked, const std::vector<int>& feature_labels) {
  ClusterList out;
  std::unordered_set<int> seen;
  for (std::size_t f : ranked) {
    if (f >= feature_labels.size()) {
      throw ValidationError("feature " + std::to_string(f) + " has no cluster label");
    }
    const int c = feature_labels[f];
    if (seen.insert(c).second) out.push_back(c);
  }
  return out;
}

double clustered_rbo(const RankedList& s, const RankedList& t,
                     const std::vector<int>& feature_labels, const RboParams& params) {
  const ClusterList cs = cluster_rank(s, feature_labels);
  const ClusterList ct = cluster_rank(t, feature_labels);
  RboParams p = params;
  p.depth = std::min(cs.size(), ct.size());
  return rbo(cs, ct, p);
}

void AgreementMatrix::validate() const {
  const auto n = static_cast<Eigen::Index>(names.size());
  if (values.rows() != n || values.cols() != n) {
    throw ValidationError("agreement matrix shape does not match its names");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (values(i, i) != 1.0) throw ValidationError("agreement diagonal must be 1");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (values(i, j) != values(j, i)) throw ValidationError("agreement matrix not symmetric");
      if (!(values(i, j) >= 0.0 && values(i, j) <= 1.0)) {
        throw ValidationError("agreement score outside [0, 1]");
      }
    }
  }
}

void AgreementMatrix::write(std::ostream& out) const {
  validate();
  out << "model";
  for (const auto& n : names) out << '\t' << n;
  out << '\n';
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << names[i];
    for (std::size_t j = 0; j < names.size(); ++j) {
      out << '\t'
          << format_double(values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

Agreement agreement_matrix(const std::vector<ModelImportance>& models,
                           const std::vector<int>* feature_labels, const RboParams& params) {
  return agreement_impl(models, feature_labels, params, true);
}

Agreement agreement_matrix_serial(const std::vector<ModelImportance>& models,
                                  const std::vector<int>* feature_labels,
                                  const RboParams& params) {
  return agreement_impl(models, feature_labels, params, false);
}

std::vector<CrossOutcomeRow> cross_outcome_agreement(
    const std::vector<ModelImportance>& first, const std::vector<ModelImportance>& second,
    const std::map<std::string, int>& token_labels, const RboParams& params) {
  std::vector<CrossOutcomeRow> out;
  for (const auto& a : first) {
    auto it = std::find_if(second.begin(), second.end(),
                           [&](const ModelImportance& m) { return m.name == a.name; });
    if (it == second.end()) continue;
    const auto& b = *it;
    a.importance.validate();
    b.importance.validate();

    CrossOutcomeRow row;
    row.name = a.name;
    row.only_first = missing_from(a.importance.tokens, b.importance.tokens);
    row.only_second = missing_from(b.importance.tokens, a.importance.tokens);

    // Shared tokens in the first vocabulary's order.
    std::map<std::string, std::size_t> b_index;
    for (std::size_t i = 0; i < b.importance.size(); ++i) b_index[b.importance.tokens[i]] = i;
    std::vector<double> sa;
    std::vector<double> sb;
    std::vector<int> labels;
    for (std::size_t i = 0; i < a.importance.size(); ++i) {
      const auto& tok = a.importance.tokens[i];
      auto bi = b_index.find(tok);
      if (bi == b_index.end()) continue;
      auto li = token_labels.find(tok);
      if (li == token_labels.end()) {
        throw ValidationError("shared token '" + tok + "' has no cluster label");
      }
      sa.push_back(a.importance.scores[i]);
      sb.push_back(b.importance.scores[bi->second]);
      labels.push_back(li->second);
    }
    if (sa.empty()) {
      throw ValidationError("model '" + a.name + "': the two outcomes share no tokens");
    }
    row.shared = sa.size();
    row.score = clustered_rbo(rank_features(sa), rank_features(sb), labels, params);
    out.push_back(std::move(row));
  }
  if (out.empty()) throw ValidationError("no model name appears for both outcomes");
  return out;
}

std::string family_tag(std::string_view token) {
  const auto family = family_of_token(token);
  if (!family) return "other";
  switch (*family) {
    case Family::kHistoryOfDisease: return "history";
    case Family::kDemographic: return "demographics";
    case Family::kHospitalisation: return "hospitalisation";
    case Family::kPrescription: return "prescription";
    case Family::kBloodTestMarker:
    case Family::kBloodTestValue: return "blood test";
  }
  return "other";
}

std::vector<TopKEntry> top_k_table(const std::vector<ModelImportance>& models, std::size_t k) {
  if (k < 1) throw ConfigError("top-k needs k >= 1");
  std::vector<TopKEntry> out;
  for (const auto& m : models) {
    m.importance.validate();
    const RankedList order = rank_features(m.importance.scores);
    for (std::size_t r = 0; r < k && r < order.size(); ++r) {
      TopKEntry e;
      e.model = m.name;
      e.rank = r + 1;
      e.token = m.importance.tokens[order[r]];
      e.score = m.importance.scores[order[r]];
      e.family = family_tag(e.token);
      out.push_back(std::move(e));
    }
  }
  return out;
}

void write_top_k_table(std::ostream& out, const std::vector<TopKEntry>& rows) {
  out << "model\trank\ttoken\tscore\tfamily\n";
  for (const auto& r : rows) {
    out << r.model << '\t' << r.rank << '\t' << r.token << '\t' << format_double(r.score)
        << '\t' << r.family << '\n';
  }
}

}  // namespace ehrc
