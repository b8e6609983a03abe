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

// Spectral co-clustering of a subjects x features matrix, cluster count
// selection, bootstrap stability, and feature correlation analytics.

#ifndef EHRC_COCLUSTER_H_
#define EHRC_COCLUSTER_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ehrc {

struct CoClusterOptions {
  int kmeans_restarts = 10;
  int kmeans_max_iter = 300;
  // Reassignment sweeps enforcing the block conditions; 0 skips repair.
  int max_sweeps = 100;
  // Block weights taken from D1^-1/2 A D2^-1/2 instead of A.
  bool normalized_weights = true;
};

struct CoClusterModel {
  int k = 0;
  // Label k marks all-zero rows/columns (the sink).
  std::vector<int> feature_labels;
  std::vector<int> patient_labels;
  int nonempty_feature_clusters = 0;
  int nonempty_patient_clusters = 0;
  bool kmeans_converged = true;
  int sweeps = 0;
  bool repair_converged = true;
  bool normalized_weights = true;

  int sink() const { return k; }
  void validate(std::size_t n_subjects, std::size_t n_features) const;
  // "token cluster_id" per feature.
  void write_feature_labels(std::ostream& out, const std::vector<std::string>& tokens) const;
};

// Joint row/column embedding: D1^-1/2 U and D2^-1/2 V over singular vectors
// 2..n_vectors+1 of D1^-1/2 A D2^-1/2. Zero rows/columns embed at the origin.
struct SpectralEmbedding {
  Eigen::MatrixXd rows;
  Eigen::MatrixXd cols;
};
SpectralEmbedding spectral_embedding(const Eigen::MatrixXd& a, int n_vectors);

CoClusterModel spectral_cocluster(const Eigen::MatrixXd& a, int k, std::uint64_t seed,
                                  const CoClusterOptions& options = {});

// True iff every non-sink feature's weight to its own patient cluster is at
// least its weight to any other, and likewise for patients. Weights come
// from the matrix the model was repaired against.
bool satisfies_block_conditions(const Eigen::MatrixXd& a, const CoClusterModel& model);

struct KDiagnostics {
  int k = 0;
  double ssd = 0.0;        // within-cluster squared distance in a shared embedding
  int singletons = 0;      // feature clusters with exactly one member
  int nonempty_features = 0;
  int nonempty_patients = 0;
};

struct KChoice {
  int k = 0;
  int knee = 0;
  std::vector<KDiagnostics> table;

  // Tab-separated, one row per candidate.
  void write(std::ostream& out) const;
};

// Every candidate is clustered with the same seed. The embedding used for
// the dispersion curve has ceil(log2 k_max) vectors for all candidates.
KChoice choose_k(const Eigen::MatrixXd& a, const std::vector<int>& k_range, std::uint64_t seed,
                 const CoClusterOptions& options = {});

struct StabilityResult {
  double mean = 0.0;
  std::vector<double> pair_scores;
  int replicates = 0;
  int skipped = 0;  // replicates whose feature clusters collapsed to one
};

// Rows resampled with replacement per replicate; feature labels of each
// replicate pair are aligned greedily and compared with rbo over
// (feature, label) items in feature order.
StabilityResult bootstrap_stability(const Eigen::MatrixXd& a, int k, int n_boot,
                                    std::uint64_t seed, double rbo_p = 0.9,
                                    const CoClusterOptions& options = {});
StabilityResult bootstrap_stability_serial(const Eigen::MatrixXd& a, int k, int n_boot,
                                           std::uint64_t seed, double rbo_p = 0.9,
                                           const CoClusterOptions& options = {});

// Relabels `labels` to best match `reference` by greedy maximal overlap.
std::vector<int> align_labels(const std::vector<int>& reference, const std::vector<int>& labels);

struct CorrelationResult {
  Eigen::MatrixXd corr;
  std::vector<std::size_t> zero_variance;  // correlate 0 with all, 1 with self
};

CorrelationResult pearson_corr_matrix(const Eigen::MatrixXd& a);
CorrelationResult pearson_corr_matrix_serial(const Eigen::MatrixXd& a);

struct ClusterEdge {
  int a = 0;
  int b = 0;  // a < b
  int n_pairs = 0;
  friend bool operator==(const ClusterEdge&, const ClusterEdge&) = default;
};

// Edges between distinct clusters with at least one feature pair whose
// correlation exceeds the threshold; sorted by (a, b).
std::vector<ClusterEdge> cluster_connectivity(const Eigen::MatrixXd& corr,
                                              const std::vector<int>& feature_labels,
                                              double threshold = 0.5);

struct ClusterEventRow {
  int cluster = 0;
  std::size_t total = 0;
  std::vector<std::size_t> counts;  // per category
  std::vector<double> proportions;
};

// One row per cluster present, ascending cluster id. Categories lie in
// [0, n_categories).
std::vector<ClusterEventRow> patient_cluster_event_distribution(
    const std::vector<int>& patient_labels, const std::vector<int>& categories,
    std::size_t n_categories);

}  // namespace ehrc

#endif  // EHRC_COCLUSTER_H_
