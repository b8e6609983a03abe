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

#include <map>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "ehrc/cocluster.h"
#include "ehrc/consensus.h"
#include "fixtures.h"
#include "oracles.h"
#include "test_util.h"

using namespace ehrc;
using ehrc::testing::adjusted_rand_index;
using ehrc::testing::block_conditions_oracle;
using Mat = Eigen::MatrixXd;

namespace {

Mat synth_matrix(const SynthConfig& config) {
  const auto cohort = ehrc::testing::encode_synthetic(config);
  return collapse_time(cohort.encoded.tensor, cohort.vocab);
}

std::vector<int> range_2_10() {
  std::vector<int> ks(9);
  std::iota(ks.begin(), ks.end(), 2);
  return ks;
}

}  // namespace

TEST_CASE("two 2x2 blocks split exactly") {
  Mat a = Mat::Zero(4, 4);
  a.topLeftCorner(2, 2).setOnes();
  a.bottomRightCorner(2, 2).setOnes();
  const auto m = spectral_cocluster(a, 2, 1);
  CHECK(m.patient_labels[0] == m.patient_labels[1]);
  CHECK(m.patient_labels[2] == m.patient_labels[3]);
  CHECK(m.patient_labels[0] != m.patient_labels[2]);
  CHECK(m.feature_labels[0] == m.feature_labels[1]);
  CHECK(m.feature_labels[2] == m.feature_labels[3]);
  CHECK(m.feature_labels[0] != m.feature_labels[2]);
  // Co-cluster ids agree across dimensions.
  CHECK(m.patient_labels[0] == m.feature_labels[0]);
  CHECK(m.nonempty_feature_clusters == 2);
  CHECK(m.nonempty_patient_clusters == 2);
}

TEST_CASE("k = 1 labels everything 0") {
  const auto fx = ehrc::testing::planted_blocks(10, 6, 2, 0.1, 3);
  const auto m = spectral_cocluster(fx.a, 1, 1);
  for (int l : m.feature_labels) CHECK(l == 0);
  for (int l : m.patient_labels) CHECK(l == 0);
}

TEST_CASE("planted 30x12 blocks recovered under 5% noise") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto fx = ehrc::testing::planted_blocks(30, 12, 3, 0.05, seed);
    const auto m = spectral_cocluster(fx.a, 3, seed);
    CHECK(adjusted_rand_index(m.patient_labels, fx.row_labels) >= 0.95);
    CHECK(adjusted_rand_index(m.feature_labels, fx.col_labels) >= 0.95);
    CHECK(satisfies_block_conditions(fx.a, m));
    CHECK(block_conditions_oracle(fx.a, m));
  }
}

TEST_CASE("repair leaves outputs at a fixed point on random matrices") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Mat a = ehrc::testing::noise_matrix(40, 15, 0.3, seed);
    a += 2.0 * ehrc::testing::planted_blocks(40, 15, 4, 0.0, seed).a;
    const auto m = spectral_cocluster(a, 4, seed);
    REQUIRE(m.repair_converged);
    CHECK(satisfies_block_conditions(a, m));
    CHECK(block_conditions_oracle(a, m));
  }
}

TEST_CASE("block condition check catches a swapped feature") {
  Mat a = Mat::Zero(4, 4);
  a.topLeftCorner(2, 2).setOnes();
  a.bottomRightCorner(2, 2).setOnes();
  CoClusterModel m;
  m.k = 2;
  m.patient_labels = {0, 0, 1, 1};
  m.feature_labels = {0, 0, 1, 1};
  CHECK(satisfies_block_conditions(a, m));
  m.feature_labels = {1, 0, 1, 1};
  CHECK_FALSE(satisfies_block_conditions(a, m));
  CHECK_FALSE(block_conditions_oracle(a, m));
}

TEST_CASE("zero rows and columns go to the sink") {
  auto fx = ehrc::testing::planted_blocks(12, 8, 2, 0.0, 1);
  fx.a.row(5).setZero();
  fx.a.col(2).setZero();
  const auto m = spectral_cocluster(fx.a, 2, 1);
  CHECK(m.patient_labels[5] == 2);
  CHECK(m.feature_labels[2] == 2);
  CHECK(m.sink() == 2);
  for (int i = 0; i < 12; ++i) {
    if (i != 5) CHECK(m.patient_labels[i] < 2);
  }
  CHECK(satisfies_block_conditions(fx.a, m));
}

TEST_CASE("invalid inputs are rejected") {
  const auto fx = ehrc::testing::planted_blocks(6, 4, 2, 0.0, 1);
  CHECK_THROWS_AS(spectral_cocluster(fx.a, 0, 1), ValidationError);
  CHECK_THROWS_AS(spectral_cocluster(fx.a, 5, 1), ValidationError);
  Mat neg = fx.a;
  neg(0, 0) = -1.0;
  CHECK_THROWS_AS(spectral_cocluster(neg, 2, 1), ValidationError);
  CHECK_THROWS_AS(spectral_cocluster(Mat::Zero(4, 4), 2, 1), ValidationError);
}

TEST_CASE("deterministic and invariant to row and column order") {
  const auto fx = ehrc::testing::planted_blocks(40, 16, 4, 0.05, 9);
  const auto m1 = spectral_cocluster(fx.a, 4, 3);
  const auto m2 = spectral_cocluster(fx.a, 4, 3);
  CHECK(m1.feature_labels == m2.feature_labels);
  CHECK(m1.patient_labels == m2.patient_labels);

  Rng rng = make_rng(5);
  const auto rp = random_permutation(40, rng);
  const auto cp = random_permutation(16, rng);
  Mat b(40, 16);
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 16; ++j) b(i, j) = fx.a(rp[i], cp[j]);
  }
  const auto mb = spectral_cocluster(b, 4, 3);
  std::vector<int> rows_back(40);
  std::vector<int> cols_back(16);
  for (int i = 0; i < 40; ++i) rows_back[rp[i]] = mb.patient_labels[i];
  for (int j = 0; j < 16; ++j) cols_back[cp[j]] = mb.feature_labels[j];
  CHECK(adjusted_rand_index(rows_back, m1.patient_labels) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index(cols_back, m1.feature_labels) == doctest::Approx(1.0));
}

TEST_CASE("choose_k finds three planted groups") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Mat a = synth_matrix(ehrc::testing::three_group_config(seed));
    const auto choice = choose_k(a, range_2_10(), seed);
    CHECK(choice.k == 3);
    CHECK(choice.table.size() == 9);
  }
}

TEST_CASE("choose_k on a single candidate") {
  const auto fx = ehrc::testing::planted_blocks(20, 10, 2, 0.0, 1);
  const auto choice = choose_k(fx.a, {4}, 1);
  CHECK(choice.k == 4);
  REQUIRE(choice.table.size() == 1);
  CHECK(choice.table[0].k == 4);
  std::ostringstream out;
  choice.write(out);
  CHECK(out.str().rfind("k\tssd\tsingletons", 0) == 0);
  CHECK_THROWS_AS(choose_k(fx.a, {}, 1), ConfigError);
}

TEST_CASE("choose_k diagnostics count singleton feature clusters") {
  const auto fx = ehrc::testing::planted_blocks(30, 12, 3, 0.05, 2);
  const auto choice = choose_k(fx.a, {2, 3, 4, 5}, 2);
  for (const auto& row : choice.table) {
    const auto m = spectral_cocluster(fx.a, row.k, 2);
    std::map<int, int> sizes;
    for (int l : m.feature_labels) ++sizes[l];
    int singles = 0;
    for (const auto& [l, n] : sizes) singles += l < row.k && n == 1;
    CHECK(row.singletons == singles);
    CHECK(row.nonempty_features == m.nonempty_feature_clusters);
  }
}

TEST_CASE("align_labels undoes a relabelling") {
  const std::vector<int> ref = {0, 0, 1, 1, 2, 2, 2};
  const std::vector<int> perm = {5, 5, 3, 3, 7, 7, 7};
  CHECK(align_labels(ref, perm) == ref);
  // A label with no partner left gets a fresh id.
  const std::vector<int> split = {0, 0, 1, 1, 1, 4, 2};
  const auto aligned = align_labels({0, 0, 1, 1, 1, 1, 1}, split);
  CHECK(aligned[0] == 0);
  CHECK(aligned[2] == 1);
  CHECK(aligned[5] >= 2);
  CHECK(aligned[6] >= 2);
  CHECK(aligned[5] != aligned[6]);
}

TEST_CASE("bootstrap stability is 1 on noise-free blocks") {
  const auto fx = ehrc::testing::planted_blocks(60, 18, 3, 0.0, 1);
  const auto s = bootstrap_stability(fx.a, 3, 20, 7);
  CHECK(s.mean == 1.0);
  CHECK(s.skipped == 0);
  CHECK(s.pair_scores.size() == 190);
}

TEST_CASE("bootstrap stability separates planted blocks from noise") {
  const auto fx = ehrc::testing::planted_blocks(200, 60, 3, 0.05, 2);
  const auto planted = bootstrap_stability(fx.a, 3, 20, 2);
  CHECK(planted.mean >= 0.9);
  const Mat noise = ehrc::testing::noise_matrix(200, 60, fx.a.mean(), 2);
  // Without structure the block conditions pull every replicate into one
  // cluster, and collapsed replicates are skipped.
  const auto collapsed = bootstrap_stability(noise, 8, 20, 2);
  CHECK(collapsed.skipped == 20);
  CHECK(collapsed.mean == 0.0);
  CoClusterOptions embedding_only;
  embedding_only.max_sweeps = 0;
  const auto raw = bootstrap_stability(noise, 8, 20, 2, 0.9, embedding_only);
  CHECK(raw.skipped == 0);
  CHECK(planted.mean - raw.mean >= 0.2);
}

TEST_CASE("bootstrap parallel equals serial") {
  const auto fx = ehrc::testing::planted_blocks(50, 20, 4, 0.1, 4);
  const auto p = bootstrap_stability(fx.a, 4, 6, 11);
  const auto s = bootstrap_stability_serial(fx.a, 4, 6, 11);
  CHECK(p.pair_scores == s.pair_scores);
  CHECK(p.mean == s.mean);
  CHECK_THROWS_AS(bootstrap_stability(fx.a, 4, 1, 11), ConfigError);
}

TEST_CASE("pearson matrix against a covariance oracle") {
  Rng rng = make_rng(3);
  Mat a(25, 5);
  for (int i = 0; i < 25; ++i) {
    for (int j = 0; j < 5; ++j) a(i, j) = uniform01(rng);
  }
  a.col(3) = -a.col(1);
  const auto r = pearson_corr_matrix(a);
  CHECK(r.zero_variance.empty());
  for (int x = 0; x < 5; ++x) {
    for (int y = 0; y < 5; ++y) {
      double mx = 0, my = 0;
      for (int i = 0; i < 25; ++i) {
        mx += a(i, x) / 25;
        my += a(i, y) / 25;
      }
      double sxy = 0, sxx = 0, syy = 0;
      for (int i = 0; i < 25; ++i) {
        sxy += (a(i, x) - mx) * (a(i, y) - my);
        sxx += (a(i, x) - mx) * (a(i, x) - mx);
        syy += (a(i, y) - my) * (a(i, y) - my);
      }
      CHECK(std::abs(r.corr(x, y) - sxy / std::sqrt(sxx * syy)) < 1e-12);
    }
  }
  CHECK(r.corr(1, 3) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(r.corr(2, 2) == 1.0);
  CHECK(pearson_corr_matrix_serial(a).corr == r.corr);
}

TEST_CASE("zero-variance features are flagged") {
  Mat a(4, 3);
  a << 1, 2, 5, 2, 4, 5, 3, 7, 5, 4, 1, 5;
  const auto r = pearson_corr_matrix(a);
  REQUIRE(r.zero_variance.size() == 1);
  CHECK(r.zero_variance[0] == 2);
  CHECK(r.corr(2, 2) == 1.0);
  CHECK(r.corr(0, 2) == 0.0);
  CHECK(r.corr(2, 1) == 0.0);
}

TEST_CASE("connectivity edges") {
  Mat corr = Mat::Identity(4, 4);
  corr(0, 1) = corr(1, 0) = 0.9;
  corr(2, 3) = corr(3, 2) = 0.8;
  const std::vector<int> labels = {0, 0, 1, 1};
  CHECK(cluster_connectivity(corr, labels).empty());
  corr(1, 2) = corr(2, 1) = 0.6;
  const auto edges = cluster_connectivity(corr, labels);
  REQUIRE(edges.size() == 1);
  CHECK(edges[0] == ClusterEdge{0, 1, 1});
  CHECK(cluster_connectivity(corr, labels, 0.7).empty());
}

TEST_CASE("connectivity matches an exhaustive scan") {
  Rng rng = make_rng(8);
  Mat a(40, 12);
  for (int i = 0; i < 40; ++i) {
    const double shared = uniform01(rng);
    for (int j = 0; j < 12; ++j) a(i, j) = (j % 3 == 0 ? shared : 0.0) + uniform01(rng);
  }
  const Mat corr = pearson_corr_matrix(a).corr;
  std::vector<int> labels;
  for (int j = 0; j < 12; ++j) labels.push_back(j % 4);
  std::vector<ClusterEdge> oracle;
  for (int ca = 0; ca < 4; ++ca) {
    for (int cb = ca + 1; cb < 4; ++cb) {
      int n = 0;
      for (int x = 0; x < 12; ++x) {
        for (int y = 0; y < 12; ++y) {
          if (labels[x] == ca && labels[y] == cb && corr(x, y) > 0.3) ++n;
        }
      }
      if (n) oracle.push_back({ca, cb, n});
    }
  }
  CHECK(!oracle.empty());
  CHECK(cluster_connectivity(corr, labels, 0.3) == oracle);
}

TEST_CASE("relabelling clusters changes nothing downstream") {
  Rng rng = make_rng(4);
  Mat a(30, 10);
  for (int i = 0; i < 30; ++i) {
    const double s = uniform01(rng);
    for (int j = 0; j < 10; ++j) a(i, j) = (j < 4 ? s : 0.0) + uniform01(rng);
  }
  const Mat corr = pearson_corr_matrix(a).corr;
  const std::vector<int> labels = {0, 0, 1, 1, 2, 2, 0, 1, 2, 2};
  const std::vector<int> renamed = {2, 2, 0, 0, 1, 1, 2, 0, 1, 1};
  const std::map<int, int> back = {{2, 0}, {0, 1}, {1, 2}};
  auto e1 = cluster_connectivity(corr, labels, 0.3);
  auto e2 = cluster_connectivity(corr, renamed, 0.3);
  for (auto& e : e2) {
    int x = back.at(e.a), y = back.at(e.b);
    e = {std::min(x, y), std::max(x, y), e.n_pairs};
  }
  std::sort(e2.begin(), e2.end(), [](auto& p, auto& q) { return std::tie(p.a, p.b) < std::tie(q.a, q.b); });
  CHECK(e1 == e2);
  const RankedList s = {3, 1, 0, 7, 9, 2, 4, 5, 6, 8};
  const RankedList t = {0, 9, 3, 2, 1, 8, 7, 6, 5, 4};
  CHECK(clustered_rbo(s, t, labels) == clustered_rbo(s, t, renamed));
}

TEST_CASE("event distribution per patient cluster") {
  // Categories: 0 none, 1 sudden death, 2 MI, 3 stroke, 4 arrhythmia.
  const std::vector<int> clusters = {0, 0, 0, 1, 1, 2, 2, 2, 2};
  const std::vector<int> events = {0, 0, 0, 1, 0, 2, 3, 3, 0};
  const auto rows = patient_cluster_event_distribution(clusters, events, 5);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].proportions[0] == 1.0);
  CHECK(rows[1].counts == std::vector<std::size_t>{1, 1, 0, 0, 0});
  CHECK(rows[2].total == 4);
  CHECK(rows[2].counts == std::vector<std::size_t>{1, 0, 1, 2, 0});
  CHECK(rows[2].proportions[3] == 0.5);
  for (const auto& r : rows) {
    double sum = 0.0;
    for (double p : r.proportions) sum += p;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(patient_cluster_event_distribution(clusters, {0, 9, 0, 0, 0, 0, 0, 0, 0}, 5),
                  ValidationError);
}

TEST_CASE("feature label file") {
  CoClusterModel m;
  m.k = 2;
  m.feature_labels = {1, 0, 2};
  std::ostringstream out;
  m.write_feature_labels(out, {"h_I21", "m_0212", "t_hb"});
  CHECK(out.str() == "h_I21 1\nm_0212 0\nt_hb 2\n");
}
