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

#include "ehrc/cocluster.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>
#include <ostream>
#include <utility>

#include <Eigen/SVD>

#include "ehrc/consensus.h"
#include "ehrc/core.h"
#include "ehrc/random.h"

namespace ehrc {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Idx = Eigen::Index;

constexpr std::uint64_t kKmeansStream = 0xc1;
constexpr std::uint64_t kBootStream = 0xb007;

int ceil_log2(int k) {
  int l = 0;
  while ((1 << l) < k) ++l;
  return l;
}

void check_matrix(const Mat& a) {
  if (a.rows() == 0 || a.cols() == 0) throw ValidationError("co-clustering an empty matrix");
  if (!a.allFinite()) throw ValidationError("co-clustering matrix has non-finite entries");
  if ((a.array() < 0.0).any()) throw ValidationError("co-clustering matrix must be nonnegative");
}

struct KmeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
  bool converged = false;
};

// Nearest centroid; ties go to the lower index.
int nearest(const Mat& points, Idx i, const Mat& centroids, double* dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Idx c = 0; c < centroids.rows(); ++c) {
    const double d = (points.row(i) - centroids.row(c)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

// k-means++ seeding.
Mat seed_centroids(const Mat& points, int k, Rng& rng) {
  const Idx n = points.rows();
  Mat c(k, points.cols());
  c.row(0) = points.row(uniform_int(rng, 0, n - 1));
  Vec d2(n);
  for (Idx i = 0; i < n; ++i) d2(i) = (points.row(i) - c.row(0)).squaredNorm();
  for (int m = 1; m < k; ++m) {
    const double total = d2.sum();
    Idx pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= d2(pick);
        if (u < 0.0) break;
      }
    } else {
      pick = uniform_int(rng, 0, n - 1);
    }
    c.row(m) = points.row(pick);
    for (Idx i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - c.row(m)).squaredNorm());
  }
  return c;
}

KmeansResult lloyd(const Mat& points, int k, Rng& rng, int max_iter) {
  const Idx n = points.rows();
  Mat centroids = seed_centroids(points, k, rng);
  KmeansResult r;
  r.labels.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Idx i = 0; i < n; ++i) {
      const int c = nearest(points, i, centroids, nullptr);
      if (c != r.labels[static_cast<std::size_t>(i)]) {
        r.labels[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    if (!changed) {
      r.converged = true;
      break;
    }
    Mat sums = Mat::Zero(k, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Idx i = 0; i < n; ++i) {
      const int c = r.labels[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      Idx far = 0;
      double far_d = -1.0;
      for (Idx i = 0; i < n; ++i) {
        const double d =
            (points.row(i) - centroids.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centroids.row(c) = points.row(far);
    }
  }
  r.inertia = 0.0;
  for (Idx i = 0; i < n; ++i) {
    r.inertia +=
        (points.row(i) - centroids.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return r;
}

KmeansResult kmeans(const Mat& points, int k, std::uint64_t seed, const CoClusterOptions& opt) {
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opt.kmeans_restarts); ++r) {
    Rng rng = make_rng(seed, {kKmeansStream, static_cast<std::uint64_t>(r)});
    KmeansResult cur = lloyd(points, k, rng, opt.kmeans_max_iter);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

// Weight of each item to each cluster of the other dimension.
Mat cluster_weights(const Mat& a_items_by_other, const std::vector<int>& other_labels, int k) {
  Mat w = Mat::Zero(a_items_by_other.rows(), k);
  for (Idx o = 0; o < a_items_by_other.cols(); ++o) {
    const int c = other_labels[static_cast<std::size_t>(o)];
    if (c >= k) continue;
    w.col(c) += a_items_by_other.col(o);
  }
  return w;
}

Vec inv_sqrt(const Vec& v) {
  return v.unaryExpr([](double x) { return x > 0.0 ? 1.0 / std::sqrt(x) : 0.0; });
}

bool within_tolerance(double own, double best) {
  return own >= best - 1e-12 * std::max(1.0, std::abs(best));
}

// Moves every item whose own-cluster weight is beaten to its heaviest
// cluster. Returns the number of moves.
int reassign(const Mat& a_items_by_other, const std::vector<int>& other_labels, int k,
             std::vector<int>& labels) {
  const Mat w = cluster_weights(a_items_by_other, other_labels, k);
  int moves = 0;
  for (Idx i = 0; i < w.rows(); ++i) {
    int& own = labels[static_cast<std::size_t>(i)];
    if (own >= k) continue;
    Idx best = 0;
    const double best_w = w.row(i).maxCoeff(&best);
    if (!within_tolerance(w(i, own), best_w)) {
      own = static_cast<int>(best);
      ++moves;
    }
  }
  return moves;
}

int count_nonempty(const std::vector<int>& labels, int k) {
  std::vector<char> seen(static_cast<std::size_t>(k), 0);
  for (int l : labels) {
    if (l < k) seen[static_cast<std::size_t>(l)] = 1;
  }
  return static_cast<int>(std::count(seen.begin(), seen.end(), 1));
}

Mat block_weights(const Mat& a, bool normalized) {
  if (!normalized) return a;
  const Vec d1 = inv_sqrt(a.rowwise().sum());
  const Vec d2 = inv_sqrt(a.colwise().sum().transpose());
  return d1.asDiagonal() * a * d2.asDiagonal();
}

bool conditions_hold(const Mat& items_by_other, const std::vector<int>& other_labels,
                     const std::vector<int>& labels, int k) {
  const Mat w = cluster_weights(items_by_other, other_labels, k);
  for (Idx i = 0; i < w.rows(); ++i) {
    const int own = labels[static_cast<std::size_t>(i)];
    if (own >= k) continue;
    if (!within_tolerance(w(i, own), w.row(i).maxCoeff())) return false;
  }
  return true;
}

CoClusterModel cocluster_checked(const Mat& a, int k, std::uint64_t seed,
                                 const CoClusterOptions& options) {
  const Idx n = a.rows();
  const Idx m = a.cols();
  CoClusterModel model;
  model.k = k;
  model.normalized_weights = options.normalized_weights;
  const Vec rs = a.rowwise().sum();
  const Vec cs = a.colwise().sum().transpose();
  model.patient_labels.assign(static_cast<std::size_t>(n), k);
  model.feature_labels.assign(static_cast<std::size_t>(m), k);

  std::vector<Idx> live_rows;
  std::vector<Idx> live_cols;
  for (Idx i = 0; i < n; ++i) {
    if (rs(i) > 0.0) live_rows.push_back(i);
  }
  for (Idx j = 0; j < m; ++j) {
    if (cs(j) > 0.0) live_cols.push_back(j);
  }
  if (live_rows.empty()) throw ValidationError("co-clustering an all-zero matrix");

  if (k == 1) {
    for (Idx i : live_rows) model.patient_labels[static_cast<std::size_t>(i)] = 0;
    for (Idx j : live_cols) model.feature_labels[static_cast<std::size_t>(j)] = 0;
  } else {
    const SpectralEmbedding emb = spectral_embedding(a, ceil_log2(k));
    const Idx dim = emb.rows.cols();
    Mat points(static_cast<Idx>(live_rows.size() + live_cols.size()), dim);
    Idx p = 0;
    for (Idx i : live_rows) points.row(p++) = emb.rows.row(i);
    for (Idx j : live_cols) points.row(p++) = emb.cols.row(j);
    if (points.rows() < k) {
      throw ValidationError("k = " + std::to_string(k) + " exceeds the " +
                            std::to_string(points.rows()) + " nonzero rows and columns");
    }
    const KmeansResult km = kmeans(points, k, seed, options);
    model.kmeans_converged = km.converged;
    p = 0;
    for (Idx i : live_rows) model.patient_labels[static_cast<std::size_t>(i)] = km.labels[p++];
    for (Idx j : live_cols) model.feature_labels[static_cast<std::size_t>(j)] = km.labels[p++];

    const Mat w = block_weights(a, options.normalized_weights);
    const Mat wt = w.transpose();
    model.repair_converged = options.max_sweeps == 0;
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
      const int moved = reassign(wt, model.patient_labels, k, model.feature_labels) +
                        reassign(w, model.feature_labels, k, model.patient_labels);
      model.sweeps = sweep + 1;
      if (moved == 0) {
        model.repair_converged = true;
        break;
      }
    }
  }
  model.nonempty_feature_clusters = count_nonempty(model.feature_labels, k);
  model.nonempty_patient_clusters = count_nonempty(model.patient_labels, k);
  return model;
}

std::vector<int> resample_rows_labels(const Mat& a, const std::vector<Idx>& rows, int k,
                                      std::uint64_t seed, const CoClusterOptions& opt,
                                      bool* degenerate) {
  Mat boot(static_cast<Idx>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) boot.row(static_cast<Idx>(r)) = a.row(rows[r]);
  const CoClusterModel model = cocluster_checked(boot, k, seed, opt);
  *degenerate = k > 1 && model.nonempty_feature_clusters < 2;
  return model.feature_labels;
}

StabilityResult stability_impl(const Mat& a, int k, int n_boot, std::uint64_t seed, double p,
                               const CoClusterOptions& opt, bool parallel) {
  check_matrix(a);
  if (n_boot < 2) throw ConfigError("bootstrap needs at least 2 replicates");
  if (k < 1 || k > std::min(a.rows(), a.cols())) {
    throw ValidationError("k must lie in [1, min(rows, cols)]");
  }
  const auto B = static_cast<std::size_t>(n_boot);
  std::vector<std::vector<int>> labels(B);
  std::vector<char> degenerate(B, 0);
  auto run = [&](std::size_t b) {
    Rng rng = make_rng(seed, {kBootStream, b});
    std::vector<Idx> rows(static_cast<std::size_t>(a.rows()));
    for (auto& r : rows) r = uniform_int(rng, 0, a.rows() - 1);
    bool deg = false;
    labels[b] = resample_rows_labels(a, rows, k, derive_seed(seed, {kBootStream, b, 1}), opt, &deg);
    degenerate[b] = deg;
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t b = 0; b < n_boot; ++b) run(static_cast<std::size_t>(b));
  } else {
    for (std::size_t b = 0; b < B; ++b) run(b);
  }

  StabilityResult out;
  std::vector<std::size_t> kept;
  for (std::size_t b = 0; b < B; ++b) {
    if (degenerate[b]) {
      ++out.skipped;
    } else {
      kept.push_back(b);
    }
  }
  out.replicates = static_cast<int>(kept.size());
  RboParams params;
  params.p = p;
  for (std::size_t x = 0; x < kept.size(); ++x) {
    for (std::size_t y = x + 1; y < kept.size(); ++y) {
      const auto& ref = labels[kept[x]];
      const auto aligned = align_labels(ref, labels[kept[y]]);
      std::vector<std::pair<std::size_t, int>> s;
      std::vector<std::pair<std::size_t, int>> t;
      for (std::size_t j = 0; j < ref.size(); ++j) {
        s.emplace_back(j, ref[j]);
        t.emplace_back(j, aligned[j]);
      }
      out.pair_scores.push_back(rbo(s, t, params));
    }
  }
  if (!out.pair_scores.empty()) {
    double sum = 0.0;
    for (double v : out.pair_scores) sum += v;
    out.mean = sum / static_cast<double>(out.pair_scores.size());
  }
  return out;
}

CorrelationResult pearson_impl(const Mat& a, bool parallel) {
  const Idx n = a.rows();
  const Idx m = a.cols();
  if (n < 2) throw ValidationError("correlation needs at least two rows");
  const Mat centered = a.rowwise() - a.colwise().mean();
  const Vec norms = centered.colwise().norm().transpose();
  CorrelationResult out;
  out.corr = Mat::Zero(m, m);
  for (Idx j = 0; j < m; ++j) {
    if (norms(j) == 0.0) out.zero_variance.push_back(static_cast<std::size_t>(j));
  }
  auto column = [&](Idx j) {
    out.corr(j, j) = 1.0;
    if (norms(j) == 0.0) return;
    for (Idx l = j + 1; l < m; ++l) {
      if (norms(l) == 0.0) continue;
      const double r = centered.col(j).dot(centered.col(l)) / (norms(j) * norms(l));
      out.corr(j, l) = std::clamp(r, -1.0, 1.0);
    }
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (Idx j = 0; j < m; ++j) column(j);
  } else {
    for (Idx j = 0; j < m; ++j) column(j);
  }
  out.corr.triangularView<Eigen::StrictlyLower>() = out.corr.transpose();
  return out;
}

}  // namespace

void CoClusterModel::validate(std::size_t n_subjects, std::size_t n_features) const {
  if (feature_labels.size() != n_features || patient_labels.size() != n_subjects) {
    throw ValidationError("co-cluster label counts do not match the matrix");
  }
  auto in_range = [&](int l) { return l >= 0 && l <= k; };
  if (!std::all_of(feature_labels.begin(), feature_labels.end(), in_range) ||
      !std::all_of(patient_labels.begin(), patient_labels.end(), in_range)) {
    throw ValidationError("co-cluster label out of range");
  }
}

void CoClusterModel::write_feature_labels(std::ostream& out,
                                          const std::vector<std::string>& tokens) const {
  if (tokens.size() != feature_labels.size()) {
    throw ValidationError("token count does not match feature labels");
  }
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    out << tokens[j] << ' ' << feature_labels[j] << '\n';
  }
}

SpectralEmbedding spectral_embedding(const Mat& a, int n_vectors) {
  check_matrix(a);
  const Vec rs = a.rowwise().sum();
  const Vec cs = a.colwise().sum().transpose();
  const Vec d1 = inv_sqrt(rs);
  const Vec d2 = inv_sqrt(cs);
  const Mat an = d1.asDiagonal() * a * d2.asDiagonal();
  Eigen::BDCSVD<Mat> svd(an, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Idx avail = std::min(an.rows(), an.cols()) - 1;
  const Idx l = std::max<Idx>(0, std::min<Idx>(n_vectors, avail));
  SpectralEmbedding e;
  e.rows = d1.asDiagonal() * svd.matrixU().middleCols(1, l);
  e.cols = d2.asDiagonal() * svd.matrixV().middleCols(1, l);
  // Fix each vector's sign so the embedding does not depend on the solver.
  for (Idx c = 0; c < l; ++c) {
    Idx at = 0;
    e.rows.col(c).cwiseAbs().maxCoeff(&at);
    if (e.rows(at, c) < 0.0) {
      e.rows.col(c) *= -1.0;
      e.cols.col(c) *= -1.0;
    }
  }
  return e;
}

CoClusterModel spectral_cocluster(const Mat& a, int k, std::uint64_t seed,
                                  const CoClusterOptions& options) {
  check_matrix(a);
  if (k < 1 || k > std::min(a.rows(), a.cols())) {
    throw ValidationError("k = " + std::to_string(k) + " must lie in [1, " +
                          std::to_string(std::min(a.rows(), a.cols())) + "]");
  }
  return cocluster_checked(a, k, seed, options);
}

bool satisfies_block_conditions(const Mat& a, const CoClusterModel& model) {
  model.validate(static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols()));
  const Mat w = block_weights(a, model.normalized_weights);
  return conditions_hold(w.transpose(), model.patient_labels, model.feature_labels, model.k) &&
         conditions_hold(w, model.feature_labels, model.patient_labels, model.k);
}

void KChoice::write(std::ostream& out) const {
  out << "k\tssd\tsingletons\tnonempty_features\tnonempty_patients\n";
  for (const auto& r : table) {
    out << r.k << '\t' << format_double(r.ssd) << '\t' << r.singletons << '\t'
        << r.nonempty_features << '\t' << r.nonempty_patients << '\n';
  }
}

KChoice choose_k(const Mat& a, const std::vector<int>& k_range, std::uint64_t seed,
                 const CoClusterOptions& options) {
  if (k_range.empty()) throw ConfigError("choose_k needs a non-empty k range");
  std::vector<int> ks = k_range;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  for (int k : ks) {
    if (k < 1 || k > std::min(a.rows(), a.cols())) {
      throw ValidationError("candidate k = " + std::to_string(k) + " outside the matrix");
    }
  }
  const SpectralEmbedding emb = spectral_embedding(a, std::max(1, ceil_log2(ks.back())));
  KChoice out;
  for (int k : ks) {
    const CoClusterModel model = spectral_cocluster(a, k, seed, options);
    KDiagnostics d;
    d.k = k;
    d.nonempty_features = model.nonempty_feature_clusters;
    d.nonempty_patients = model.nonempty_patient_clusters;
    std::vector<int> sizes(static_cast<std::size_t>(k) + 1, 0);
    for (int l : model.feature_labels) ++sizes[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) d.singletons += sizes[static_cast<std::size_t>(c)] == 1;

    // Rows and columns of one co-cluster share a centroid.
    const Idx dim = emb.rows.cols();
    Mat sums = Mat::Zero(k, dim);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    auto add = [&](const Mat& pts, const std::vector<int>& labels) {
      for (Idx i = 0; i < pts.rows(); ++i) {
        const int l = labels[static_cast<std::size_t>(i)];
        if (l >= k) continue;
        sums.row(l) += pts.row(i);
        ++counts[static_cast<std::size_t>(l)];
      }
    };
    add(emb.rows, model.patient_labels);
    add(emb.cols, model.feature_labels);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)]) sums.row(c) /= counts[static_cast<std::size_t>(c)];
    }
    auto dispersion = [&](const Mat& pts, const std::vector<int>& labels) {
      double s = 0.0;
      for (Idx i = 0; i < pts.rows(); ++i) {
        const int l = labels[static_cast<std::size_t>(i)];
        if (l < k) s += (pts.row(i) - sums.row(l)).squaredNorm();
      }
      return s;
    };
    d.ssd = dispersion(emb.rows, model.patient_labels) + dispersion(emb.cols, model.feature_labels);
    out.table.push_back(d);
  }

  // Knee: largest discrete second difference of the running minimum of the
  // dispersion curve.
  std::vector<double> env;
  for (const auto& d : out.table) env.push_back(env.empty() ? d.ssd : std::min(env.back(), d.ssd));
  std::size_t knee = 0;
  if (ks.size() >= 3) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
      const double curv = env[i - 1] - 2.0 * env[i] + env[i + 1];
      if (curv > best) {
        best = curv;
        knee = i;
      }
    }
  }
  out.knee = ks[knee];
  int min_single = std::numeric_limits<int>::max();
  for (const auto& d : out.table) min_single = std::min(min_single, d.singletons);
  out.k = ks[knee];
  for (std::size_t i = knee; i < ks.size(); ++i) {
    if (out.table[i].singletons <= 1.1 * min_single) {
      out.k = ks[i];
      break;
    }
  }
  return out;
}

std::vector<int> align_labels(const std::vector<int>& reference, const std::vector<int>& labels) {
  if (reference.size() != labels.size()) throw ValidationError("label vectors differ in length");
  std::map<std::pair<int, int>, int> overlap;
  for (std::size_t j = 0; j < labels.size(); ++j) ++overlap[{labels[j], reference[j]}];
  std::vector<std::tuple<int, int, int>> cells;
  for (const auto& [key, count] : overlap) cells.emplace_back(-count, key.first, key.second);
  std::sort(cells.begin(), cells.end());
  std::map<int, int> mapping;
  std::set<int> taken;
  for (const auto& [neg, from, to] : cells) {
    if (mapping.count(from) || taken.count(to)) continue;
    mapping[from] = to;
    taken.insert(to);
  }
  // Unmatched labels get fresh ids above every reference label.
  int next = reference.empty() ? 0 : *std::max_element(reference.begin(), reference.end()) + 1;
  std::vector<int> out(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    auto it = mapping.find(labels[j]);
    if (it == mapping.end()) it = mapping.emplace(labels[j], next++).first;
    out[j] = it->second;
  }
  return out;
}

StabilityResult bootstrap_stability(const Mat& a, int k, int n_boot, std::uint64_t seed,
                                    double rbo_p, const CoClusterOptions& options) {
  return stability_impl(a, k, n_boot, seed, rbo_p, options, true);
}

StabilityResult bootstrap_stability_serial(const Mat& a, int k, int n_boot, std::uint64_t seed,
                                           double rbo_p, const CoClusterOptions& options) {
  return stability_impl(a, k, n_boot, seed, rbo_p, options, false);
}

CorrelationResult pearson_corr_matrix(const Mat& a) { return pearson_impl(a, true); }

CorrelationResult pearson_corr_matrix_serial(const Mat& a) { return pearson_impl(a, false); }

std::vector<ClusterEdge> cluster_connectivity(const Mat& corr,
                                              const std::vector<int>& feature_labels,
                                              double threshold) {
  if (corr.rows() != corr.cols() ||
      static_cast<std::size_t>(corr.rows()) != feature_labels.size()) {
    throw ValidationError("correlation matrix and labels are not aligned");
  }
  std::map<std::pair<int, int>, int> pairs;
  const Idx m = corr.rows();
  for (Idx i = 0; i < m; ++i) {
    for (Idx j = i + 1; j < m; ++j) {
      const int a = feature_labels[static_cast<std::size_t>(i)];
      const int b = feature_labels[static_cast<std::size_t>(j)];
      if (a == b || !(corr(i, j) > threshold)) continue;
      ++pairs[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::vector<ClusterEdge> out;
  for (const auto& [key, n] : pairs) out.push_back({key.first, key.second, n});
  return out;
}

std::vector<ClusterEventRow> patient_cluster_event_distribution(
    const std::vector<int>& patient_labels, const std::vector<int>& categories,
    std::size_t n_categories) {
  if (patient_labels.size() != categories.size()) {
    throw ValidationError("patient labels and event categories differ in length");
  }
  std::map<int, ClusterEventRow> rows;
  for (std::size_t i = 0; i < patient_labels.size(); ++i) {
    const int c = categories[i];
    if (c < 0 || static_cast<std::size_t>(c) >= n_categories) {
      throw ValidationError("event category out of range for subject " + std::to_string(i));
    }
    auto& row = rows[patient_labels[i]];
    row.cluster = patient_labels[i];
    row.counts.resize(n_categories, 0);
    ++row.counts[static_cast<std::size_t>(c)];
    ++row.total;
  }
  std::vector<ClusterEventRow> out;
  for (auto& [id, row] : rows) {
    for (std::size_t c : row.counts) {
      row.proportions.push_back(static_cast<double>(c) / static_cast<double>(row.total));
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace ehrc
