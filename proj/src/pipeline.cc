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

#include "ehrc/pipeline.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ehrc/io.h"
#include "ehrc/random.h"
#include "ehrc/synth.h"

namespace ehrc {
namespace {

constexpr std::uint64_t kHoldoutStream = 0x401d;
constexpr std::uint64_t kKfoldStream = 0x7a1;
constexpr std::uint64_t kFinalStream = 0xf17;
constexpr std::uint64_t kImportanceStream = 0x1e5;
constexpr std::uint64_t kClusterStream = 0xc0c1;
constexpr std::uint64_t kBootStream = 0xb00;
constexpr std::uint64_t kAblationStream = 0xab1;

std::uint64_t model_id(const std::string& name) {
  const auto& names = native_model_names();
  return static_cast<std::uint64_t>(std::find(names.begin(), names.end(), name) - names.begin());
}

// Per class, a shuffled `fraction` (at least one, never all) goes to test.
void holdout_split(const Eigen::VectorXd& y, double fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
  train.clear();
  test.clear();
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> idx;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if ((y(i) > 0.5) == (cls == 1)) idx.push_back(static_cast<std::size_t>(i));
    }
    Rng rng = make_rng(seed, {kHoldoutStream, static_cast<std::uint64_t>(cls)});
    shuffle_in_place(idx, rng);
    const auto n = idx.size();
    std::size_t n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, n > 1 ? 1 : 0, n > 1 ? n - 1 : n);
    test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

Eigen::VectorXd subset(const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Trainer make_trainer(const std::string& name, const TrainSpec& base) {
  return [name, base](const SequenceData& d, const Eigen::VectorXd& y,
                      std::uint64_t seed) -> std::unique_ptr<Predictor> {
    TrainSpec spec = base;
    spec.seed = seed;
    if (name == "logistic") return train_logistic(d, y, spec);
    if (name == "deep_patient") return train_deep_patient(d, y, spec);
    return train_recurrent(d, y, spec);
  };
}

const SequenceData& input_for(const std::string& name, const PreparedData& d) {
  return name == "bow_recurrent" ? d.bow_data : d.tensor_data;
}

const FeatureVocabulary& vocab_for(const std::string& name, const PreparedData& d) {
  return name == "bow_recurrent" ? d.language_vocab : d.vocab;
}

std::string tsv_metrics_header() {
  return "model\tsensitivity\tsensitivity_sd\tspecificity\tspecificity_sd\tf1\tf1_sd\tauc\t"
         "auc_sd\n";
}

void append_report(std::ostream& out, const std::string& name, const MetricsReport& r) {
  out << name << '\t' << format_double(r.sensitivity.mean) << '\t'
      << format_double(r.sensitivity.sd) << '\t' << format_double(r.specificity.mean) << '\t'
      << format_double(r.specificity.sd) << '\t' << format_double(r.f1.mean) << '\t'
      << format_double(r.f1.sd) << '\t' << format_double(r.auc.mean) << '\t'
      << format_double(r.auc.sd) << '\n';
}

std::string metrics_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : "NA";
}

nlohmann::ordered_json metrics_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["sensitivity"] = m.sensitivity;
  j["specificity"] = m.specificity;
  j["f1"] = m.f1;
  j["auc"] = m.auc ? nlohmann::ordered_json(*m.auc) : nlohmann::ordered_json(nullptr);
  return j;
}

nlohmann::ordered_json report_json(const MetricsReport& r) {
  auto ms = [](const MeanSd& v) { return nlohmann::ordered_json{{"mean", v.mean}, {"sd", v.sd}}; };
  nlohmann::ordered_json j;
  j["sensitivity"] = ms(r.sensitivity);
  j["specificity"] = ms(r.specificity);
  j["f1"] = ms(r.f1);
  j["auc"] = ms(r.auc);
  return j;
}

ImportanceVector read_importance_file(const std::filesystem::path& path, ImportanceSource src) {
  std::istringstream in(read_text_file(path));
  try {
    return ImportanceVector::read(in, src);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string first_ten(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size() && i < 10; ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  if (items.size() > 10) out += ", ...";
  return out;
}

// Fixed family order for composition tables.
const std::vector<std::string>& family_tags() {
  static const std::vector<std::string> kTags = {
      "history", "demographics", "hospitalisation", "prescription", "blood test", "other"};
  return kTags;
}

}  // namespace

// ---- data preparation ----------------------------------------------------------

PreparedData load_data(const RunConfig& config) {
  PreparedData d;
  Cohort cohort = load_cohort(config.events, config.labels);
  if (config.outcome == OutcomeKind::kSuddenDeathComposite) {
    auto filtered = filter_terminal_illness(cohort, config.outcome, config.terminal_prefixes);
    d.cohort = std::move(filtered.cohort);
    d.excluded = std::move(filtered.excluded);
  } else {
    d.cohort = std::move(cohort);
  }
  d.labels = d.cohort.labels_for(config.outcome);
  if (d.labels.empty()) {
    throw ValidationError("no labels for outcome " + std::string(outcome_name(config.outcome)));
  }
  d.y.resize(static_cast<Eigen::Index>(d.labels.size()));
  std::size_t events = 0;
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    d.y(static_cast<Eigen::Index>(i)) = d.labels[i].is_event() ? 1.0 : 0.0;
    events += d.labels[i].is_event() ? 1 : 0;
    d.subject_ids.push_back(d.labels[i].subject_id);
  }
  if (events == 0 || events == d.labels.size()) {
    throw ValidationError("labels must contain both events and controls");
  }
  return d;
}

void encode_data(PreparedData& d, const RunConfig& config) {
  d.vocab = build_vocabulary(d.cohort, config.outcome, false);
  d.language_vocab = build_vocabulary(d.cohort, config.outcome, true);
  d.encoded = encode_sparse(d.cohort, config.outcome, d.vocab);
  if (d.encoded.subject_ids != d.subject_ids) {
    throw StageError("tensor rows do not follow the label order");
  }
  const auto by_subject = d.cohort.events_by_subject();
  Eigen::MatrixXd bow(static_cast<Eigen::Index>(d.labels.size()),
                      static_cast<Eigen::Index>(d.language_vocab.size()));
  d.sentences.clear();
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    const auto it = by_subject.find(d.labels[i].subject_id);
    const std::vector<EventRecord> none;
    d.sentences.push_back(
        encode_sentence(it == by_subject.end() ? none : it->second, d.labels[i].index_day));
    const auto row = bow_vectorize(d.sentences.back(), d.language_vocab);
    for (std::size_t j = 0; j < row.size(); ++j) {
      bow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  d.tensor_data = SequenceData::from_tensor(d.encoded.tensor);
  d.bow_data = SequenceData::single(std::move(bow));
}

PreparedData prepare_data(const RunConfig& config) {
  PreparedData d = load_data(config);
  encode_data(d, config);
  return d;
}

double mean_off_diagonal(const AgreementMatrix& m) {
  const Eigen::Index n = m.values.rows();
  if (n < 2) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) sum += m.values(i, j);
  }
  return sum / static_cast<double>(n * (n - 1) / 2);
}

Eigen::MatrixXd cocluster_matrix(const PreparedData& d) {
  Eigen::MatrixXd a = collapse_time(d.encoded.tensor, d.vocab);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double mx = a.col(j).cwiseAbs().maxCoeff();
    if (mx > 0.0) a.col(j) /= mx;
  }
  // Values may be negative only through malformed inputs; the embedding
  // needs a nonnegative matrix.
  if ((a.array() < 0.0).any()) throw ValidationError("co-clustering matrix has negative entries");
  return a;
}

ImportanceVector align_importance(const ImportanceVector& source, const FeatureVocabulary& vocab) {
  ImportanceVector out;
  out.source = source.source;
  out.tokens = vocab.tokens();
  out.scores.assign(vocab.size(), 0.0);
  for (std::size_t i = 0; i < source.tokens.size(); ++i) {
    if (const auto j = vocab.find(source.tokens[i])) out.scores[*j] = source.scores[i];
  }
  return out;
}

// ---- pipeline ---------------------------------------------------------------------

Pipeline::Pipeline(RunConfig config)
    : config_(std::move(config)), artifacts_(config_.output_dir) {}

template <typename Fn>
void Pipeline::stage(const std::string& name, Fn&& fn) {
  auto mark_stale = [&](const std::string& message) {
    std::ostringstream out;
    out << "stage " << name << " failed: " << message << '\n';
    for (const auto& a : artifacts_.manifest()) out << "stale " << a.path << '\n';
    try {
      write_text_file(config_.output_dir / "STALE", out.str());
      std::filesystem::remove(config_.output_dir / "summary.json");
    } catch (const std::exception&) {
      // The original failure matters more than the marker.
    }
  };
  try {
    fn();
  } catch (const ConfigError& e) {
    mark_stale(e.what());
    throw ConfigError("stage " + name + ": " + e.what());
  } catch (const ValidationError& e) {
    mark_stale(e.what());
    throw ValidationError("stage " + name + ": " + e.what());
  } catch (const StageError& e) {
    mark_stale(e.what());
    throw;
  } catch (const std::exception& e) {
    mark_stale(e.what());
    throw StageError("stage " + name + ": " + e.what());
  }
  stages_done_.push_back(name);
}

void Pipeline::ensure_cohort() {
  if (!data_) data_ = std::make_unique<PreparedData>(load_data(config_));
}

void Pipeline::ensure_encoded() {
  ensure_cohort();
  if (!encoded_) {
    encode_data(*data_, config_);
    encoded_ = true;
  }
}

void Pipeline::ingest() {
  stage("ingest", [&] {
    config_.validate(true);
    ensure_cohort();
    const auto& d = *data_;
    const CohortStats s = cohort_stats(d.cohort, config_.outcome);
    std::ostringstream stats;
    stats << "n_subjects\t" << s.n_subjects << "\nn_features\t" << s.n_features
          << "\nsparsity\t" << format_double(s.sparsity) << "\nlength_min\t"
          << format_double(s.length_min) << "\nlength_max\t" << format_double(s.length_max)
          << "\nlength_mean\t" << format_double(s.length_mean) << "\nlength_sd\t"
          << format_double(s.length_sd) << "\nevent_rate\t" << format_double(s.event_rate)
          << '\n';
    artifacts_.write("cohort_stats.tsv", stats.str());
    std::ostringstream ex;
    ex << "subject_id\treason\n";
    for (const auto& e : d.excluded) ex << e.subject_id << '\t' << e.reason << '\n';
    artifacts_.write("exclusions.tsv", ex.str());
  });
}

void Pipeline::encode() {
  stage("encode", [&] {
    config_.validate(true);
    ensure_encoded();
    const auto& d = *data_;
    std::ostringstream v;
    write_vocabulary(v, d.vocab);
    artifacts_.write("encode/vocabulary.txt", v.str());
    std::ostringstream lv;
    write_vocabulary(lv, d.language_vocab);
    artifacts_.write("encode/language_vocabulary.txt", lv.str());
    std::ostringstream t;
    d.encoded.tensor.write(t);
    artifacts_.write("encode/tensor.txt", t.str());
    std::ostringstream subj;
    for (const auto& id : d.subject_ids) subj << id << '\n';
    artifacts_.write("encode/subjects.txt", subj.str());
    std::ostringstream sent;
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
      sent << d.subject_ids[i];
      for (const auto& tok : d.sentences[i].tokens) sent << ' ' << tok;
      sent << '\n';
    }
    artifacts_.write("encode/sentences.txt", sent.str());
  });
}

void Pipeline::train() {
  stage("train", [&] {
    config_.validate(true);
    ensure_encoded();
    const auto& d = *data_;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    holdout_split(d.y, config_.holdout, config_.seed, train_rows, test_rows);
    const Eigen::VectorXd y_train = subset(d.y, train_rows);
    const Eigen::VectorXd y_test = subset(d.y, test_rows);

    std::ostringstream table;
    table << tsv_metrics_header();
    std::ostringstream holdout;
    holdout << "model\tsensitivity\tspecificity\tf1\tauc\n";
    std::ostringstream folds;
    folds << "model\tfold\tsensitivity\tspecificity\tf1\tauc\n";
    runs_.clear();
    for (const auto& name : config_.models) {
      const SequenceData& input = input_for(name, d);
      const Trainer trainer = make_trainer(name, config_.train);
      ModelRun run;
      run.name = name;
      run.kfold = kfold_evaluate(trainer, input, d.y, config_.folds,
                                 derive_seed(config_.seed, {kKfoldStream, model_id(name)}));
      append_report(table, name, *run.kfold);
      for (std::size_t f = 0; f < run.kfold->folds.size(); ++f) {
        const auto& m = run.kfold->folds[f];
        folds << name << '\t' << f << '\t' << format_double(m.sensitivity) << '\t'
              << format_double(m.specificity) << '\t' << format_double(m.f1) << '\t'
              << metrics_cell(m.auc) << '\n';
      }

      auto predictor = trainer(input.rows(train_rows), y_train,
                               derive_seed(config_.seed, {kFinalStream, model_id(name)}));
      run.holdout = compute_metrics(predictor->predict(input.rows(test_rows)), y_test);
      holdout << name << '\t' << format_double(run.holdout.sensitivity) << '\t'
              << format_double(run.holdout.specificity) << '\t' << format_double(run.holdout.f1)
              << '\t' << metrics_cell(run.holdout.auc) << '\n';

      std::ostringstream model_text;
      predictor->save(model_text);
      artifacts_.write("models/" + name + ".model", model_text.str());
      const Eigen::VectorXd all = predictor->predict(input);
      std::ostringstream scores;
      write_scores(scores, d.subject_ids,
                   std::vector<double>(all.data(), all.data() + all.size()));
      artifacts_.write("scores/" + name + ".scores", scores.str());

      predictors_[name] = std::move(predictor);
      runs_.push_back(std::move(run));
    }
    artifacts_.write("metrics.tsv", table.str());
    artifacts_.write("metrics_folds.tsv", folds.str());
    artifacts_.write("metrics_holdout.tsv", holdout.str());
    std::ostringstream split;
    split << "subject_id\tset\n";
    std::vector<bool> is_test(d.subject_ids.size(), false);
    for (auto i : test_rows) is_test[i] = true;
    for (std::size_t i = 0; i < d.subject_ids.size(); ++i) {
      split << d.subject_ids[i] << '\t' << (is_test[i] ? "test" : "train") << '\n';
    }
    artifacts_.write("split.tsv", split.str());
  });
}

void Pipeline::interpret() {
  stage("interpret", [&] {
    config_.validate(true);
    ensure_encoded();
    const auto& d = *data_;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    holdout_split(d.y, config_.holdout, config_.seed, train_rows, test_rows);
    const Eigen::VectorXd y_test = subset(d.y, test_rows);

    for (const auto& name : config_.models) {
      auto it = predictors_.find(name);
      if (it == predictors_.end()) {
        const auto path = config_.output_dir / "models" / (name + ".model");
        if (!std::filesystem::exists(path)) {
          throw ValidationError("no trained model at " + path.string() + "; run train first");
        }
        std::istringstream in(read_text_file(path));
        it = predictors_.emplace(name, load_predictor(in)).first;
      }
      const Predictor& predictor = *it->second;
      const SequenceData test = input_for(name, d).rows(test_rows);
      const auto& tokens = vocab_for(name, d).tokens();
      const std::uint64_t seed = derive_seed(config_.seed, {kImportanceStream, model_id(name)});
      ImportanceVector raw;
      if (config_.importance == ImportanceSource::kPfi) {
        raw = pfi(predictor, test, y_test, tokens, PfiOptions{config_.pfi_repeats, seed})
                  .importance;
      } else {
        LimeOptions opts = config_.lime;
        opts.seed = seed;
        raw = lime_global(predictor, test, tokens, opts);
      }
      ImportanceVector aligned = align_importance(raw, d.vocab);
      std::ostringstream out;
      aligned.write(out);
      artifacts_.write("importance/" + name + ".tsv", out.str());

      auto run_it = std::find_if(runs_.begin(), runs_.end(),
                                 [&](const ModelRun& r) { return r.name == name; });
      if (run_it == runs_.end()) {
        ModelRun run;
        run.name = name;
        run.holdout = compute_metrics(predictor.predict(test), y_test);
        runs_.push_back(std::move(run));
        run_it = std::prev(runs_.end());
      }
      run_it->importance = std::move(aligned);
    }
  });
}

void Pipeline::cluster() {
  stage("cluster", [&] {
    config_.validate(true);
    ensure_encoded();
    const auto& d = *data_;
    const Eigen::MatrixXd a = cocluster_matrix(d);
    ClusterRun run;
    int k = 0;
    if (config_.k) {
      k = *config_.k;
    } else {
      const int limit = static_cast<int>(std::min(a.rows(), a.cols()));
      std::vector<int> range;
      for (int c = config_.k_min; c <= std::min(config_.k_max, limit); ++c) range.push_back(c);
      if (range.empty()) throw ValidationError("no candidate k fits the matrix");
      run.choice = choose_k(a, range, derive_seed(config_.seed, {kClusterStream, 1}));
      k = run.choice->k;
      std::ostringstream out;
      run.choice->write(out);
      artifacts_.write("cluster/k_selection.tsv", out.str());
    }
    if (k > std::min(a.rows(), a.cols())) {
      throw ValidationError("k = " + std::to_string(k) + " exceeds the matrix size " +
                            std::to_string(a.rows()) + " x " + std::to_string(a.cols()));
    }
    run.model = spectral_cocluster(a, k, derive_seed(config_.seed, {kClusterStream}));

    std::ostringstream labels;
    run.model.write_feature_labels(labels, d.vocab.tokens());
    artifacts_.write("cluster/feature_clusters.txt", labels.str());
    std::ostringstream patients;
    for (std::size_t i = 0; i < d.subject_ids.size(); ++i) {
      patients << d.subject_ids[i] << ' ' << run.model.patient_labels[i] << '\n';
    }
    artifacts_.write("cluster/patient_clusters.txt", patients.str());

    // Sizes and family composition per cluster (sink included).
    const int n_labels = k + 1;
    std::vector<std::size_t> n_feat(static_cast<std::size_t>(n_labels), 0);
    std::vector<std::size_t> n_pat(static_cast<std::size_t>(n_labels), 0);
    std::map<std::pair<int, std::string>, std::size_t> comp;
    for (std::size_t j = 0; j < run.model.feature_labels.size(); ++j) {
      const int c = run.model.feature_labels[j];
      ++n_feat[static_cast<std::size_t>(c)];
      ++comp[{c, family_tag(d.vocab.token(j))}];
    }
    for (int c : run.model.patient_labels) ++n_pat[static_cast<std::size_t>(c)];
    std::ostringstream sizes;
    sizes << "cluster\tn_features\tn_patients\n";
    std::ostringstream composition;
    composition << "cluster\tfamily\tcount\n";
    for (int c = 0; c < n_labels; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      if (n_feat[uc] == 0 && n_pat[uc] == 0) continue;
      sizes << c << '\t' << n_feat[uc] << '\t' << n_pat[uc] << '\n';
      for (const auto& tag : family_tags()) {
        const auto it = comp.find({c, tag});
        if (it != comp.end()) composition << c << '\t' << tag << '\t' << it->second << '\n';
      }
    }
    artifacts_.write("cluster/sizes.tsv", sizes.str());
    artifacts_.write("cluster/composition.tsv", composition.str());

    const Eigen::MatrixXd collapsed = collapse_time(d.encoded.tensor, d.vocab);
    const CorrelationResult corr = pearson_corr_matrix(collapsed);
    run.edges = cluster_connectivity(corr.corr, run.model.feature_labels,
                                     config_.connectivity_threshold);
    std::ostringstream edges;
    edges << "cluster_a\tcluster_b\tn_pairs\n";
    for (const auto& e : run.edges) edges << e.a << '\t' << e.b << '\t' << e.n_pairs << '\n';
    artifacts_.write("cluster/connectivity.tsv", edges.str());

    std::vector<int> categories(d.labels.size());
    for (std::size_t i = 0; i < d.labels.size(); ++i) categories[i] = d.labels[i].is_event() ? 1 : 0;
    run.events = patient_cluster_event_distribution(run.model.patient_labels, categories, 2);
    std::ostringstream ev;
    ev << "cluster\ttotal\tcontrol\tevent\tcontrol_share\tevent_share\n";
    for (const auto& r : run.events) {
      ev << r.cluster << '\t' << r.total << '\t' << r.counts[0] << '\t' << r.counts[1] << '\t'
         << format_double(r.proportions[0]) << '\t' << format_double(r.proportions[1]) << '\n';
    }
    artifacts_.write("cluster/patient_events.tsv", ev.str());

    run.stability = bootstrap_stability(a, k, config_.bootstrap,
                                        derive_seed(config_.seed, {kBootStream}), config_.rbo.p);
    std::ostringstream st;
    st << "pair\tscore\n";
    for (std::size_t i = 0; i < run.stability.pair_scores.size(); ++i) {
      st << i << '\t' << format_double(run.stability.pair_scores[i]) << '\n';
    }
    artifacts_.write("cluster/stability.tsv", st.str());
    clusters_ = std::move(run);
  });
}

std::vector<ModelRun> Pipeline::load_runs_from_disk() const {
  std::vector<ModelRun> out;
  for (const auto& name : config_.models) {
    const auto path = config_.output_dir / "importance" / (name + ".tsv");
    if (!std::filesystem::exists(path)) {
      throw ValidationError("no importance file at " + path.string() + "; run interpret first");
    }
    ModelRun run;
    run.name = name;
    run.importance = read_importance_file(path, config_.importance);
    out.push_back(std::move(run));
  }
  return out;
}

void Pipeline::consensus(const std::optional<std::filesystem::path>& compare_dir) {
  stage("consensus", [&] {
    config_.validate(true);
    ensure_encoded();
    const auto& d = *data_;

    bool have_importance = !runs_.empty();
    for (const auto& r : runs_) {
      if (!r.external && r.importance.tokens.empty()) have_importance = false;
    }
    if (!have_importance) {
      auto loaded = load_runs_from_disk();
      for (auto& r : loaded) {
        auto it = std::find_if(runs_.begin(), runs_.end(),
                               [&](const ModelRun& x) { return x.name == r.name; });
        if (it == runs_.end()) {
          runs_.push_back(std::move(r));
        } else {
          it->importance = std::move(r.importance);
        }
      }
    }
    runs_.erase(std::remove_if(runs_.begin(), runs_.end(),
                               [](const ModelRun& r) { return r.external; }),
                runs_.end());

    // Registered external models, sorted by name.
    const auto registry = config_.registry_dir();
    if (std::filesystem::is_directory(registry)) {
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(registry)) {
        if (entry.path().extension() == ".importance") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        ModelRun run;
        run.name = f.stem().string();
        run.external = true;
        run.importance = read_importance_file(f, ImportanceSource::kPfi);
        auto scores_path = f;
        scores_path.replace_extension(".scores");
        std::istringstream sin(read_text_file(scores_path));
        const SubjectScores scores = read_scores(sin);
        Eigen::VectorXd s(d.y.size());
        for (std::size_t i = 0; i < d.subject_ids.size(); ++i) {
          const auto it = scores.find(d.subject_ids[i]);
          if (it == scores.end()) {
            throw ValidationError("registered model " + run.name + " has no score for " +
                                  d.subject_ids[i]);
          }
          s(static_cast<Eigen::Index>(i)) = it->second;
        }
        run.holdout = compute_metrics(s, d.y);
        runs_.push_back(std::move(run));
      }
    }
    if (runs_.size() < 2) throw ValidationError("consensus needs at least two models");

    // Feature labels aligned to the vocabulary.
    std::vector<int> labels;
    if (clusters_) {
      labels = clusters_->model.feature_labels;
    } else {
      const auto path = config_.output_dir / "cluster" / "feature_clusters.txt";
      if (!std::filesystem::exists(path)) {
        throw ValidationError("no cluster file at " + path.string() + "; run cluster first");
      }
      std::istringstream in(read_text_file(path));
      const auto by_token = read_clusters(in).by_token();
      for (const auto& tok : d.vocab.tokens()) {
        const auto it = by_token.find(tok);
        if (it == by_token.end()) throw ValidationError("cluster file lacks token " + tok);
        labels.push_back(it->second);
      }
    }

    std::vector<ModelImportance> models;
    for (const auto& r : runs_) models.push_back({r.name, r.importance});
    agreement_ = agreement_matrix(models, &labels, config_.rbo);
    std::ostringstream raw;
    agreement_->raw.write(raw);
    artifacts_.write("consensus/agreement_raw.tsv", raw.str());
    std::ostringstream clustered;
    agreement_->clustered->write(clustered);
    artifacts_.write("consensus/agreement_clustered.tsv", clustered.str());

    std::ostringstream top;
    write_top_k_table(top, top_k_table(models, config_.top_k));
    artifacts_.write("consensus/top_k.tsv", top.str());

    std::ostringstream cum;
    cum << "model\trank\tcumulative\n";
    std::ostringstream n90;
    n90 << "model\tn90\tn_features\n";
    for (const auto& m : models) {
      const bool all_zero = std::all_of(m.importance.scores.begin(), m.importance.scores.end(),
                                        [](double v) { return v == 0.0; });
      if (all_zero) {
        n90 << m.name << "\tNA\t" << m.importance.size() << '\n';
        continue;
      }
      const CumulativeCurve curve = cumulative_distribution(normalize_importance(m.importance));
      for (std::size_t i = 0; i < curve.cumulative.size(); ++i) {
        cum << m.name << '\t' << i + 1 << '\t' << format_double(curve.cumulative[i]) << '\n';
      }
      n90 << m.name << '\t' << curve.n90 << '\t' << m.importance.size() << '\n';
    }
    artifacts_.write("consensus/cumulative.tsv", cum.str());
    artifacts_.write("consensus/cumulative_n90.tsv", n90.str());

    bool any_external = false;
    std::ostringstream ext;
    ext << "model\tsensitivity\tspecificity\tf1\tauc\n";
    for (const auto& r : runs_) {
      if (!r.external) continue;
      any_external = true;
      ext << r.name << '\t' << format_double(r.holdout.sensitivity) << '\t'
          << format_double(r.holdout.specificity) << '\t' << format_double(r.holdout.f1) << '\t'
          << metrics_cell(r.holdout.auc) << '\n';
    }
    if (any_external) artifacts_.write("consensus/external_metrics.tsv", ext.str());

    if (compare_dir) {
      std::map<std::string, int> token_labels;
      for (std::size_t j = 0; j < labels.size(); ++j) token_labels[d.vocab.token(j)] = labels[j];
      std::vector<ModelImportance> first;
      std::vector<ModelImportance> second;
      for (const auto& m : models) {
        const auto path = *compare_dir / "importance" / (m.name + ".tsv");
        if (!std::filesystem::exists(path)) continue;
        first.push_back(m);
        second.push_back({m.name, read_importance_file(path, m.importance.source)});
      }
      if (first.empty()) {
        throw ValidationError("no matching importance files under " + compare_dir->string());
      }
      const auto rows = cross_outcome_agreement(first, second, token_labels, config_.rbo);
      std::ostringstream out;
      out << "model\tscore\tshared\tonly_first\tonly_second\n";
      for (const auto& r : rows) {
        out << r.name << '\t' << format_double(r.score) << '\t' << r.shared << '\t'
            << r.only_first.size() << '\t' << r.only_second.size() << '\n';
      }
      artifacts_.write("consensus/cross_outcome.tsv", out.str());
    }
  });
}

void Pipeline::ablate() {
  stage("ablate", [&] {
    config_.validate(true);
    ensure_encoded();
    const auto& d = *data_;
    ablation_ = ablation_run(d.tensor_data, d.vocab, d.y,
                             make_trainer(config_.ablation_model, config_.train), config_.folds,
                             derive_seed(config_.seed, {kAblationStream}));
    std::ostringstream out;
    out << "subset\tn_features\tsensitivity\tsensitivity_sd\tspecificity\tspecificity_sd\tf1\t"
           "f1_sd\tauc\tauc_sd\n";
    for (const auto& row : ablation_) {
      std::ostringstream line;
      append_report(line, row.subset.name, row.report);
      std::string s = line.str();
      // Splice the feature count in after the name.
      s.insert(row.subset.name.size(), "\t" + std::to_string(row.n_features));
      out << s;
    }
    artifacts_.write("ablation.tsv", out.str());
  });
}

void Pipeline::run_all() {
  std::filesystem::create_directories(config_.output_dir);
  std::filesystem::remove(config_.output_dir / "STALE");
  std::filesystem::remove(config_.output_dir / "summary.json");
  ingest();
  encode();
  train();
  interpret();
  cluster();
  consensus();
  if (config_.ablation) ablate();
  stage("summary", [&] {
    write_text_file(config_.output_dir / "summary.json", summary_json());
  });
}

std::string Pipeline::summary_json() const {
  using json = nlohmann::ordered_json;
  json j;
  j["format"] = "ehrc-summary-1";

  // Output locations are left out so a rerun elsewhere digests the same.
  json cfg = json::object();
  std::istringstream desc(describe_run_config(config_));
  std::string line;
  while (std::getline(desc, line)) {
    const auto eq = line.find(" = ");
    const std::string key = line.substr(0, eq);
    if (key == "output" || key == "registry" || key == "events" || key == "labels") continue;
    cfg[key] = line.substr(eq + 3);
  }
  j["config"] = cfg;

  json inputs = json::object();
  for (const auto& [key, path] : {std::pair{"events", config_.events},
                                  std::pair{"labels", config_.labels}}) {
    if (std::filesystem::exists(path)) {
      inputs[key] = {{"file", path.filename().string()},
                     {"sha256", sha256_hex(read_text_file(path))}};
    }
  }
  j["inputs"] = inputs;
  j["stages"] = stages_done_;

  if (data_) {
    json cohort;
    cohort["subjects"] = data_->subject_ids.size();
    cohort["event_subjects"] = static_cast<std::size_t>(data_->y.sum());
    cohort["excluded"] = data_->excluded.size();
    if (encoded_) {
      cohort["features"] = data_->vocab.size();
      cohort["language_tokens"] = data_->language_vocab.size();
      cohort["tensor_sparsity"] = data_->encoded.tensor.sparsity();
    }
    j["cohort"] = cohort;
  }

  json models = json::array();
  for (const auto& r : runs_) {
    json m;
    m["name"] = r.name;
    m["external"] = r.external;
    if (r.kfold) m["kfold"] = report_json(*r.kfold);
    m[r.external ? "metrics" : "holdout"] = metrics_json(r.holdout);
    models.push_back(m);
  }
  j["models"] = models;

  if (agreement_) {
    json a;
    a["models"] = agreement_->raw.names;
    a["mean_raw"] = mean_off_diagonal(agreement_->raw);
    if (agreement_->clustered) a["mean_clustered"] = mean_off_diagonal(*agreement_->clustered);
    j["agreement"] = a;
  }

  if (clusters_) {
    json c;
    c["k"] = clusters_->model.k;
    if (clusters_->choice) c["knee"] = clusters_->choice->knee;
    c["nonempty_feature_clusters"] = clusters_->model.nonempty_feature_clusters;
    c["nonempty_patient_clusters"] = clusters_->model.nonempty_patient_clusters;
    c["kmeans_converged"] = clusters_->model.kmeans_converged;
    c["repair_sweeps"] = clusters_->model.sweeps;
    c["repair_converged"] = clusters_->model.repair_converged;
    c["connectivity_edges"] = clusters_->edges.size();
    c["stability_mean"] = clusters_->stability.mean;
    c["stability_replicates"] = clusters_->stability.replicates;
    c["stability_skipped"] = clusters_->stability.skipped;
    j["clusters"] = c;
  }

  if (!ablation_.empty()) {
    json rows = json::array();
    for (const auto& row : ablation_) {
      rows.push_back({{"subset", row.subset.name},
                      {"n_features", row.n_features},
                      {"auc", row.report.auc.mean},
                      {"auc_sd", row.report.auc.sd}});
    }
    j["ablation"] = rows;
  }

  json files = json::array();
  for (const auto& a : artifacts_.manifest()) {
    files.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  }
  j["artifacts"] = files;
  return j.dump(2) + "\n";
}

// ---- external models -------------------------------------------------------------

RegistrationResult register_scores(const RunConfig& config, const std::string& name,
                                   const std::filesystem::path& scores_path,
                                   const std::filesystem::path& importance_path) {
  static const std::regex kName("[A-Za-z0-9_-]+");
  if (!std::regex_match(name, kName)) {
    throw ValidationError("model name '" + name + "' must use letters, digits, '_' or '-'");
  }
  const auto& natives = native_model_names();
  if (std::find(natives.begin(), natives.end(), name) != natives.end()) {
    throw ValidationError("model name '" + name + "' clashes with a native model");
  }
  config.validate(true);
  const PreparedData d = prepare_data(config);

  std::istringstream sin(read_text_file(scores_path));
  SubjectScores scores;
  try {
    scores = read_scores(sin);
  } catch (const ValidationError& e) {
    throw ValidationError(scores_path.string() + ": " + e.what());
  }
  std::vector<std::string> missing;
  Eigen::VectorXd s(d.y.size());
  for (std::size_t i = 0; i < d.subject_ids.size(); ++i) {
    const auto it = scores.find(d.subject_ids[i]);
    if (it == scores.end()) {
      missing.push_back(d.subject_ids[i]);
      continue;
    }
    if (!std::isfinite(it->second)) {
      throw ValidationError("score for " + it->first + " is not finite");
    }
    s(static_cast<Eigen::Index>(i)) = it->second;
  }
  if (!missing.empty()) {
    throw ValidationError("scores file lacks " + std::to_string(missing.size()) +
                          " cohort subjects: " + first_ten(missing));
  }

  const ImportanceVector imp = read_importance_file(importance_path, ImportanceSource::kPfi);
  if (imp.tokens != d.vocab.tokens()) {
    const std::set<std::string> have(imp.tokens.begin(), imp.tokens.end());
    const std::set<std::string> want(d.vocab.tokens().begin(), d.vocab.tokens().end());
    std::vector<std::string> absent;
    std::vector<std::string> extra;
    for (const auto& t : d.vocab.tokens()) {
      if (!have.contains(t)) absent.push_back(t);
    }
    for (const auto& t : imp.tokens) {
      if (!want.contains(t)) extra.push_back(t);
    }
    std::string msg = "importance file is not aligned to the vocabulary";
    if (!absent.empty()) msg += "; missing tokens: " + first_ten(absent);
    if (!extra.empty()) msg += "; unknown tokens: " + first_ten(extra);
    if (absent.empty() && extra.empty()) msg += "; tokens are out of vocabulary order";
    throw ValidationError(msg);
  }

  RegistrationResult result;
  result.name = name;
  result.metrics = compute_metrics(s, d.y);
  const auto dir = config.registry_dir();
  result.scores_path = dir / (name + ".scores");
  result.importance_path = dir / (name + ".importance");
  std::ostringstream sout;
  write_scores(sout, d.subject_ids, std::vector<double>(s.data(), s.data() + s.size()));
  write_text_file(result.scores_path, sout.str());
  std::ostringstream iout;
  imp.write(iout);
  write_text_file(result.importance_path, iout.str());
  return result;
}

}  // namespace ehrc
