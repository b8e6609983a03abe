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

// End-to-end orchestration behind the command line tool: run configuration,
// raw-extract ingestion, and the staged pipeline (encode, train, interpret,
// cluster, consensus, ablate) with an artifact manifest.

#ifndef EHRC_PIPELINE_H_
#define EHRC_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ehrc/cocluster.h"
#include "ehrc/consensus.h"
#include "ehrc/core.h"
#include "ehrc/encode.h"
#include "ehrc/ingest.h"
#include "ehrc/interpret.h"
#include "ehrc/models.h"

namespace ehrc {

// A stage failed for reasons other than bad input (exit code 3).
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Native model names: "logistic" and "recurrent" read the sparse tensor,
// "deep_patient" adds autoencoder pretraining, "bow_recurrent" reads
// bag-of-words sentence vectors as a single step.
const std::vector<std::string>& native_model_names();

struct RunConfig {
  std::filesystem::path events;
  std::filesystem::path labels;
  std::filesystem::path output_dir;
  OutcomeKind outcome = OutcomeKind::kSuddenDeathComposite;
  std::vector<std::string> terminal_prefixes{"C78", "C79"};
  std::vector<std::string> models{"logistic", "recurrent", "bow_recurrent"};
  ImportanceSource importance = ImportanceSource::kPfi;
  std::uint64_t seed = 1;
  int folds = 10;
  double holdout = 0.3;
  TrainSpec train;
  int pfi_repeats = 5;
  LimeOptions lime;
  RboParams rbo;
  // Unset: choose from [k_min, k_max].
  std::optional<int> k = 130;
  int k_min = 2;
  int k_max = 10;
  int bootstrap = 20;
  double connectivity_threshold = 0.5;
  std::size_t top_k = 5;
  bool ablation = false;
  std::string ablation_model = "logistic";
  // Registered external models; empty means <output_dir>/external.
  std::filesystem::path registry;

  // Value checks; with `inputs` also checks that the event and label files
  // exist.
  void validate(bool inputs = true) const;
  std::filesystem::path registry_dir() const;
};

// "key = value" lines, '#' comments; unknown keys are a ConfigError.
// Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text,
                           const std::filesystem::path& base_dir = {});
void apply_run_setting(RunConfig& config, const std::string& key, const std::string& value);
// Effective settings in the same key = value form, sorted by key.
std::string describe_run_config(const RunConfig& config);

// ---- artifacts -----------------------------------------------------------------

// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

struct Artifact {
  std::string path;  // relative to the output directory, '/' separated
  std::string sha256;
  std::size_t bytes = 0;
};

// Writes files under one root and remembers what it wrote.
class ArtifactSet {
 public:
  explicit ArtifactSet(std::filesystem::path root) : root_(std::move(root)) {}
  const std::filesystem::path& root() const { return root_; }
  void write(const std::string& relative, std::string_view content);
  // Sorted by path.
  std::vector<Artifact> manifest() const;

 private:
  std::filesystem::path root_;
  std::map<std::string, Artifact> files_;
};

// ---- raw extracts ---------------------------------------------------------------

struct RawExtract {
  std::vector<RawLabRow> labs;
  std::vector<AdmissionRow> admissions;
  // (subject, day, BNF code)
  struct Prescription {
    std::string subject_id;
    std::int64_t day = 0;
    std::string code;
  };
  std::vector<Prescription> prescriptions;
  struct Demographic {
    std::string subject_id;
    std::int64_t day = 0;
    std::optional<double> age;
    std::string sex;
  };
  std::vector<Demographic> demographics;
  std::vector<RawOutcome> outcomes;
};

// Readers for the raw extract CSVs. Headers:
//   labs          subject_id,day,name,value,unit
//   admissions    subject_id,admit_day,discharge_day,diagnoses   (';' separated)
//   prescriptions subject_id,day,bnf_code
//   demographics  subject_id,day,age,sex
//   outcomes      subject_id,status,event_day,observation_start,observation_end
std::vector<RawLabRow> read_lab_rows(std::istream& in);
std::vector<AdmissionRow> read_admission_rows(std::istream& in);
std::vector<RawExtract::Prescription> read_prescription_rows(std::istream& in);
std::vector<RawExtract::Demographic> read_demographic_rows(std::istream& in);
std::vector<RawOutcome> read_outcome_rows(std::istream& in);

DiseaseCodeMap parse_disease_codes(std::string_view json_text);

struct IngestOptions {
  OutcomeKind outcome = OutcomeKind::kSuddenDeathComposite;
  std::vector<LabCleaningRule> lab_rules;
  DiseaseCodeMap disease_codes;
  std::vector<std::string> terminal_prefixes;
  int bnf_length = 4;
  std::uint64_t seed = 1;
};

struct IngestResult {
  Cohort cohort;
  CleaningReport lab_report;
  std::size_t admissions_in = 0;
  std::size_t stays_out = 0;
  std::size_t rejected_admissions = 0;
  std::vector<Exclusion> excluded;
};

// Cleans labs, merges transfers, truncates codes, assigns index dates,
// derives history flags and applies the terminal-illness filter.
IngestResult ingest_raw(const RawExtract& raw, const IngestOptions& options);
std::string ingest_report_json(const IngestResult& result);

// ---- staged pipeline ------------------------------------------------------------

struct PreparedData {
  Cohort cohort;
  std::vector<Exclusion> excluded;
  std::vector<OutcomeLabel> labels;
  std::vector<std::string> subject_ids;
  Eigen::VectorXd y;
  FeatureVocabulary vocab;           // sparse tensor features, no [UNK]
  FeatureVocabulary language_vocab;  // sentence tokens plus [UNK]
  EncodedTensor encoded;
  std::vector<SentenceDoc> sentences;
  SequenceData tensor_data;
  SequenceData bow_data;
};

// Loads the cohort, applies the terminal-illness filter and fixes the label
// order; encode_data then fills in vocabularies and model inputs.
PreparedData load_data(const RunConfig& config);
void encode_data(PreparedData& data, const RunConfig& config);
PreparedData prepare_data(const RunConfig& config);

struct ModelRun {
  std::string name;
  bool external = false;
  std::optional<MetricsReport> kfold;
  Metrics holdout;
  ImportanceVector importance;  // aligned to the sparse vocabulary
};

struct ClusterRun {
  CoClusterModel model;
  std::optional<KChoice> choice;
  StabilityResult stability;
  std::vector<ClusterEdge> edges;
  std::vector<ClusterEventRow> events;
};

// Mean of the strictly upper triangle; 0 for a single model.
double mean_off_diagonal(const AgreementMatrix& m);

// Matrix the co-clustering runs on: time-collapsed counts, each column
// divided by its maximum.
Eigen::MatrixXd cocluster_matrix(const PreparedData& data);

// Importance over `tokens` mapped onto `vocab`: tokens missing from the
// source score 0, source tokens outside `vocab` ([UNK]) are dropped.
ImportanceVector align_importance(const ImportanceVector& source,
                                  const FeatureVocabulary& vocab);

class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const { return config_; }
  ArtifactSet& artifacts() { return artifacts_; }
  const PreparedData& data() const { return *data_; }
  const std::vector<ModelRun>& runs() const { return runs_; }
  const std::optional<ClusterRun>& clusters() const { return clusters_; }
  const std::optional<Agreement>& agreement() const { return agreement_; }

  // Each stage writes its files through artifacts(). Later stages pull in
  // whatever earlier ones they need.
  void ingest();
  void encode();
  void train();
  // Uses models trained in this process, or loads them from models/.
  void interpret();
  void cluster();
  // Reads importance and cluster files from the output directory when the
  // earlier stages did not run in this process; picks up registered models.
  // With `compare_dir` set, also scores cross-outcome agreement against the
  // importance files of that run.
  void consensus(const std::optional<std::filesystem::path>& compare_dir = std::nullopt);
  void ablate();

  // Every stage, then summary.json. On failure writes STALE naming the
  // stage and rethrows with the stage prefixed.
  void run_all();

  std::string summary_json() const;

 private:
  template <typename Fn>
  void stage(const std::string& name, Fn&& fn);
  void ensure_cohort();
  void ensure_encoded();
  std::vector<ModelRun> load_runs_from_disk() const;

  RunConfig config_;
  ArtifactSet artifacts_;
  std::unique_ptr<PreparedData> data_;
  bool encoded_ = false;
  std::map<std::string, std::unique_ptr<Predictor>> predictors_;
  std::map<std::string, std::vector<std::size_t>> holdout_rows_;
  std::vector<ModelRun> runs_;
  std::optional<ClusterRun> clusters_;
  std::optional<Agreement> agreement_;
  std::vector<AblationRow> ablation_;
  std::vector<std::string> stages_done_;
};

// ---- external models -----------------------------------------------------------

struct RegistrationResult {
  std::string name;
  Metrics metrics;
  std::filesystem::path scores_path;
  std::filesystem::path importance_path;
};

// Checks that `scores` covers every labelled subject and that the importance
// tokens are exactly the sparse vocabulary, then copies both into the
// registry. Errors list at most ten offending ids.
RegistrationResult register_scores(const RunConfig& config, const std::string& name,
                                   const std::filesystem::path& scores,
                                   const std::filesystem::path& importance);

}  // namespace ehrc

#endif  // EHRC_PIPELINE_H_
