#pragma once

#include <string>
#include <vector>

#include "codi/corpus.hpp"
#include "codi/train.hpp"

namespace codi {

struct EvalRow {
  std::string language;
  int n = 0;
  int correct = 0;
  int truncated = 0;
  double accuracy_pct = 0.0;   // 100 * correct / n
  double think_tokens = 0.0;   // sft: mean explicit CoT length; codi: K
  bool ood = false;            // language absent from the cell's training set
};

struct EvalReport {
  std::string setup;      // e.g. "English-only"
  std::string objective;  // "codi" | "sft"
  std::vector<EvalRow> rows;  // one per test language, sorted by tag
};

struct EvalOptions {
  int max_answer = 8;    // codi answer budget
  int sft_budget = 512;  // capped by max_seq_len - |question| - 1
  std::vector<std::string> train_languages;  // for OOD flags; empty = none
  std::string setup_tag = "eval";
};

// Greedy-decodes every test example and scores exact integer match against
// the gold answer. Verdicts are disjoint: correct, incorrect, truncated.
EvalReport evaluate(const Checkpoint& ckpt, const MultilingualCorpus& corpus,
                    const std::string& mode, const EvalOptions& options);

// Average explicit CoT tokens per latent thought.
double compression_ratio(double avg_cot_tokens, int k_latents);

// ---- report emission --------------------------------------------------------

std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(const std::string& csv);
std::string report_to_markdown(const EvalReport& report);
std::string report_to_json(const EvalReport& report);

// Writes one file per report (csv/md/json as requested) under `dir`.
// Returns the paths written.
std::vector<std::string> emit_report(const std::vector<EvalReport>& reports,
                                     const std::string& format, const std::string& dir);

// ---- experiment matrix --------------------------------------------------------

struct MatrixSetup {
  std::string name;
  std::vector<std::string> train_languages;
};

struct ExperimentMatrix {
  std::vector<MatrixSetup> setups;
  std::vector<std::string> objectives;  // default {"codi", "sft"}
};

struct MatrixConfig {
  CorpusConfig corpus;
  ModelConfig model;
  TrainConfig train;
  ExperimentMatrix matrix;
  int eval_max_answer = 8;
  int eval_sft_budget = 512;

  static MatrixConfig standard_desk();
  std::string to_json() const;
  static MatrixConfig from_json(const std::string& text);
  static MatrixConfig load(const std::string& path);
};

struct ComparisonRow {
  std::string setup;
  std::string language;
  bool ood = false;
  double codi_acc = 0.0;
  double sft_acc = 0.0;
  double delta = 0.0;  // codi - sft, observational
  double sft_avg_cot = 0.0;
  int latent_tokens = 0;
  double compression = 0.0;
};

struct MatrixResult {
  std::vector<EvalReport> reports;
  std::vector<ComparisonRow> comparison;
};

std::string comparison_to_csv(const std::vector<ComparisonRow>& rows);
std::string comparison_to_markdown(const std::vector<ComparisonRow>& rows);

// Trains every (setup, objective) cell on the shared corpus, evaluates each
// checkpoint on the full multilingual test split, and writes corpus,
// checkpoints, loss logs, reports and the comparison table under out_dir.
MatrixResult run_matrix(const MatrixConfig& cfg, const std::string& out_dir);

}  // namespace codi
