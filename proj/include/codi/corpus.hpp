#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codi/example.hpp"

namespace codi {

// A language-independent arithmetic problem: a start value and a chain of
// 2..4 operations, with every intermediate result stored.
struct AbstractProblem {
  struct Step {
    char op = '+';  // '+', '-', '*'
    int operand = 0;
    int result = 0;
  };

  int64_t problem_id = -1;
  int start = 0;
  std::vector<Step> steps;
  int answer = 0;

  // Re-applies the operation chain to the operands.
  int replay() const;
  // Stable content key used for pool deduplication.
  std::string signature() const;
};

// Shared token table. Digits and punctuation are common to all languages;
// every other surface form lives in exactly one language's id range.
struct Vocabulary {
  struct Entry {
    int id = -1;
    std::string surface;
    std::string language;  // empty for shared tokens
  };

  std::vector<Entry> tokens;
  int eoa_id = -1;            // end-of-answer marker
  int answer_prompt_id = -1;  // ':'
  int dot_id = -1;            // CoT step terminator
  int qmark_id = -1;

  int size() const { return static_cast<int>(tokens.size()); }
  int digit_id(int digit) const;
  bool is_digit(int id) const;
  int digit_value(int id) const;
  const std::string& surface(int id) const;
  std::string decode(const std::vector<int>& ids) const;

  // Digit tokens for a nonnegative integer, most significant first.
  std::vector<int> encode_number(int value) const;
  // Parses a pure digit-token sequence; returns false on any other token.
  bool decode_number(const std::vector<int>& ids, long long& out) const;

  uint64_t hash() const;
  std::string to_json() const;
  static Vocabulary from_json(const std::string& text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
};

// Word-form ids and template word orders for one synthetic language.
struct SyntheticLanguage {
  enum class Tier { kHigh, kLow };
  // Placement of the operation word within a rendered step.
  enum class StepOrder { kOpBeforeOperand, kOpAfterOperand };

  std::string tag;
  Tier tier = Tier::kHigh;

  int w_start = -1, w_start_alt = -1;
  int w_then = -1;
  int w_plus = -1, w_minus = -1, w_times = -1;
  int w_gives = -1;
  int w_what = -1;
  int w_and = -1;  // separates numerals that would otherwise touch
  int w_now = -1;  // high tier only; used by the second template

  StepOrder question_order = StepOrder::kOpBeforeOperand;
  StepOrder cot_order = StepOrder::kOpBeforeOperand;
  bool what_first = false;         // question word leads instead of trailing
  bool start_value_first = false;  // "v0 start" instead of "start v0"
  bool then_trailing = false;      // connective after the step instead of before
  bool gives_after_result = false; // "r gives" instead of "gives r"

  int question_template_count() const { return tier == Tier::kHigh ? 2 : 1; }
  int cot_template_count() const { return tier == Tier::kHigh ? 2 : 1; }
  int op_word(char op) const;
  bool owns_token(int id) const;

 private:
  friend struct LanguageSet;
  int first_id = -1, last_id = -1;
};

// The fixed five-language roster sharing one vocabulary.
struct LanguageSet {
  Vocabulary vocab;
  std::vector<SyntheticLanguage> languages;

  static LanguageSet standard();
  const SyntheticLanguage& language(const std::string& tag) const;
  bool has(const std::string& tag) const;
};

struct LanguageBudget {
  std::string tag;
  int budget = 0;
};

struct CorpusConfig {
  uint64_t seed = 11;
  std::vector<LanguageBudget> budgets;
  double test_fraction = 0.2;
  int difficulty_min = 2;
  int difficulty_max = 4;
  int start_min = 2, start_max = 50;
  int operand_min = 2, operand_max = 12;
  int mul_operand_max = 9;
  int value_max = 999;
  bool strip_final_sentence = false;

  void validate() const;
  std::string to_json() const;
  static CorpusConfig from_json(const std::string& text);
  static CorpusConfig load(const std::string& path);
};

struct MultilingualCorpus {
  Vocabulary vocab;
  std::vector<Example> examples;
  std::vector<AbstractProblem> problems;  // in-memory only; empty after load

  std::vector<std::string> languages() const;
  int count(const std::string& language) const;
  int count(const std::string& language, const std::string& split) const;
  std::vector<const Example*> split_examples(const std::string& split) const;

  // Zero cross-language overlap on problem ids, train/test disjointness,
  // per-language counts summing to the total. Throws on violation.
  void validate() const;

  void save_jsonl(const std::string& path) const;
  static MultilingualCorpus load_jsonl(const std::string& corpus_path,
                                       const std::string& vocab_path);
};

// Deterministic problem generation; the same seed yields the same problem.
AbstractProblem gen_problem(uint64_t seed, int difficulty, const CorpusConfig& cfg);

// Renders one problem into one language. Numerals are digit tokens shared
// across languages; all other tokens come from the language's lexicon.
Example render(const AbstractProblem& problem, const SyntheticLanguage& lang,
               const Vocabulary& vocab, uint64_t template_seed);

MultilingualCorpus build_corpus(const CorpusConfig& cfg);

// Drops the final CoT step. A one-step CoT becomes empty and the example
// is flagged.
Example strip_final_cot_sentence(const Example& ex, const Vocabulary& vocab);

struct StatsRow {
  std::string language;
  int samples = 0;
  double pct = 0.0;
};

std::vector<StatsRow> corpus_stats(const MultilingualCorpus& corpus);
std::string stats_to_csv(const std::vector<StatsRow>& rows);
std::string stats_to_markdown(const std::vector<StatsRow>& rows);

}  // namespace codi
