#include "codi/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

#include "codi/rng.hpp"

namespace codi {

using nlohmann::json;

// ---- AbstractProblem -------------------------------------------------------

int AbstractProblem::replay() const {
  int v = start;
  for (const Step& s : steps) {
    switch (s.op) {
      case '+': v += s.operand; break;
      case '-': v -= s.operand; break;
      case '*': v *= s.operand; break;
      default: throw std::logic_error("problem: unknown op");
    }
  }
  return v;
}

std::string AbstractProblem::signature() const {
  std::ostringstream os;
  os << start;
  for (const Step& s : steps) os << s.op << s.operand;
  return os.str();
}

// ---- Vocabulary ------------------------------------------------------------

namespace {
constexpr int kDigitBase = 4;  // ids 4..13 are the digits 0..9
}

int Vocabulary::digit_id(int digit) const {
  if (digit < 0 || digit > 9) throw std::invalid_argument("digit out of range");
  return kDigitBase + digit;
}

bool Vocabulary::is_digit(int id) const { return id >= kDigitBase && id < kDigitBase + 10; }

int Vocabulary::digit_value(int id) const {
  if (!is_digit(id)) throw std::invalid_argument("token is not a digit");
  return id - kDigitBase;
}

const std::string& Vocabulary::surface(int id) const {
  if (id < 0 || id >= size()) throw std::invalid_argument("token id out of range");
  return tokens[static_cast<size_t>(id)].surface;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    const bool glue = i > 0 && is_digit(ids[i]) && is_digit(ids[i - 1]);
    if (i > 0 && !glue) out += ' ';
    out += surface(ids[i]);
  }
  return out;
}

std::vector<int> Vocabulary::encode_number(int value) const {
  if (value < 0) throw std::invalid_argument("encode_number: negative value");
  std::string digits = std::to_string(value);
  std::vector<int> out;
  out.reserve(digits.size());
  for (char c : digits) out.push_back(digit_id(c - '0'));
  return out;
}

bool Vocabulary::decode_number(const std::vector<int>& ids, long long& out) const {
  if (ids.empty()) return false;
  long long v = 0;
  for (int id : ids) {
    if (!is_digit(id)) return false;
    v = v * 10 + digit_value(id);
    if (v > 1000000000LL) return false;
  }
  out = v;
  return true;
}

uint64_t Vocabulary::hash() const {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const Entry& e : tokens) {
    mix(std::to_string(e.id));
    mix("\t");
    mix(e.surface);
    mix("\t");
    mix(e.language);
    mix("\n");
  }
  return h;
}

std::string Vocabulary::to_json() const {
  json j;
  j["tokens"] = json::array();
  for (const Entry& e : tokens) {
    j["tokens"].push_back({{"id", e.id}, {"surface", e.surface}, {"language", e.language}});
  }
  j["eoa_id"] = eoa_id;
  j["answer_prompt_id"] = answer_prompt_id;
  j["dot_id"] = dot_id;
  j["qmark_id"] = qmark_id;
  return j.dump(2) + "\n";
}

Vocabulary Vocabulary::from_json(const std::string& text) {
  const json j = json::parse(text);
  Vocabulary v;
  for (const json& t : j.at("tokens")) {
    Entry e;
    e.id = t.at("id").get<int>();
    e.surface = t.at("surface").get<std::string>();
    e.language = t.at("language").get<std::string>();
    v.tokens.push_back(std::move(e));
  }
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    if (v.tokens[i].id != static_cast<int>(i)) {
      throw std::runtime_error("vocabulary: token ids must be dense and ordered");
    }
  }
  v.eoa_id = j.at("eoa_id").get<int>();
  v.answer_prompt_id = j.at("answer_prompt_id").get<int>();
  v.dot_id = j.at("dot_id").get<int>();
  v.qmark_id = j.at("qmark_id").get<int>();
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << to_json();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return from_json(os.str());
}

// ---- Languages ---------------------------------------------------------------

int SyntheticLanguage::op_word(char op) const {
  switch (op) {
    case '+': return w_plus;
    case '-': return w_minus;
    case '*': return w_times;
    default: throw std::invalid_argument(std::string("language ") + tag + ": no word for op");
  }
}

bool SyntheticLanguage::owns_token(int id) const { return id >= first_id && id <= last_id; }

LanguageSet LanguageSet::standard() {
  LanguageSet set;
  Vocabulary& v = set.vocab;
  auto add = [&](const std::string& surface, const std::string& language) {
    v.tokens.push_back({v.size(), surface, language});
    return v.size() - 1;
  };
  v.eoa_id = add("<eoa>", "");
  v.answer_prompt_id = add(":", "");
  v.dot_id = add(".", "");
  v.qmark_id = add("?", "");
  for (int d = 0; d <= 9; ++d) add(std::to_string(d), "");

  struct Frame {
    const char* tag;
    SyntheticLanguage::Tier tier;
    SyntheticLanguage::StepOrder q_order, c_order;
    bool what_first, start_value_first, then_trailing, gives_after_result;
  };
  const Frame frames[] = {
      {"en-like", SyntheticLanguage::Tier::kHigh, SyntheticLanguage::StepOrder::kOpBeforeOperand,
       SyntheticLanguage::StepOrder::kOpBeforeOperand, false, false, false, false},
      {"de-like", SyntheticLanguage::Tier::kHigh, SyntheticLanguage::StepOrder::kOpAfterOperand,
       SyntheticLanguage::StepOrder::kOpAfterOperand, true, false, false, false},
      {"fr-like", SyntheticLanguage::Tier::kHigh, SyntheticLanguage::StepOrder::kOpBeforeOperand,
       SyntheticLanguage::StepOrder::kOpBeforeOperand, false, false, true, true},
      {"zh-like", SyntheticLanguage::Tier::kHigh, SyntheticLanguage::StepOrder::kOpAfterOperand,
       SyntheticLanguage::StepOrder::kOpBeforeOperand, true, true, false, false},
      {"ur-like", SyntheticLanguage::Tier::kLow, SyntheticLanguage::StepOrder::kOpAfterOperand,
       SyntheticLanguage::StepOrder::kOpAfterOperand, false, true, true, true},
  };

  for (const Frame& f : frames) {
    SyntheticLanguage lang;
    lang.tag = f.tag;
    lang.tier = f.tier;
    lang.question_order = f.q_order;
    lang.cot_order = f.c_order;
    lang.what_first = f.what_first;
    lang.start_value_first = f.start_value_first;
    lang.then_trailing = f.then_trailing;
    lang.gives_after_result = f.gives_after_result;
    const std::string suffix = "_" + lang.tag.substr(0, 2);
    lang.first_id = v.size();
    lang.w_start = add("start" + suffix, lang.tag);
    lang.w_then = add("then" + suffix, lang.tag);
    lang.w_plus = add("plus" + suffix, lang.tag);
    lang.w_minus = add("minus" + suffix, lang.tag);
    lang.w_times = add("times" + suffix, lang.tag);
    lang.w_gives = add("gives" + suffix, lang.tag);
    lang.w_what = add("what" + suffix, lang.tag);
    lang.w_and = add("and" + suffix, lang.tag);
    if (lang.tier == SyntheticLanguage::Tier::kHigh) {
      lang.w_start_alt = add("begin" + suffix, lang.tag);
      lang.w_now = add("now" + suffix, lang.tag);
    }
    lang.last_id = v.size() - 1;
    set.languages.push_back(std::move(lang));
  }
  return set;
}

const SyntheticLanguage& LanguageSet::language(const std::string& tag) const {
  for (const SyntheticLanguage& l : languages) {
    if (l.tag == tag) return l;
  }
  throw std::invalid_argument("unknown language tag: " + tag);
}

bool LanguageSet::has(const std::string& tag) const {
  for (const SyntheticLanguage& l : languages) {
    if (l.tag == tag) return true;
  }
  return false;
}

// ---- Config ----------------------------------------------------------------

void CorpusConfig::validate() const {
  if (budgets.empty()) throw std::invalid_argument("corpus config: no language budgets");
  const LanguageSet set = LanguageSet::standard();
  for (const LanguageBudget& b : budgets) {
    if (!set.has(b.tag)) throw std::invalid_argument("corpus config: unknown language " + b.tag);
    if (b.budget < 1) throw std::invalid_argument("corpus config: budget must be >= 1");
  }
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw std::invalid_argument("corpus config: test_fraction must be in [0, 1)");
  }
  if (difficulty_min < 2 || difficulty_max > 4 || difficulty_min > difficulty_max) {
    throw std::invalid_argument("corpus config: difficulty must lie in 2..4");
  }
  if (start_min < 0 || start_min > start_max || operand_min < 1 || operand_min > operand_max) {
    throw std::invalid_argument("corpus config: bad operand ranges");
  }
  if (value_max < start_max + operand_max) {
    throw std::invalid_argument("corpus config: value_max too small for operand ranges");
  }
}

std::string CorpusConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["budgets"] = json::array();
  for (const LanguageBudget& b : budgets) {
    j["budgets"].push_back({{"language", b.tag}, {"budget", b.budget}});
  }
  j["test_fraction"] = test_fraction;
  j["difficulty_min"] = difficulty_min;
  j["difficulty_max"] = difficulty_max;
  j["start_min"] = start_min;
  j["start_max"] = start_max;
  j["operand_min"] = operand_min;
  j["operand_max"] = operand_max;
  j["mul_operand_max"] = mul_operand_max;
  j["value_max"] = value_max;
  j["strip_final_sentence"] = strip_final_sentence;
  return j.dump(2) + "\n";
}

CorpusConfig CorpusConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  CorpusConfig c;
  c.seed = j.value("seed", c.seed);
  for (const json& b : j.at("budgets")) {
    c.budgets.push_back({b.at("language").get<std::string>(), b.at("budget").get<int>()});
  }
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  c.difficulty_min = j.value("difficulty_min", c.difficulty_min);
  c.difficulty_max = j.value("difficulty_max", c.difficulty_max);
  c.start_min = j.value("start_min", c.start_min);
  c.start_max = j.value("start_max", c.start_max);
  c.operand_min = j.value("operand_min", c.operand_min);
  c.operand_max = j.value("operand_max", c.operand_max);
  c.mul_operand_max = j.value("mul_operand_max", c.mul_operand_max);
  c.value_max = j.value("value_max", c.value_max);
  c.strip_final_sentence = j.value("strip_final_sentence", c.strip_final_sentence);
  c.validate();
  return c;
}

CorpusConfig CorpusConfig::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return from_json(os.str());
}

// ---- Problem generation ---------------------------------------------------

AbstractProblem gen_problem(uint64_t seed, int difficulty, const CorpusConfig& cfg) {
  if (difficulty < 2 || difficulty > 4) {
    throw std::invalid_argument("gen_problem: difficulty must be in 2..4");
  }
  Rng rng = Rng(seed).fork(0xC0D1);
  AbstractProblem p;
  p.start = cfg.start_min + static_cast<int>(rng.below(static_cast<uint64_t>(cfg.start_max - cfg.start_min + 1)));
  int v = p.start;
  for (int i = 0; i < difficulty; ++i) {
    AbstractProblem::Step s;
    // operand range for an op at the current value; empty range means the
    // op is infeasible under the intermediate-value bounds
    auto range = [&](char o) -> std::pair<int, int> {
      switch (o) {
        case '+': return {cfg.operand_min, std::min(cfg.operand_max, cfg.value_max - v)};
        case '-': return {cfg.operand_min, std::min(cfg.operand_max, v)};
        case '*': return {2, std::min(cfg.mul_operand_max, v > 0 ? cfg.value_max / v : 0)};
        default: return {1, 0};
      }
    };
    // random op first, then cycle to the next feasible one
    const char ops[3] = {'+', '-', '*'};
    size_t pick = rng.below(3);
    char op = 0;
    std::pair<int, int> r{1, 0};
    for (int attempt = 0; attempt < 3; ++attempt) {
      const char candidate = ops[(pick + static_cast<size_t>(attempt)) % 3];
      r = range(candidate);
      if (r.first <= r.second) {
        op = candidate;
        break;
      }
    }
    if (op == 0) throw std::logic_error("gen_problem: no feasible operation");
    s.op = op;
    s.operand = r.first + static_cast<int>(rng.below(static_cast<uint64_t>(r.second - r.first + 1)));
    switch (op) {
      case '+': v += s.operand; break;
      case '-': v -= s.operand; break;
      case '*': v *= s.operand; break;
    }
    s.result = v;
    p.steps.push_back(s);
  }
  p.answer = v;
  if (p.replay() != p.answer) throw std::logic_error("gen_problem: replay mismatch");
  return p;
}

// ---- Rendering --------------------------------------------------------------

Example render(const AbstractProblem& problem, const SyntheticLanguage& lang,
               const Vocabulary& vocab, uint64_t template_seed) {
  Rng rng = Rng(template_seed).fork(0x7E41);
  const int q_variant = static_cast<int>(rng.below(static_cast<uint64_t>(lang.question_template_count())));
  const int c_variant = static_cast<int>(rng.below(static_cast<uint64_t>(lang.cot_template_count())));

  Example ex;
  ex.source_problem_id = problem.problem_id;
  ex.language = lang.tag;
  ex.answer_prompt = vocab.answer_prompt_id;

  // adjacent numerals would merge into one digit run, so a connective word
  // is inserted whenever a number directly follows another
  auto push_number = [&](std::vector<int>& out, int value) {
    if (!out.empty() && vocab.is_digit(out.back())) out.push_back(lang.w_and);
    for (int id : vocab.encode_number(value)) out.push_back(id);
  };

  // question
  const int start_word = (q_variant == 1 && lang.w_start_alt >= 0) ? lang.w_start_alt : lang.w_start;
  if (lang.what_first) ex.question.push_back(lang.w_what);
  if (lang.start_value_first) {
    push_number(ex.question, problem.start);
    ex.question.push_back(start_word);
  } else {
    ex.question.push_back(start_word);
    push_number(ex.question, problem.start);
  }
  for (const AbstractProblem::Step& s : problem.steps) {
    if (!lang.then_trailing) ex.question.push_back(lang.w_then);
    if (lang.question_order == SyntheticLanguage::StepOrder::kOpBeforeOperand) {
      ex.question.push_back(lang.op_word(s.op));
      push_number(ex.question, s.operand);
    } else {
      push_number(ex.question, s.operand);
      ex.question.push_back(lang.op_word(s.op));
    }
    if (lang.then_trailing) ex.question.push_back(lang.w_then);
  }
  if (!lang.what_first) ex.question.push_back(lang.w_what);
  ex.question.push_back(vocab.qmark_id);

  // chain of thought: one sentence per step, "." terminated
  int value = problem.start;
  for (const AbstractProblem::Step& s : problem.steps) {
    if (c_variant == 1 && lang.w_now >= 0) ex.cot.push_back(lang.w_now);
    if (lang.cot_order == SyntheticLanguage::StepOrder::kOpBeforeOperand) {
      push_number(ex.cot, value);
      ex.cot.push_back(lang.op_word(s.op));
      push_number(ex.cot, s.operand);
    } else {
      push_number(ex.cot, value);
      push_number(ex.cot, s.operand);
      ex.cot.push_back(lang.op_word(s.op));
    }
    if (lang.gives_after_result) {
      push_number(ex.cot, s.result);
      ex.cot.push_back(lang.w_gives);
    } else {
      ex.cot.push_back(lang.w_gives);
      push_number(ex.cot, s.result);
    }
    ex.cot.push_back(vocab.dot_id);
    value = s.result;
  }

  push_number(ex.answer, problem.answer);
  ex.answer.push_back(vocab.eoa_id);
  return ex;
}

// ---- Corpus -----------------------------------------------------------------

std::vector<std::string> MultilingualCorpus::languages() const {
  std::vector<std::string> tags;
  for (const Example& e : examples) {
    if (std::find(tags.begin(), tags.end(), e.language) == tags.end()) tags.push_back(e.language);
  }
  return tags;
}

int MultilingualCorpus::count(const std::string& language) const {
  int n = 0;
  for (const Example& e : examples) n += (e.language == language) ? 1 : 0;
  return n;
}

int MultilingualCorpus::count(const std::string& language, const std::string& split) const {
  int n = 0;
  for (const Example& e : examples) n += (e.language == language && e.split == split) ? 1 : 0;
  return n;
}

std::vector<const Example*> MultilingualCorpus::split_examples(const std::string& split) const {
  std::vector<const Example*> out;
  for (const Example& e : examples) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

void MultilingualCorpus::validate() const {
  std::map<int64_t, std::string> owner;
  std::map<int64_t, std::string> split_of;
  std::set<int64_t> ids;
  for (const Example& e : examples) {
    if (!ids.insert(e.id).second) {
      throw std::runtime_error("corpus: duplicate example id " + std::to_string(e.id));
    }
    auto [it, inserted] = owner.emplace(e.source_problem_id, e.language);
    if (!inserted && it->second != e.language) {
      throw std::runtime_error("corpus: problem " + std::to_string(e.source_problem_id) +
                               " appears in " + it->second + " and " + e.language);
    }
    auto [sit, s_inserted] = split_of.emplace(e.source_problem_id, e.split);
    if (!s_inserted && sit->second != e.split) {
      throw std::runtime_error("corpus: problem " + std::to_string(e.source_problem_id) +
                               " appears in both splits");
    }
  }
  int total = 0;
  for (const std::string& tag : languages()) total += count(tag);
  if (total != static_cast<int>(examples.size())) {
    throw std::runtime_error("corpus: per-language counts do not sum to total");
  }
}

MultilingualCorpus build_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  const LanguageSet set = LanguageSet::standard();

  int total = 0;
  for (const LanguageBudget& b : cfg.budgets) total += b.budget;

  // distinct problem pool; capped attempts guard against a space smaller
  // than the requested budgets
  Rng seeder(cfg.seed);
  std::vector<AbstractProblem> pool;
  std::set<std::string> seen;
  const int max_attempts = 64 * total + 1024;
  int attempts = 0;
  Rng difficulty_rng = seeder.fork(1);
  while (static_cast<int>(pool.size()) < total) {
    if (++attempts > max_attempts) {
      throw std::runtime_error("build_corpus: budgets exceed the distinct problem pool (" +
                               std::to_string(pool.size()) + " of " + std::to_string(total) + ")");
    }
    const int difficulty =
        cfg.difficulty_min +
        static_cast<int>(difficulty_rng.below(static_cast<uint64_t>(cfg.difficulty_max - cfg.difficulty_min + 1)));
    AbstractProblem p = gen_problem(seeder.fork(100 + attempts).next_u64(), difficulty, cfg);
    if (!seen.insert(p.signature()).second) continue;
    p.problem_id = static_cast<int64_t>(pool.size());
    pool.push_back(std::move(p));
  }

  // low-tier languages claim their full budgets first
  std::vector<const LanguageBudget*> order;
  for (const LanguageBudget& b : cfg.budgets) {
    if (set.language(b.tag).tier == SyntheticLanguage::Tier::kLow) order.push_back(&b);
  }
  for (const LanguageBudget& b : cfg.budgets) {
    if (set.language(b.tag).tier == SyntheticLanguage::Tier::kHigh) order.push_back(&b);
  }

  MultilingualCorpus corpus;
  corpus.vocab = set.vocab;
  corpus.problems = pool;

  size_t next_problem = 0;
  int64_t next_id = 0;
  Rng split_rng = seeder.fork(2);
  for (const LanguageBudget* b : order) {
    const SyntheticLanguage& lang = set.language(b->tag);
    std::vector<Example> bucket;
    bucket.reserve(static_cast<size_t>(b->budget));
    for (int i = 0; i < b->budget; ++i) {
      const AbstractProblem& p = pool[next_problem++];
      Example ex = render(p, lang, corpus.vocab, cfg.seed ^ static_cast<uint64_t>(p.problem_id));
      if (cfg.strip_final_sentence) ex = strip_final_cot_sentence(ex, corpus.vocab);
      bucket.push_back(std::move(ex));
    }
    // deterministic per-language split
    std::vector<size_t> idx(bucket.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    split_rng.shuffle(idx);
    const int n_test = static_cast<int>(static_cast<double>(bucket.size()) * cfg.test_fraction);
    std::vector<uint8_t> is_test(bucket.size(), 0);
    for (int i = 0; i < n_test; ++i) is_test[idx[static_cast<size_t>(i)]] = 1;
    for (size_t i = 0; i < bucket.size(); ++i) {
      bucket[i].split = is_test[i] ? "test" : "train";
      bucket[i].id = next_id++;
      corpus.examples.push_back(std::move(bucket[i]));
    }
  }
  corpus.validate();
  return corpus;
}

Example strip_final_cot_sentence(const Example& ex, const Vocabulary& vocab) {
  Example out = ex;
  out.cot_stripped_empty = false;
  // locate the start of the last '.'-terminated sentence
  int sentences = 0;
  for (int id : ex.cot) sentences += (id == vocab.dot_id) ? 1 : 0;
  if (sentences <= 1) {
    out.cot.clear();
    out.cot_stripped_empty = true;
    return out;
  }
  int seen = 0;
  size_t cut = 0;
  for (size_t i = 0; i < ex.cot.size(); ++i) {
    if (ex.cot[i] == vocab.dot_id && ++seen == sentences - 1) {
      cut = i + 1;
      break;
    }
  }
  out.cot.assign(ex.cot.begin(), ex.cot.begin() + static_cast<long>(cut));
  return out;
}

// ---- Persistence ---------------------------------------------------------------

void MultilingualCorpus::save_jsonl(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const Example& e : examples) {
    json j;
    j["id"] = e.id;
    j["source_problem_id"] = e.source_problem_id;
    j["language"] = e.language;
    j["split"] = e.split;
    j["question"] = e.question;
    j["cot"] = e.cot;
    j["answer"] = e.answer;
    f << j.dump() << "\n";
  }
}

MultilingualCorpus MultilingualCorpus::load_jsonl(const std::string& corpus_path,
                                                  const std::string& vocab_path) {
  MultilingualCorpus corpus;
  corpus.vocab = Vocabulary::load(vocab_path);
  std::ifstream f(corpus_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + corpus_path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Example e;
    e.id = j.at("id").get<int64_t>();
    e.source_problem_id = j.at("source_problem_id").get<int64_t>();
    e.language = j.at("language").get<std::string>();
    e.split = j.at("split").get<std::string>();
    e.question = j.at("question").get<std::vector<int>>();
    e.cot = j.at("cot").get<std::vector<int>>();
    e.answer = j.at("answer").get<std::vector<int>>();
    e.answer_prompt = corpus.vocab.answer_prompt_id;
    corpus.examples.push_back(std::move(e));
  }
  corpus.validate();
  return corpus;
}

// ---- Stats ----------------------------------------------------------------------

std::vector<StatsRow> corpus_stats(const MultilingualCorpus& corpus) {
  std::vector<StatsRow> rows;
  const int total = static_cast<int>(corpus.examples.size());
  for (const std::string& tag : corpus.languages()) {
    StatsRow r;
    r.language = tag;
    r.samples = corpus.count(tag);
    r.pct = total > 0 ? 100.0 * r.samples / total : 0.0;
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

std::string fmt_pct(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", pct);
  return buf;
}

}  // namespace

std::string stats_to_csv(const std::vector<StatsRow>& rows) {
  std::ostringstream os;
  os << "language,samples,pct\n";
  int total = 0;
  for (const StatsRow& r : rows) {
    os << r.language << "," << r.samples << "," << fmt_pct(r.pct) << "\n";
    total += r.samples;
  }
  os << "total," << total << "," << (rows.empty() ? "0.0" : "100.0") << "\n";
  return os.str();
}

std::string stats_to_markdown(const std::vector<StatsRow>& rows) {
  std::ostringstream os;
  os << "| Language | Samples | % of Total |\n";
  os << "|----------|---------|------------|\n";
  int total = 0;
  for (const StatsRow& r : rows) {
    os << "| " << r.language << " | " << r.samples << " | " << fmt_pct(r.pct) << "% |\n";
    total += r.samples;
  }
  os << "| **Total** | **" << total << "** | **" << (rows.empty() ? "0.0" : "100.0") << "%** |\n";
  return os.str();
}

}  // namespace codi
