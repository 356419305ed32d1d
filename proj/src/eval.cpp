#include "codi/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "codi/objective.hpp"
#include "codi/sft.hpp"

namespace codi {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

long long gold_answer(const Example& ex, const Vocabulary& vocab) {
  std::vector<int> digits = ex.answer;
  while (!digits.empty() && digits.back() == vocab.eoa_id) digits.pop_back();
  long long value = 0;
  if (!vocab.decode_number(digits, value)) {
    throw std::runtime_error("example " + std::to_string(ex.id) + ": answer is not numeric");
  }
  return value;
}

}  // namespace

double compression_ratio(double avg_cot_tokens, int k_latents) {
  if (k_latents < 1) throw std::invalid_argument("compression_ratio: k must be >= 1");
  if (avg_cot_tokens < 0.0) throw std::invalid_argument("compression_ratio: negative average");
  return avg_cot_tokens / static_cast<double>(k_latents);
}

EvalReport evaluate(const Checkpoint& ckpt, const MultilingualCorpus& corpus,
                    const std::string& mode, const EvalOptions& options) {
  if (mode != "codi" && mode != "sft") throw std::invalid_argument("evaluate: mode must be codi or sft");
  if (ckpt.vocab_hash != corpus.vocab.hash()) {
    throw std::runtime_error("evaluate: checkpoint vocabulary hash does not match corpus");
  }

  struct Agg {
    int n = 0, correct = 0, truncated = 0;
    double think_sum = 0.0;
  };
  std::map<std::string, Agg> by_language;

  const int k = ckpt.model_config.n_latents;
  for (const Example* exp : corpus.split_examples("test")) {
    const Example& ex = *exp;
    Agg& agg = by_language[ex.language];
    agg.n += 1;

    const long long gold = gold_answer(ex, corpus.vocab);
    bool truncated = false;
    std::vector<int> decoded;
    if (mode == "codi") {
      CodiInferResult r = codi_infer(ckpt.params, ex.question, k, ex.answer_prompt,
                                     corpus.vocab.eoa_id, options.max_answer);
      truncated = r.truncated;
      decoded = std::move(r.answer);
      agg.think_sum += static_cast<double>(r.thinking_tokens);
    } else {
      const int budget = std::min(options.sft_budget,
                                  ckpt.model_config.max_seq_len -
                                      static_cast<int>(ex.question.size()) - 1);
      if (budget < 1) throw std::runtime_error("evaluate: question leaves no decode budget");
      SftInferResult r = sft_infer(ckpt.params, ex.question, ex.answer_prompt,
                                   corpus.vocab.eoa_id, budget);
      truncated = r.truncated;
      decoded = std::move(r.answer);
      agg.think_sum += static_cast<double>(r.cot_length);
    }

    if (truncated) {
      agg.truncated += 1;  // tallied separately; never counted correct
      continue;
    }
    long long value = 0;
    if (corpus.vocab.decode_number(decoded, value) && value == gold) agg.correct += 1;
  }

  EvalReport report;
  report.setup = options.setup_tag;
  report.objective = mode;
  for (const auto& [language, agg] : by_language) {
    EvalRow row;
    row.language = language;
    row.n = agg.n;
    row.correct = agg.correct;
    row.truncated = agg.truncated;
    row.accuracy_pct = agg.n > 0 ? 100.0 * agg.correct / agg.n : 0.0;
    row.think_tokens = agg.n > 0 ? agg.think_sum / agg.n : 0.0;
    row.ood = !options.train_languages.empty() &&
              std::find(options.train_languages.begin(), options.train_languages.end(), language) ==
                  options.train_languages.end();
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---- emission -------------------------------------------------------------

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "setup,objective,language,n,correct,truncated,accuracy,think_tokens,ood\n";
  for (const EvalRow& r : report.rows) {
    os << report.setup << "," << report.objective << "," << r.language << "," << r.n << ","
       << r.correct << "," << r.truncated << "," << fmt2(r.accuracy_pct) << ","
       << fmt2(r.think_tokens) << "," << (r.ood ? 1 : 0) << "\n";
  }
  return os.str();
}

EvalReport report_from_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("report csv: empty input");
  EvalReport report;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 9) throw std::runtime_error("report csv: malformed row: " + line);
    if (first) {
      report.setup = fields[0];
      report.objective = fields[1];
      first = false;
    }
    EvalRow r;
    r.language = fields[2];
    r.n = std::stoi(fields[3]);
    r.correct = std::stoi(fields[4]);
    r.truncated = std::stoi(fields[5]);
    r.accuracy_pct = std::stod(fields[6]);
    r.think_tokens = std::stod(fields[7]);
    r.ood = fields[8] == "1";
    report.rows.push_back(std::move(r));
  }
  return report;
}

std::string report_to_markdown(const EvalReport& report) {
  std::ostringstream os;
  os << "### " << report.setup << " / " << report.objective << "\n\n";
  os << "| Language | n | Accuracy (%) | Think tokens | Truncated | OOD |\n";
  os << "|----------|---|--------------|--------------|-----------|-----|\n";
  for (const EvalRow& r : report.rows) {
    os << "| " << r.language << " | " << r.n << " | " << fmt2(r.accuracy_pct) << " | "
       << fmt2(r.think_tokens) << " | " << r.truncated << " | " << (r.ood ? "yes" : "") << " |\n";
  }
  return os.str();
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["setup"] = report.setup;
  j["objective"] = report.objective;
  j["rows"] = json::array();
  for (const EvalRow& r : report.rows) {
    j["rows"].push_back({{"language", r.language},
                         {"n", r.n},
                         {"correct", r.correct},
                         {"truncated", r.truncated},
                         {"accuracy", r.accuracy_pct},
                         {"think_tokens", r.think_tokens},
                         {"ood", r.ood}});
  }
  return j.dump(2) + "\n";
}

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

}  // namespace

std::vector<std::string> emit_report(const std::vector<EvalReport>& reports,
                                     const std::string& format, const std::string& dir) {
  if (format != "csv" && format != "markdown" && format != "json") {
    throw std::invalid_argument("emit_report: format must be csv, markdown or json");
  }
  fs::create_directories(dir);
  std::vector<std::string> paths;
  if (reports.empty()) {
    // header-only placeholder so downstream tooling sees the schema
    const std::string path = dir + "/reports_empty." + (format == "markdown" ? "md" : format);
    if (format == "csv") {
      write_file(path, "setup,objective,language,n,correct,truncated,accuracy,think_tokens,ood\n");
    } else if (format == "markdown") {
      write_file(path, "| Language | n | Accuracy (%) | Think tokens | Truncated | OOD |\n"
                       "|----------|---|--------------|--------------|-----------|-----|\n");
    } else {
      write_file(path, "[]\n");
    }
    paths.push_back(path);
    return paths;
  }
  for (const EvalReport& r : reports) {
    const std::string base = dir + "/report_" + sanitize(r.setup) + "_" + sanitize(r.objective);
    if (format == "csv") {
      write_file(base + ".csv", report_to_csv(r));
      paths.push_back(base + ".csv");
    } else if (format == "markdown") {
      write_file(base + ".md", report_to_markdown(r));
      paths.push_back(base + ".md");
    } else {
      write_file(base + ".json", report_to_json(r));
      paths.push_back(base + ".json");
    }
  }
  return paths;
}

// ---- matrix -----------------------------------------------------------------

MatrixConfig MatrixConfig::standard_desk() {
  MatrixConfig cfg;
  cfg.corpus.seed = 11;
  cfg.corpus.budgets = {{"en-like", 80}, {"de-like", 80}, {"fr-like", 80}, {"zh-like", 80},
                        {"ur-like", 16}};
  cfg.corpus.test_fraction = 0.25;
  cfg.corpus.difficulty_min = 2;
  cfg.corpus.difficulty_max = 2;
  cfg.corpus.operand_max = 9;
  cfg.corpus.start_max = 20;

  cfg.model.vocab_size = 64;
  cfg.model.d_model = 64;
  cfg.model.n_layers = 4;
  cfg.model.n_heads = 4;
  cfg.model.max_seq_len = 128;
  cfg.model.n_latents = 6;
  cfg.model.proj_hidden = 256;

  cfg.train.learning_rate = 2e-3;
  cfg.train.epochs = 6;
  cfg.train.batch_size = 8;
  cfg.train.max_seq_len = 128;
  cfg.train.seed = 11;

  cfg.matrix.setups = {
      {"English-only", {"en-like"}},
      {"Multi-Lingual", {"en-like", "de-like", "fr-like", "zh-like"}},
      {"Multi-Lingual-with-LowResource", {"en-like", "de-like", "fr-like", "zh-like", "ur-like"}},
  };
  cfg.matrix.objectives = {"codi", "sft"};
  cfg.eval_sft_budget = 96;
  return cfg;
}

std::string MatrixConfig::to_json() const {
  json j;
  j["corpus"] = json::parse(corpus.to_json());
  j["model"] = json::parse(model_config_to_json(model));
  j["train"] = json::parse(train.to_json());
  j["setups"] = json::array();
  for (const MatrixSetup& s : matrix.setups) {
    j["setups"].push_back({{"name", s.name}, {"train_languages", s.train_languages}});
  }
  j["objectives"] = matrix.objectives;
  j["eval_max_answer"] = eval_max_answer;
  j["eval_sft_budget"] = eval_sft_budget;
  return j.dump(2) + "\n";
}

MatrixConfig MatrixConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  MatrixConfig cfg = standard_desk();
  if (j.contains("corpus")) cfg.corpus = CorpusConfig::from_json(j.at("corpus").dump());
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model").dump());
  if (j.contains("train")) cfg.train = TrainConfig::from_json(j.at("train").dump());
  if (j.contains("setups")) {
    cfg.matrix.setups.clear();
    for (const json& s : j.at("setups")) {
      cfg.matrix.setups.push_back(
          {s.at("name").get<std::string>(), s.at("train_languages").get<std::vector<std::string>>()});
    }
  }
  if (j.contains("objectives")) cfg.matrix.objectives = j.at("objectives").get<std::vector<std::string>>();
  cfg.eval_max_answer = j.value("eval_max_answer", cfg.eval_max_answer);
  cfg.eval_sft_budget = j.value("eval_sft_budget", cfg.eval_sft_budget);
  return cfg;
}

MatrixConfig MatrixConfig::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return from_json(os.str());
}

std::string comparison_to_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "setup,language,ood,codi_acc,sft_acc,delta,sft_avg_cot,latent_tokens,compression\n";
  for (const ComparisonRow& r : rows) {
    os << r.setup << "," << r.language << "," << (r.ood ? 1 : 0) << "," << fmt2(r.codi_acc) << ","
       << fmt2(r.sft_acc) << "," << fmt2(r.delta) << "," << fmt2(r.sft_avg_cot) << ","
       << r.latent_tokens << "," << fmt1(r.compression) << "\n";
  }
  return os.str();
}

std::string comparison_to_markdown(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "| Setup | Language | OOD | CODI (%) | CoT-SFT (%) | Delta | SFT avg CoT | Latents | Compression |\n";
  os << "|-------|----------|-----|----------|-------------|-------|-------------|---------|-------------|\n";
  for (const ComparisonRow& r : rows) {
    os << "| " << r.setup << " | " << r.language << " | " << (r.ood ? "yes" : "") << " | "
       << fmt2(r.codi_acc) << " | " << fmt2(r.sft_acc) << " | " << fmt2(r.delta) << " | "
       << fmt2(r.sft_avg_cot) << " | " << r.latent_tokens << " | " << fmt1(r.compression)
       << "x |\n";
  }
  return os.str();
}

MatrixResult run_matrix(const MatrixConfig& cfg, const std::string& out_dir) {
  if (cfg.matrix.setups.empty() || cfg.matrix.objectives.empty()) {
    throw std::invalid_argument("run_matrix: empty matrix");
  }
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/reports");

  MultilingualCorpus corpus = build_corpus(cfg.corpus);
  corpus.save_jsonl(out_dir + "/corpus.jsonl");
  corpus.vocab.save(out_dir + "/vocab.json");
  write_file(out_dir + "/stats.csv", stats_to_csv(corpus_stats(corpus)));
  write_file(out_dir + "/stats.md", stats_to_markdown(corpus_stats(corpus)));

  ModelConfig model_cfg = cfg.model;
  if (model_cfg.vocab_size < corpus.vocab.size()) model_cfg.vocab_size = corpus.vocab.size();

  MatrixResult result;
  for (const MatrixSetup& setup : cfg.matrix.setups) {
    for (const std::string& objective : cfg.matrix.objectives) {
      TrainConfig tc = cfg.train;
      tc.objective = objective;
      TrainResult tr = train(tc, model_cfg, corpus, setup.train_languages);

      const std::string cell = sanitize(setup.name) + "_" + sanitize(objective);
      save_checkpoint(tr.checkpoint, out_dir + "/ckpt_" + cell + ".bin");
      write_loss_log(out_dir + "/loss_" + cell + ".csv", tr.log);

      EvalOptions opts;
      opts.max_answer = cfg.eval_max_answer;
      opts.sft_budget = cfg.eval_sft_budget;
      opts.train_languages = setup.train_languages;
      opts.setup_tag = setup.name;
      result.reports.push_back(evaluate(tr.checkpoint, corpus, objective, opts));
    }
  }

  // side-by-side comparison; the delta is recorded, never asserted
  for (const MatrixSetup& setup : cfg.matrix.setups) {
    const EvalReport* codi_report = nullptr;
    const EvalReport* sft_report = nullptr;
    for (const EvalReport& r : result.reports) {
      if (r.setup != setup.name) continue;
      if (r.objective == "codi") codi_report = &r;
      if (r.objective == "sft") sft_report = &r;
    }
    if (!codi_report || !sft_report) continue;
    for (const EvalRow& cr : codi_report->rows) {
      const EvalRow* sr = nullptr;
      for (const EvalRow& row : sft_report->rows) {
        if (row.language == cr.language) sr = &row;
      }
      if (!sr) continue;
      ComparisonRow row;
      row.setup = setup.name;
      row.language = cr.language;
      row.ood = cr.ood;
      row.codi_acc = cr.accuracy_pct;
      row.sft_acc = sr->accuracy_pct;
      row.delta = cr.accuracy_pct - sr->accuracy_pct;
      row.sft_avg_cot = sr->think_tokens;
      row.latent_tokens = static_cast<int>(cr.think_tokens);
      row.compression = compression_ratio(sr->think_tokens, std::max(1, row.latent_tokens));
      result.comparison.push_back(std::move(row));
    }
  }

  emit_report(result.reports, "csv", out_dir + "/reports");
  emit_report(result.reports, "markdown", out_dir + "/reports");
  emit_report(result.reports, "json", out_dir + "/reports");
  write_file(out_dir + "/comparison.csv", comparison_to_csv(result.comparison));
  write_file(out_dir + "/comparison.md", comparison_to_markdown(result.comparison));
  return result;
}

}  // namespace codi
