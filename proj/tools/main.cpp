#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "codi/eval.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_vocab_path(const std::string& corpus_path) {
  return (fs::path(corpus_path).parent_path() / "vocab.json").string();
}

int cmd_synth(const std::string& config_path, const std::string& out_dir, uint64_t seed,
              bool seed_set) {
  codi::CorpusConfig cfg = codi::CorpusConfig::load(config_path);
  if (seed_set) cfg.seed = seed;
  codi::MultilingualCorpus corpus = codi::build_corpus(cfg);
  fs::create_directories(out_dir);
  corpus.save_jsonl(out_dir + "/corpus.jsonl");
  corpus.vocab.save(out_dir + "/vocab.json");
  const std::vector<codi::StatsRow> stats = codi::corpus_stats(corpus);
  {
    std::ofstream f(out_dir + "/stats.csv", std::ios::binary);
    f << codi::stats_to_csv(stats);
  }
  {
    std::ofstream f(out_dir + "/stats.md", std::ios::binary);
    f << codi::stats_to_markdown(stats);
  }
  std::cout << "wrote " << corpus.examples.size() << " examples across "
            << corpus.languages().size() << " languages to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& corpus_path,
              const std::string& vocab_path, const std::string& objective,
              const std::string& out_path, const std::string& log_path, uint64_t seed,
              bool seed_set) {
  codi::RunConfig cfg = codi::RunConfig::load(config_path);
  if (!objective.empty()) cfg.train.objective = objective;
  if (seed_set) cfg.train.seed = seed;
  const std::string vocab = vocab_path.empty() ? default_vocab_path(corpus_path) : vocab_path;
  codi::MultilingualCorpus corpus = codi::MultilingualCorpus::load_jsonl(corpus_path, vocab);
  if (cfg.model.vocab_size < corpus.vocab.size()) cfg.model.vocab_size = corpus.vocab.size();

  codi::TrainResult result = codi::train(cfg.train, cfg.model, corpus);
  codi::save_checkpoint(result.checkpoint, out_path);
  if (!log_path.empty()) codi::write_loss_log(log_path, result.log);
  std::cout << "trained " << cfg.train.objective << " for " << result.log.size()
            << " steps; checkpoint at " << out_path << "\n";
  if (!result.log.empty()) {
    const codi::StepLog& last = result.log.back();
    std::cout << "final losses: total=" << last.total << " teacher=" << last.teacher
              << " student=" << last.student << " kd=" << last.kd << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_path,
             const std::string& vocab_path, const std::string& mode,
             const std::string& report_dir, const std::vector<std::string>& train_languages) {
  codi::Checkpoint ckpt = codi::load_checkpoint(ckpt_path);
  const std::string vocab = vocab_path.empty() ? default_vocab_path(corpus_path) : vocab_path;
  codi::MultilingualCorpus corpus = codi::MultilingualCorpus::load_jsonl(corpus_path, vocab);

  codi::EvalOptions opts;
  opts.train_languages = train_languages;
  codi::EvalReport report = codi::evaluate(ckpt, corpus, mode, opts);
  codi::emit_report({report}, "csv", report_dir);
  codi::emit_report({report}, "markdown", report_dir);
  codi::emit_report({report}, "json", report_dir);
  std::cout << codi::report_to_markdown(report);
  return 0;
}

int cmd_matrix(const std::string& config_path, const std::string& out_dir, uint64_t seed,
               bool seed_set) {
  codi::MatrixConfig cfg =
      config_path.empty() ? codi::MatrixConfig::standard_desk() : codi::MatrixConfig::load(config_path);
  if (seed_set) {
    cfg.corpus.seed = seed;
    cfg.train.seed = seed;
  }
  codi::MatrixResult result = codi::run_matrix(cfg, out_dir);
  std::cout << "ran " << result.reports.size() << " cells; outputs under " << out_dir << "\n";
  std::cout << codi::comparison_to_markdown(result.comparison);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent chain-of-thought training and evaluation lab"};
  app.require_subcommand(1);

  uint64_t seed = 11;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multilingual corpus");
  std::string synth_config, synth_out;
  synth->add_option("--config", synth_config, "Corpus config JSON")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  auto* synth_seed = synth->add_option("--seed", seed, "Seed override");

  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  std::string train_config, train_corpus, train_vocab, train_objective, train_out, train_log;
  train->add_option("--config", train_config, "Run config JSON with model/train sections")->required();
  train->add_option("--corpus", train_corpus, "Corpus JSONL")->required();
  train->add_option("--vocab", train_vocab, "Vocabulary JSON (default: vocab.json next to corpus)");
  train->add_option("--objective", train_objective, "codi | sft")
      ->check(CLI::IsMember({"codi", "sft"}));
  train->add_option("--out", train_out, "Checkpoint output path")->required();
  train->add_option("--log", train_log, "Loss log CSV output path");
  auto* train_seed = train->add_option("--seed", seed, "Seed override");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus test split");
  std::string eval_ckpt, eval_corpus, eval_vocab, eval_mode, eval_report;
  std::vector<std::string> eval_train_langs;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--corpus", eval_corpus, "Corpus JSONL")->required();
  eval->add_option("--vocab", eval_vocab, "Vocabulary JSON (default: vocab.json next to corpus)");
  eval->add_option("--mode", eval_mode, "codi | sft")
      ->required()
      ->check(CLI::IsMember({"codi", "sft"}));
  eval->add_option("--report", eval_report, "Report output directory")->required();
  eval->add_option("--train-languages", eval_train_langs,
                   "Languages the checkpoint was trained on, for OOD flags");

  auto* matrix = app.add_subcommand("matrix", "Run the full experiment matrix");
  std::string matrix_config, matrix_out;
  matrix->add_option("--config", matrix_config, "Matrix config JSON (default: built-in desk profile)");
  matrix->add_option("--out", matrix_out, "Output directory")->required();
  auto* matrix_seed = matrix->add_option("--seed", seed, "Seed override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_config, synth_out, seed, synth_seed->count() > 0);
    if (train->parsed()) {
      return cmd_train(train_config, train_corpus, train_vocab, train_objective, train_out,
                       train_log, seed, train_seed->count() > 0);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_ckpt, eval_corpus, eval_vocab, eval_mode, eval_report, eval_train_langs);
    }
    if (matrix->parsed()) return cmd_matrix(matrix_config, matrix_out, seed, matrix_seed->count() > 0);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
