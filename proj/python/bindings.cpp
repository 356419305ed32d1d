#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>

#include "codi/eval.hpp"
#include "codi/objective.hpp"
#include "codi/sft.hpp"

namespace py = pybind11;

namespace {

py::dict report_to_dict(const codi::EvalReport& report) {
  py::dict d;
  d["setup"] = report.setup;
  d["objective"] = report.objective;
  py::list rows;
  for (const codi::EvalRow& r : report.rows) {
    py::dict row;
    row["language"] = r.language;
    row["n"] = r.n;
    row["correct"] = r.correct;
    row["truncated"] = r.truncated;
    row["accuracy"] = r.accuracy_pct;
    row["think_tokens"] = r.think_tokens;
    row["ood"] = r.ood;
    rows.append(row);
  }
  d["rows"] = rows;
  return d;
}

py::dict synth(const std::string& config_json, const std::string& out_dir) {
  codi::CorpusConfig cfg = codi::CorpusConfig::from_json(config_json);
  codi::MultilingualCorpus corpus = codi::build_corpus(cfg);
  std::filesystem::create_directories(out_dir);
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
  py::dict d;
  d["examples"] = corpus.examples.size();
  py::list rows;
  for (const codi::StatsRow& r : stats) {
    py::dict row;
    row["language"] = r.language;
    row["samples"] = r.samples;
    row["pct"] = r.pct;
    rows.append(row);
  }
  d["stats"] = rows;
  d["corpus"] = out_dir + "/corpus.jsonl";
  d["vocab"] = out_dir + "/vocab.json";
  return d;
}

py::dict train_model(const std::string& run_config_json, const std::string& corpus_path,
                     const std::string& vocab_path, const std::string& ckpt_out,
                     const std::string& objective, const std::string& log_out,
                     const std::vector<std::string>& train_languages) {
  codi::RunConfig cfg = codi::RunConfig::from_json(run_config_json);
  if (!objective.empty()) cfg.train.objective = objective;
  codi::MultilingualCorpus corpus = codi::MultilingualCorpus::load_jsonl(corpus_path, vocab_path);
  if (cfg.model.vocab_size < corpus.vocab.size()) cfg.model.vocab_size = corpus.vocab.size();
  codi::TrainResult result = codi::train(cfg.train, cfg.model, corpus, train_languages);
  codi::save_checkpoint(result.checkpoint, ckpt_out);
  if (!log_out.empty()) codi::write_loss_log(log_out, result.log);
  py::dict d;
  d["steps"] = result.log.size();
  d["checkpoint"] = ckpt_out;
  if (!result.log.empty()) {
    const codi::StepLog& last = result.log.back();
    d["final_total"] = last.total;
    d["final_teacher"] = last.teacher;
    d["final_student"] = last.student;
    d["final_kd"] = last.kd;
  }
  return d;
}

py::dict evaluate_checkpoint(const std::string& ckpt_path, const std::string& corpus_path,
                             const std::string& vocab_path, const std::string& mode,
                             const std::vector<std::string>& train_languages,
                             const std::string& setup_tag) {
  codi::Checkpoint ckpt = codi::load_checkpoint(ckpt_path);
  codi::MultilingualCorpus corpus = codi::MultilingualCorpus::load_jsonl(corpus_path, vocab_path);
  codi::EvalOptions opts;
  opts.train_languages = train_languages;
  opts.setup_tag = setup_tag;
  return report_to_dict(codi::evaluate(ckpt, corpus, mode, opts));
}

py::dict run_matrix_py(const std::string& out_dir, const std::string& config_json) {
  codi::MatrixConfig cfg = config_json.empty() ? codi::MatrixConfig::standard_desk()
                                               : codi::MatrixConfig::from_json(config_json);
  codi::MatrixResult result = codi::run_matrix(cfg, out_dir);
  py::dict d;
  py::list reports;
  for (const codi::EvalReport& r : result.reports) reports.append(report_to_dict(r));
  d["reports"] = reports;
  py::list comparison;
  for (const codi::ComparisonRow& r : result.comparison) {
    py::dict row;
    row["setup"] = r.setup;
    row["language"] = r.language;
    row["ood"] = r.ood;
    row["codi_acc"] = r.codi_acc;
    row["sft_acc"] = r.sft_acc;
    row["delta"] = r.delta;
    row["sft_avg_cot"] = r.sft_avg_cot;
    row["latent_tokens"] = r.latent_tokens;
    row["compression"] = r.compression;
    comparison.append(row);
  }
  d["comparison"] = comparison;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Continuous latent chain-of-thought training lab";

  m.def("synth", &synth, py::arg("config_json"), py::arg("out_dir"),
        "Generate a synthetic multilingual corpus (corpus.jsonl, vocab.json, stats)");
  m.def("train", &train_model, py::arg("run_config_json"), py::arg("corpus_path"),
        py::arg("vocab_path"), py::arg("ckpt_out"), py::arg("objective") = "",
        py::arg("log_out") = "", py::arg("train_languages") = std::vector<std::string>{},
        "Train a model and write a checkpoint");
  m.def("evaluate", &evaluate_checkpoint, py::arg("ckpt_path"), py::arg("corpus_path"),
        py::arg("vocab_path"), py::arg("mode"),
        py::arg("train_languages") = std::vector<std::string>{}, py::arg("setup_tag") = "eval",
        "Evaluate a checkpoint on a corpus test split");
  m.def("run_matrix", &run_matrix_py, py::arg("out_dir"), py::arg("config_json") = "",
        "Run the setups x objectives experiment matrix");
  m.def("compression_ratio", &codi::compression_ratio, py::arg("avg_cot_tokens"),
        py::arg("k_latents"), "Average explicit CoT tokens per latent thought");

  m.attr("__version__") = "0.1.0";
}
