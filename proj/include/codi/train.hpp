#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codi/corpus.hpp"
#include "codi/objective.hpp"
#include "codi/transformer.hpp"

namespace codi {

struct TrainConfig {
  double learning_rate = 8e-4;  // peak
  std::string scheduler = "cosine";
  double warmup_ratio = 0.03;
  double weight_decay = 0.1;
  double max_grad_norm = 2.0;
  int epochs = 10;
  int batch_size = 128;  // effective
  int max_seq_len = 512;
  uint64_t seed = 11;
  std::string objective = "codi";  // "codi" | "sft"
  LossWeights weights;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Combined {"model": ..., "train": ...} configuration file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);
};

// Linear warmup to the peak rate over warmup_ratio * total_steps, then
// cosine decay to zero at total_steps.
double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg);

// Scales the flat gradient in place when its global L2 norm exceeds
// max_norm; returns the factor applied (1.0 when under the threshold).
double clip_grad_norm(std::vector<double>& grads, double max_norm);

struct AdamWState {
  std::vector<double> m, v;
  int64_t t = 0;

  static AdamWState init(size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

// Decoupled weight decay with bias-corrected moment estimates.
void adamw_step(std::vector<double>& params, const std::vector<double>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg);

struct StepLog {
  int64_t step = 0;
  double lr = 0.0;
  double total = 0.0, teacher = 0.0, student = 0.0, kd = 0.0;
};

std::string loss_log_to_csv(const std::vector<StepLog>& log);
void write_loss_log(const std::string& path, const std::vector<StepLog>& log);

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  uint64_t vocab_hash = 0;
  int64_t step_count = 0;
  std::string activation = "silu";
  ModelParams params;  // values quantized to 32-bit precision
};

// Flattened parameters stored as little-endian 32-bit floats behind a JSON
// header; load verifies magic, version, header consistency and a content
// checksum.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
};

// Trains on the corpus train split (optionally restricted to
// `train_languages`) with the configured objective. Deterministic for a
// fixed seed: init, data order and every update are seed-driven.
TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const MultilingualCorpus& corpus,
                  const std::vector<std::string>& train_languages = {});

}  // namespace codi
