#include "codi/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "codi/rng.hpp"
#include "codi/sft.hpp"

namespace codi {

using nlohmann::json;

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("train config: learning_rate must be positive");
  if (scheduler != "cosine") throw std::invalid_argument("train config: unknown scheduler " + scheduler);
  if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) {
    throw std::invalid_argument("train config: warmup_ratio must be in [0, 1)");
  }
  if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (max_grad_norm <= 0.0) throw std::invalid_argument("train config: max_grad_norm must be positive");
  if (epochs < 1 || batch_size < 1 || max_seq_len < 1) {
    throw std::invalid_argument("train config: epochs, batch_size, max_seq_len must be >= 1");
  }
  if (objective != "codi" && objective != "sft") {
    throw std::invalid_argument("train config: objective must be codi or sft");
  }
  weights.validate();
}

// ---- config json -----------------------------------------------------------

std::string TrainConfig::to_json() const {
  json j;
  j["learning_rate"] = learning_rate;
  j["scheduler"] = scheduler;
  j["warmup_ratio"] = warmup_ratio;
  j["weight_decay"] = weight_decay;
  j["max_grad_norm"] = max_grad_norm;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["max_seq_len"] = max_seq_len;
  j["seed"] = seed;
  j["objective"] = objective;
  j["loss_weights"] = {{"alpha", weights.alpha},
                       {"beta", weights.beta},
                       {"gamma", weights.gamma},
                       {"normalize_kd", weights.normalize_kd}};
  return j.dump(2);
}

namespace {

TrainConfig train_config_from(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.scheduler = j.value("scheduler", c.scheduler);
  c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.seed = j.value("seed", c.seed);
  c.objective = j.value("objective", c.objective);
  if (j.contains("loss_weights")) {
    const json& w = j.at("loss_weights");
    c.weights.alpha = w.value("alpha", c.weights.alpha);
    c.weights.beta = w.value("beta", c.weights.beta);
    c.weights.gamma = w.value("gamma", c.weights.gamma);
    c.weights.normalize_kd = w.value("normalize_kd", c.weights.normalize_kd);
  }
  c.validate();
  return c;
}

json model_config_json(const ModelConfig& cfg) {
  json j;
  j["vocab_size"] = cfg.vocab_size;
  j["d_model"] = cfg.d_model;
  j["n_layers"] = cfg.n_layers;
  j["n_heads"] = cfg.n_heads;
  j["max_seq_len"] = cfg.max_seq_len;
  j["n_latents"] = cfg.n_latents;
  j["proj_hidden"] = cfg.proj_hidden;
  return j;
}

ModelConfig model_config_from(const json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.n_latents = j.value("n_latents", c.n_latents);
  c.proj_hidden = j.value("proj_hidden", c.proj_hidden);
  return c;
}

}  // namespace

TrainConfig TrainConfig::from_json(const std::string& text) {
  return train_config_from(json::parse(text));
}

std::string model_config_to_json(const ModelConfig& cfg) { return model_config_json(cfg).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  return model_config_from(json::parse(text));
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = model_config_json(model);
  j["train"] = json::parse(train.to_json());
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from(j.at("model"));
  c.train = j.contains("train") ? train_config_from(j.at("train")) : TrainConfig{};
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return from_json(os.str());
}

// ---- schedule / optimizer -----------------------------------------------------

double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg) {
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("lr_at: step outside [0, total_steps]");
  }
  if (total_steps == 0) return 0.0;
  const double warmup = cfg.warmup_ratio * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (warmup > 0.0 && s < warmup) {
    return cfg.learning_rate * s / warmup;
  }
  const double span = static_cast<double>(total_steps) - warmup;
  if (span <= 0.0) return 0.0;
  const double progress = (s - warmup) / span;
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

double clip_grad_norm(std::vector<double>& grads, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double factor = max_norm / norm;
  for (double& g : grads) g *= factor;
  return factor;
}

void adamw_step(std::vector<double>& params, const std::vector<double>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw std::invalid_argument("adamw_step: parameter/gradient/state size mismatch");
  }
  state.t += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * cfg.weight_decay * params[i];  // decoupled decay
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

// ---- loss log --------------------------------------------------------------------

namespace {

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string loss_log_to_csv(const std::vector<StepLog>& log) {
  std::ostringstream os;
  os << "step,lr,total,teacher,student,kd\n";
  for (const StepLog& s : log) {
    os << s.step << "," << fmt_g17(s.lr) << "," << fmt_g17(s.total) << "," << fmt_g17(s.teacher)
       << "," << fmt_g17(s.student) << "," << fmt_g17(s.kd) << "\n";
  }
  return os.str();
}

void write_loss_log(const std::string& path, const std::vector<StepLog>& log) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << loss_log_to_csv(log);
}

// ---- checkpoint ---------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'O', 'D', 'I', 'L', 'A', 'B', '1'};
constexpr uint32_t kVersion = 1;

uint64_t fnv1a(const uint8_t* data, size_t n) {
  uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void quantize_params(ModelParams& p) {
  p.for_each([](Array& a) {
    for (double& x : a.v) x = static_cast<double>(static_cast<float>(x));
  });
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format assumes a little-endian host");
  json header;
  header["model"] = model_config_json(ckpt.model_config);
  header["train"] = json::parse(ckpt.train_config.to_json());
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(ckpt.vocab_hash));
  header["vocab_hash"] = hex;
  header["step_count"] = ckpt.step_count;
  header["activation"] = ckpt.activation;
  const std::string header_text = header.dump();

  std::vector<float> blob;
  blob.reserve(static_cast<size_t>(ckpt.params.param_count()));
  ckpt.params.for_each([&](const Array& a) {
    for (double x : a.v) blob.push_back(static_cast<float>(x));
  });

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(kMagic, sizeof(kMagic));
  write_pod(f, kVersion);
  write_pod(f, static_cast<uint64_t>(header_text.size()));
  f.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  write_pod(f, static_cast<uint64_t>(blob.size()));
  f.write(reinterpret_cast<const char*>(blob.data()),
          static_cast<std::streamsize>(blob.size() * sizeof(float)));
  write_pod(f, fnv1a(reinterpret_cast<const uint8_t*>(blob.data()), blob.size() * sizeof(float)));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  uint32_t version = 0;
  read_pod(f, version);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  uint64_t header_len = 0;
  read_pod(f, header_len);
  if (header_len > (1ULL << 20)) throw std::runtime_error("checkpoint: header too large");
  std::string header_text(header_len, '\0');
  f.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw std::runtime_error("checkpoint: truncated header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception&) {
    throw std::runtime_error("checkpoint: corrupt header JSON");
  }

  Checkpoint ckpt;
  try {
    ckpt.model_config = model_config_from(header.at("model"));
    ckpt.train_config = train_config_from(header.at("train"));
    ckpt.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
    ckpt.step_count = header.at("step_count").get<int64_t>();
    ckpt.activation = header.at("activation").get<std::string>();
  } catch (const json::exception&) {
    throw std::runtime_error("checkpoint: header missing required fields");
  }
  ckpt.model_config.validate();

  uint64_t n = 0;
  read_pod(f, n);
  ckpt.params = ModelParams::init(ckpt.model_config, 0);
  if (n != static_cast<uint64_t>(ckpt.params.param_count())) {
    throw std::runtime_error("checkpoint: parameter count " + std::to_string(n) +
                             " does not match header config");
  }
  std::vector<float> blob(n);
  f.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!f) throw std::runtime_error("checkpoint: truncated parameter blob");
  uint64_t stored_hash = 0;
  read_pod(f, stored_hash);
  if (stored_hash != fnv1a(reinterpret_cast<const uint8_t*>(blob.data()), blob.size() * sizeof(float))) {
    throw std::runtime_error("checkpoint: parameter checksum mismatch");
  }

  std::vector<double> flat(blob.begin(), blob.end());
  ckpt.params.from_flat(flat);
  return ckpt;
}

// ---- training loop ---------------------------------------------------------------------

TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const MultilingualCorpus& corpus,
                  const std::vector<std::string>& train_languages) {
  cfg.validate();
  model_cfg.validate();
  if (model_cfg.vocab_size < corpus.vocab.size()) {
    throw std::invalid_argument("train: model vocab_size smaller than corpus vocabulary");
  }

  std::vector<const Example*> data;
  for (const Example& e : corpus.examples) {
    if (e.split != "train") continue;
    if (!train_languages.empty() &&
        std::find(train_languages.begin(), train_languages.end(), e.language) ==
            train_languages.end()) {
      continue;
    }
    data.push_back(&e);
  }
  if (data.empty()) throw std::invalid_argument("train: no training examples selected");

  ModelParams params = ModelParams::init(model_cfg, cfg.seed);
  std::vector<double> flat = params.to_flat();
  AdamWState opt = AdamWState::init(flat.size());

  const int n = static_cast<int>(data.size());
  const int batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = static_cast<int64_t>(cfg.epochs) * batches_per_epoch;

  Rng order_rng = Rng(cfg.seed).fork(0x0DDE7);
  std::vector<StepLog> log;
  log.reserve(static_cast<size_t>(total_steps));
  int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    order_rng.shuffle(order);

    for (int b = 0; b < batches_per_epoch; ++b) {
      const int lo = b * cfg.batch_size;
      const int hi = std::min(n, lo + cfg.batch_size);
      const int count = hi - lo;

      std::vector<double> grad_sum(flat.size(), 0.0);
      double total_sum = 0.0, teacher_sum = 0.0, student_sum = 0.0, kd_sum = 0.0;

      for (int i = lo; i < hi; ++i) {
        const Example& ex = *data[static_cast<size_t>(order[static_cast<size_t>(i)])];
        Graph g;
        BoundParams bound = BoundParams::bind(g, params, true);
        if (cfg.objective == "codi") {
          CodiStepResult r = codi_step(g, bound, ex, cfg.weights);
          g.backward(r.total);
          total_sum += r.total.item();
          teacher_sum += r.teacher_value;
          student_sum += r.student_value;
          kd_sum += r.kd_value;
        } else {
          Tensor loss = sft_loss(g, bound, ex);
          g.backward(loss);
          const double v = loss.item();
          total_sum += v;
          teacher_sum += v;
        }
        const std::vector<double> grads = bound.flat_grads();
        for (size_t j = 0; j < grads.size(); ++j) grad_sum[j] += grads[j];
      }

      const double inv = 1.0 / static_cast<double>(count);
      for (double& gv : grad_sum) gv *= inv;

      StepLog entry;
      entry.step = step;
      entry.total = total_sum * inv;
      entry.teacher = teacher_sum * inv;
      entry.student = student_sum * inv;
      entry.kd = kd_sum * inv;
      entry.lr = lr_at(step, total_steps, cfg);

      if (!std::isfinite(entry.total)) {
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                 " (teacher=" + std::to_string(entry.teacher) +
                                 ", student=" + std::to_string(entry.student) +
                                 ", kd=" + std::to_string(entry.kd) + ")");
      }
      for (double gv : grad_sum) {
        if (!std::isfinite(gv)) {
          throw std::runtime_error("train: non-finite gradient at step " + std::to_string(step));
        }
      }

      clip_grad_norm(grad_sum, cfg.max_grad_norm);
      adamw_step(flat, grad_sum, opt, entry.lr, cfg);
      params.from_flat(flat);

      log.push_back(entry);
      ++step;
    }
  }

  TrainResult result;
  result.checkpoint.model_config = model_cfg;
  result.checkpoint.train_config = cfg;
  result.checkpoint.vocab_hash = corpus.vocab.hash();
  result.checkpoint.step_count = step;
  result.checkpoint.activation = "silu";
  result.checkpoint.params = params;
  quantize_params(result.checkpoint.params);
  result.log = std::move(log);
  return result;
}

}  // namespace codi
