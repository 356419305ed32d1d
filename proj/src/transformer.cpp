#include "codi/transformer.hpp"

#include <cmath>
#include <stdexcept>

#include "codi/rng.hpp"

namespace codi {

void ModelConfig::validate() const {
  if (vocab_size <= 0) throw std::invalid_argument("model config: vocab_size must be positive");
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || max_seq_len <= 0) {
    throw std::invalid_argument("model config: extents must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("model config: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (n_latents < 1) throw std::invalid_argument("model config: n_latents must be >= 1");
  if (proj_hidden <= 0) throw std::invalid_argument("model config: proj_hidden must be positive");
}

Array Array::zeros(Shape shape) {
  Array a;
  a.v.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  a.shape = std::move(shape);
  return a;
}

namespace {

Array init_normal(Shape shape, Rng& rng, double std_dev) {
  Array a = Array::zeros(std::move(shape));
  for (double& x : a.v) x = rng.normal() * std_dev;
  return a;
}

Array init_ones(Shape shape) {
  Array a = Array::zeros(std::move(shape));
  for (double& x : a.v) x = 1.0;
  return a;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double std_dev = 0.02;
  const int d = config.d_model;
  ModelParams p;
  p.config = config;
  p.tok_embed = init_normal({config.vocab_size, d}, rng, std_dev);
  p.pos_embed = init_normal({config.max_seq_len, d}, rng, std_dev);
  p.layers.resize(static_cast<size_t>(config.n_layers));
  for (LayerParams& l : p.layers) {
    l.attn_norm = init_ones({d});
    l.wq = init_normal({d, d}, rng, std_dev);
    l.wk = init_normal({d, d}, rng, std_dev);
    l.wv = init_normal({d, d}, rng, std_dev);
    l.wo = init_normal({d, d}, rng, std_dev);
    l.ffn_norm = init_ones({d});
    l.w_gate = init_normal({d, config.ffn_hidden()}, rng, std_dev);
    l.w_up = init_normal({d, config.ffn_hidden()}, rng, std_dev);
    l.w_down = init_normal({config.ffn_hidden(), d}, rng, std_dev);
  }
  p.final_norm = init_ones({d});
  p.lm_head = init_normal({d, config.vocab_size}, rng, std_dev);
  p.bot_embed = init_normal({1, d}, rng, std_dev);
  p.eot_embed = init_normal({1, d}, rng, std_dev);
  p.proj_in = init_normal({d, config.proj_hidden}, rng, std_dev);
  p.proj_out = init_normal({config.proj_hidden, d}, rng, std_dev);
  return p;
}

int64_t ModelParams::param_count() const {
  int64_t n = 0;
  for_each([&](const Array& a) { n += a.numel(); });
  return n;
}

std::vector<double> ModelParams::to_flat() const {
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(param_count()));
  for_each([&](const Array& a) { flat.insert(flat.end(), a.v.begin(), a.v.end()); });
  return flat;
}

void ModelParams::from_flat(const std::vector<double>& flat) {
  size_t off = 0;
  for_each([&](Array& a) {
    if (off + a.v.size() > flat.size()) {
      throw std::invalid_argument("from_flat: parameter vector too short");
    }
    std::copy(flat.begin() + static_cast<long>(off), flat.begin() + static_cast<long>(off + a.v.size()),
              a.v.begin());
    off += a.v.size();
  });
  if (off != flat.size()) throw std::invalid_argument("from_flat: parameter vector too long");
}

BoundParams BoundParams::bind(Graph& g, const ModelParams& p, bool requires_grad) {
  BoundParams b;
  b.config = p.config;
  auto bind_one = [&](const Array& a) { return g.leaf(a.shape, a.v, requires_grad); };
  b.tok_embed = bind_one(p.tok_embed);
  b.pos_embed = bind_one(p.pos_embed);
  b.layers.resize(p.layers.size());
  for (size_t i = 0; i < p.layers.size(); ++i) {
    const LayerParams& l = p.layers[i];
    BoundLayer& bl = b.layers[i];
    bl.attn_norm = bind_one(l.attn_norm);
    bl.wq = bind_one(l.wq);
    bl.wk = bind_one(l.wk);
    bl.wv = bind_one(l.wv);
    bl.wo = bind_one(l.wo);
    bl.ffn_norm = bind_one(l.ffn_norm);
    bl.w_gate = bind_one(l.w_gate);
    bl.w_up = bind_one(l.w_up);
    bl.w_down = bind_one(l.w_down);
  }
  b.final_norm = bind_one(p.final_norm);
  b.lm_head = bind_one(p.lm_head);
  b.bot_embed = bind_one(p.bot_embed);
  b.eot_embed = bind_one(p.eot_embed);
  b.proj_in = bind_one(p.proj_in);
  b.proj_out = bind_one(p.proj_out);
  return b;
}

std::vector<double> BoundParams::flat_grads() const {
  std::vector<double> flat;
  for_each([&](const Tensor& t) {
    const std::vector<double> g = t.grad();
    flat.insert(flat.end(), g.begin(), g.end());
  });
  return flat;
}

Tensor embed_tokens(Graph& g, const BoundParams& p, const std::vector<int>& tokens, int start_pos) {
  const int t = static_cast<int>(tokens.size());
  if (start_pos < 0 || start_pos + t > p.config.max_seq_len) {
    throw std::invalid_argument("embed_tokens: positions [" + std::to_string(start_pos) + ", " +
                                std::to_string(start_pos + t) + ") exceed max_seq_len " +
                                std::to_string(p.config.max_seq_len));
  }
  Tensor tok = g.embedding(p.tok_embed, tokens);
  if (t == 0) return tok;
  std::vector<int> positions(static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) positions[static_cast<size_t>(i)] = start_pos + i;
  return g.add(tok, g.embedding(p.pos_embed, positions));
}

Tensor add_positions(Graph& g, const BoundParams& p, const Tensor& rows, int start_pos) {
  const int t = rows.rows();
  if (start_pos < 0 || start_pos + t > p.config.max_seq_len) {
    throw std::invalid_argument("add_positions: positions exceed max_seq_len " +
                                std::to_string(p.config.max_seq_len));
  }
  std::vector<int> positions(static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) positions[static_cast<size_t>(i)] = start_pos + i;
  return g.add(rows, g.embedding(p.pos_embed, positions));
}

namespace {

// Additive causal mask for S query rows over past+S key columns: query i
// (absolute position past + i) may attend to columns <= past + i.
Tensor causal_mask(Graph& g, int s, int past) {
  const int total = past + s;
  std::vector<double> m(static_cast<size_t>(s) * total, 0.0);
  for (int i = 0; i < s; ++i) {
    for (int j = past + i + 1; j < total; ++j) {
      m[static_cast<size_t>(i) * total + j] = -1e30;
    }
  }
  return g.constant({s, total}, std::move(m));
}

}  // namespace

ForwardOutput transformer_forward(Graph& g, const BoundParams& p, const Tensor& input_rows,
                                  KVCache* cache) {
  const ModelConfig& cfg = p.config;
  const int s = input_rows.rows();
  if (s < 1) throw std::invalid_argument("forward: at least one input row required");
  if (input_rows.cols() != cfg.d_model) {
    throw std::invalid_argument("forward: input width " + std::to_string(input_rows.cols()) +
                                " != d_model " + std::to_string(cfg.d_model));
  }
  const int past = cache ? cache->len : 0;
  if (past + s > cfg.max_seq_len) {
    throw std::invalid_argument("forward: sequence length " + std::to_string(past + s) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  if (cache && cache->layers.size() != static_cast<size_t>(cfg.n_layers)) {
    throw std::invalid_argument("forward: cache layer count mismatch");
  }

  const int dh = cfg.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor mask = causal_mask(g, s, past);

  ForwardOutput out;
  out.hidden.reserve(static_cast<size_t>(cfg.n_layers));
  Tensor x = input_rows;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const BoundLayer& lp = p.layers[static_cast<size_t>(l)];
    Tensor h = g.rmsnorm(x, lp.attn_norm);
    Tensor q = g.matmul(h, lp.wq);
    Tensor k = g.matmul(h, lp.wk);
    Tensor v = g.matmul(h, lp.wv);
    Tensor k_all = k;
    Tensor v_all = v;
    if (cache && cache->layers[static_cast<size_t>(l)].k.defined()) {
      k_all = g.concat({cache->layers[static_cast<size_t>(l)].k, k}, 0);
      v_all = g.concat({cache->layers[static_cast<size_t>(l)].v, v}, 0);
    }
    if (cache) {
      cache->layers[static_cast<size_t>(l)].k = k_all;
      cache->layers[static_cast<size_t>(l)].v = v_all;
    }
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(cfg.n_heads));
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      const int c0 = hd * dh, c1 = (hd + 1) * dh;
      Tensor qh = g.slice(q, 1, c0, c1);
      Tensor kh = g.slice(k_all, 1, c0, c1);
      Tensor vh = g.slice(v_all, 1, c0, c1);
      Tensor scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_dh);
      Tensor attn = g.softmax(g.add(scores, mask), 1);
      head_outs.push_back(g.matmul(attn, vh));
    }
    Tensor attn_out = g.matmul(cfg.n_heads > 1 ? g.concat(head_outs, 1) : head_outs[0], lp.wo);
    x = g.add(x, attn_out);
    Tensor f = g.rmsnorm(x, lp.ffn_norm);
    Tensor gate = g.silu(g.matmul(f, lp.w_gate));
    Tensor up = g.matmul(f, lp.w_up);
    Tensor ffn = g.matmul(g.mul(gate, up), lp.w_down);
    x = g.add(x, ffn);
    out.hidden.push_back(x);
  }
  out.logits = g.matmul(g.rmsnorm(x, p.final_norm), p.lm_head);
  if (cache) cache->len = past + s;
  return out;
}

namespace {

// Lowest-id argmax over the final row of a logits tensor.
int argmax_last_row(const Tensor& logits) {
  const int rows = logits.rows(), cols = logits.cols();
  const std::vector<double>& v = logits.values();
  const size_t base = static_cast<size_t>(rows - 1) * cols;
  int best = 0;
  for (int j = 1; j < cols; ++j) {
    if (v[base + static_cast<size_t>(j)] > v[base + static_cast<size_t>(best)]) best = j;
  }
  return best;
}

}  // namespace

GreedyResult decode_greedy(Graph& g, const BoundParams& p, KVCache& cache, const Tensor& next_rows,
                           int stop_token, int max_new) {
  if (max_new < 1) throw std::invalid_argument("decode_greedy: max_new must be >= 1");
  GreedyResult result;
  ForwardOutput out = transformer_forward(g, p, next_rows, &cache);
  while (static_cast<int>(result.tokens.size()) < max_new) {
    const int tok = argmax_last_row(out.logits);
    if (tok == stop_token) {
      result.stopped = true;
      break;
    }
    result.tokens.push_back(tok);
    if (static_cast<int>(result.tokens.size()) == max_new) break;
    if (cache.len >= p.config.max_seq_len) break;
    out = transformer_forward(g, p, embed_tokens(g, p, {tok}, cache.len), &cache);
  }
  return result;
}

}  // namespace codi
