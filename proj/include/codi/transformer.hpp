#pragma once

#include <cstdint>
#include <vector>

#include "codi/tensor.hpp"

namespace codi {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int max_seq_len = 256;
  int n_latents = 6;
  int proj_hidden = 2048;

  int head_dim() const { return d_model / n_heads; }
  int ffn_hidden() const { return 4 * d_model; }
  void validate() const;
};

// Plain parameter array; shape plus row-major values.
struct Array {
  Shape shape;
  std::vector<double> v;

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  static Array zeros(Shape shape);
};

struct LayerParams {
  Array attn_norm;  // [d]
  Array wq, wk, wv, wo;  // [d x d]
  Array ffn_norm;   // [d]
  Array w_gate, w_up;  // [d x ffn]
  Array w_down;        // [ffn x d]
};

// Full parameter set for the shared decoder body. bot/eot are trainable
// marker rows outside the vocabulary table; proj_in/proj_out form the
// latent projector MLP (d_model -> proj_hidden -> d_model).
struct ModelParams {
  ModelConfig config;
  Array tok_embed;  // [vocab x d]
  Array pos_embed;  // [max_seq_len x d]
  std::vector<LayerParams> layers;
  Array final_norm;  // [d]
  Array lm_head;     // [d x vocab]
  Array bot_embed;   // [1 x d]
  Array eot_embed;   // [1 x d]
  Array proj_in;     // [d x proj_hidden]
  Array proj_out;    // [proj_hidden x d]

  static ModelParams init(const ModelConfig& config, uint64_t seed);

  // Visits every array in the canonical flattening order used by
  // checkpoints, gradients and the optimizer.
  template <typename F>
  void for_each(F&& f) {
    f(tok_embed);
    f(pos_embed);
    for (LayerParams& l : layers) {
      f(l.attn_norm);
      f(l.wq);
      f(l.wk);
      f(l.wv);
      f(l.wo);
      f(l.ffn_norm);
      f(l.w_gate);
      f(l.w_up);
      f(l.w_down);
    }
    f(final_norm);
    f(lm_head);
    f(bot_embed);
    f(eot_embed);
    f(proj_in);
    f(proj_out);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each([&](Array& a) { f(const_cast<const Array&>(a)); });
  }

  int64_t param_count() const;
  std::vector<double> to_flat() const;
  void from_flat(const std::vector<double>& flat);
};

struct BoundLayer {
  Tensor attn_norm, wq, wk, wv, wo, ffn_norm, w_gate, w_up, w_down;
};

// Graph-resident view of ModelParams for one forward/backward pass.
struct BoundParams {
  ModelConfig config;
  Tensor tok_embed, pos_embed;
  std::vector<BoundLayer> layers;
  Tensor final_norm, lm_head, bot_embed, eot_embed, proj_in, proj_out;

  static BoundParams bind(Graph& g, const ModelParams& p, bool requires_grad);

  template <typename F>
  void for_each(F&& f) const {
    f(tok_embed);
    f(pos_embed);
    for (const BoundLayer& l : layers) {
      f(l.attn_norm);
      f(l.wq);
      f(l.wk);
      f(l.wv);
      f(l.wo);
      f(l.ffn_norm);
      f(l.w_gate);
      f(l.w_up);
      f(l.w_down);
    }
    f(final_norm);
    f(lm_head);
    f(bot_embed);
    f(eot_embed);
    f(proj_in);
    f(proj_out);
  }

  // Gradients after Graph::backward, flattened in canonical order.
  std::vector<double> flat_grads() const;
};

// Per-layer attention key/value state. Tensors live in the same graph as
// the forward passes that produced them, so gradients flow through cached
// steps.
struct KVCache {
  struct Layer {
    Tensor k, v;  // [len x d_model]
  };
  int len = 0;
  std::vector<Layer> layers;

  explicit KVCache(int n_layers) : layers(static_cast<size_t>(n_layers)) {}
};

struct ForwardOutput {
  Tensor logits;               // [S x vocab], new rows only
  std::vector<Tensor> hidden;  // per layer, [S x d_model] block outputs
};

// Causal decoder forward over `input_rows` [S x d_model], which must
// already carry position encodings. With a cache, positions continue from
// cache->len and the cache is extended in place.
ForwardOutput transformer_forward(Graph& g, const BoundParams& p, const Tensor& input_rows,
                                  KVCache* cache);

// Token rows plus learned absolute position rows for positions
// [start_pos, start_pos + |tokens|). Returns [T x d_model].
Tensor embed_tokens(Graph& g, const BoundParams& p, const std::vector<int>& tokens, int start_pos);

// Adds position rows for [start_pos, start_pos + rows) to already-built
// input rows (marker embeddings, latent thoughts).
Tensor add_positions(Graph& g, const BoundParams& p, const Tensor& rows, int start_pos);

// Greedy argmax continuation: forwards `next_rows`, then repeatedly emits
// the argmax token (ties toward the lowest id) until `stop_token` or
// `max_new` tokens. The stop token is not part of the result.
struct GreedyResult {
  std::vector<int> tokens;
  bool stopped = false;  // stop_token seen before the budget ran out
};
GreedyResult decode_greedy(Graph& g, const BoundParams& p, KVCache& cache, const Tensor& next_rows,
                           int stop_token, int max_new);

}  // namespace codi
