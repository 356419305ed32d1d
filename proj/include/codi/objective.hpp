#pragma once

#include <utility>
#include <vector>

#include "codi/example.hpp"
#include "codi/tensor.hpp"
#include "codi/transformer.hpp"

namespace codi {

struct LossWeights {
  double alpha = 1.0;   // student
  double beta = 20.0;   // distillation
  double gamma = 1.0;   // teacher
  bool normalize_kd = true;

  void validate() const;
};

// The K continuous thoughts produced by a student rollout, plus the cache
// holding question + <bot> + z_1..z_K so the answer can continue from it.
struct LatentState {
  std::vector<Tensor> z;  // K tensors, each [1 x d_model]
  KVCache cache;
  int question_len = 0;
  int forward_count = 0;  // incremental forwards performed by the rollout

  explicit LatentState(int n_layers) : cache(n_layers) {}
};

// Per-layer hidden vectors at the answer-prompt position of one stream.
struct HiddenCapture {
  std::vector<Tensor> layers;  // L tensors, each [1 x d_model]
  int position = -1;           // absolute stream index that was captured
};

// Rolls out K continuous thoughts: forward question + <bot>, then
// repeatedly project the final layer's hidden at the last position through
// the latent MLP and feed it back as the next input row. Gradients flow
// through every step.
LatentState latent_rollout(Graph& g, const BoundParams& p, const std::vector<int>& question,
                           int k_latents);

// Cross-entropy over cot + answer_prompt + answer with the question
// masked out, plus per-layer hiddens at the answer-prompt position.
std::pair<Tensor, HiddenCapture> teacher_loss(Graph& g, const BoundParams& p, const Example& ex);

// Continues the rollout cache with <eot>, answer_prompt and the answer;
// cross-entropy on answer positions only.
std::pair<Tensor, HiddenCapture> student_loss(Graph& g, const BoundParams& p, const Example& ex,
                                              LatentState& state);

// Mean over layers of the L1 distance between the (stop-gradient) teacher
// capture and the student capture. With `normalize`, each layer is scaled
// by 1 / (std(teacher_l) + 1e-6), the std taken over the teacher vector's
// elements and itself treated as a constant.
Tensor kd_loss(Graph& g, const HiddenCapture& teacher, const HiddenCapture& student,
               bool normalize);

struct CodiStepResult {
  Tensor total;  // alpha * student + beta * kd + gamma * teacher
  double teacher_value = 0.0;
  double student_value = 0.0;
  double kd_value = 0.0;
};

// Builds teacher and student streams over one shared parameter binding and
// combines the three losses. The caller runs Graph::backward on `total`.
CodiStepResult codi_step(Graph& g, const BoundParams& p, const Example& ex,
                         const LossWeights& weights);

struct CodiInferResult {
  std::vector<int> answer;
  int thinking_tokens = 0;  // always K: no explicit reasoning tokens exist
  bool truncated = false;   // end-of-answer never produced within budget
};

// Latent-mode inference: rollout, append <eot> and the answer prompt, then
// greedy-decode the answer until `eoa_token`.
CodiInferResult codi_infer(const ModelParams& params, const std::vector<int>& question,
                           int k_latents, int answer_prompt, int eoa_token, int max_answer);

}  // namespace codi
