#pragma once

#include <vector>

#include "codi/example.hpp"
#include "codi/tensor.hpp"
#include "codi/transformer.hpp"

namespace codi {

// Explicit CoT supervised fine-tuning objective: exactly the teacher loss
// (prompt-masked cross-entropy over cot + answer_prompt + answer).
Tensor sft_loss(Graph& g, const BoundParams& p, const Example& ex);

struct SftInferResult {
  std::vector<int> cot;
  std::vector<int> answer;
  int cot_length = 0;
  int emitted = 0;         // tokens consumed by the split (cot + prompt + answer)
  bool truncated = false;  // budget ran out before the answer terminated
};

// Greedy decode from the question until the end-of-answer token or
// `max_total` emitted tokens. Output splits at the first answer_prompt:
// tokens before it are the explicit CoT, tokens after it the answer. If
// the prompt never appears, every emitted token counts as CoT and the
// answer is empty.
SftInferResult sft_infer(const ModelParams& params, const std::vector<int>& question,
                         int answer_prompt, int eoa_token, int max_total);

}  // namespace codi
