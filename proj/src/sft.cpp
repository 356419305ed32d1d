#include "codi/sft.hpp"

#include <stdexcept>

#include "codi/objective.hpp"

namespace codi {

Tensor sft_loss(Graph& g, const BoundParams& p, const Example& ex) {
  return teacher_loss(g, p, ex).first;
}

SftInferResult sft_infer(const ModelParams& params, const std::vector<int>& question,
                         int answer_prompt, int eoa_token, int max_total) {
  if (question.empty()) throw std::invalid_argument("sft_infer: empty question");
  if (max_total < 1) throw std::invalid_argument("sft_infer: max_total must be >= 1");
  if (static_cast<int>(question.size()) + max_total > params.config.max_seq_len) {
    throw std::invalid_argument("sft_infer: budget exceeds max_seq_len");
  }

  Graph g;
  BoundParams p = BoundParams::bind(g, params, false);
  KVCache cache(params.config.n_layers);
  GreedyResult decoded =
      decode_greedy(g, p, cache, embed_tokens(g, p, question, 0), eoa_token, max_total);

  SftInferResult r;
  bool in_answer = false;
  for (int tok : decoded.tokens) {
    if (!in_answer) {
      ++r.emitted;
      if (tok == answer_prompt) {
        in_answer = true;
      } else {
        r.cot.push_back(tok);
      }
    } else {
      if (tok == answer_prompt) break;  // degenerate second prompt ends the answer
      ++r.emitted;
      r.answer.push_back(tok);
    }
  }
  r.cot_length = static_cast<int>(r.cot.size());
  r.truncated = !decoded.stopped;
  return r;
}

}  // namespace codi
