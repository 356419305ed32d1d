#include "codi/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace codi {

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw std::invalid_argument("loss weights must be nonnegative");
  }
  if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) {
    throw std::invalid_argument("loss weights must not all be zero");
  }
}

void Example::validate() const {
  if (question.empty()) throw std::invalid_argument("example: empty question");
  if (answer.empty()) throw std::invalid_argument("example: empty answer");
  if (answer_prompt < 0) throw std::invalid_argument("example: missing answer prompt token");
}

LatentState latent_rollout(Graph& g, const BoundParams& p, const std::vector<int>& question,
                           int k_latents) {
  if (question.empty()) throw std::invalid_argument("latent_rollout: empty question");
  if (k_latents < 1) throw std::invalid_argument("latent_rollout: k_latents must be >= 1");
  const int q = static_cast<int>(question.size());
  if (q + k_latents + 2 > p.config.max_seq_len) {
    throw std::invalid_argument("latent_rollout: question + latents exceed max_seq_len");
  }

  LatentState state(p.config.n_layers);
  state.question_len = q;

  Tensor prefix = g.concat({embed_tokens(g, p, question, 0), add_positions(g, p, p.bot_embed, q)}, 0);
  ForwardOutput out = transformer_forward(g, p, prefix, &state.cache);
  state.forward_count = 1;

  auto project = [&](const ForwardOutput& o) {
    Tensor h = g.slice(o.hidden.back(), 0, o.hidden.back().rows() - 1, o.hidden.back().rows());
    return g.matmul(g.silu(g.matmul(h, p.proj_in)), p.proj_out);
  };

  for (int k = 0; k < k_latents; ++k) {
    Tensor z = project(out);
    state.z.push_back(z);
    // every thought enters the stream; the final forward only fills the cache
    out = transformer_forward(g, p, add_positions(g, p, z, state.cache.len), &state.cache);
    ++state.forward_count;
  }
  return state;
}

namespace {

HiddenCapture capture_at(Graph& g, const std::vector<Tensor>& hidden, int row, int absolute_pos) {
  HiddenCapture cap;
  cap.position = absolute_pos;
  cap.layers.reserve(hidden.size());
  for (const Tensor& h : hidden) cap.layers.push_back(g.slice(h, 0, row, row + 1));
  return cap;
}

}  // namespace

std::pair<Tensor, HiddenCapture> teacher_loss(Graph& g, const BoundParams& p, const Example& ex) {
  ex.validate();
  const std::vector<int> stream = ex.teacher_stream();
  const int t = static_cast<int>(stream.size());
  if (t > p.config.max_seq_len) {
    throw std::invalid_argument("teacher_loss: stream length " + std::to_string(t) +
                                " exceeds max_seq_len");
  }
  const int q = static_cast<int>(ex.question.size());

  ForwardOutput out = transformer_forward(g, p, embed_tokens(g, p, stream, 0), nullptr);

  // next-token targets; positions whose target falls inside the question
  // are masked out, so the loss covers cot + answer_prompt + answer.
  std::vector<int> targets(static_cast<size_t>(t), 0);
  std::vector<uint8_t> mask(static_cast<size_t>(t), 0);
  for (int i = 0; i + 1 < t; ++i) {
    targets[static_cast<size_t>(i)] = stream[static_cast<size_t>(i + 1)];
    mask[static_cast<size_t>(i)] = (i + 1 >= q) ? 1 : 0;
  }
  Tensor loss = g.cross_entropy(out.logits, targets, mask);

  const int prompt_pos = q + static_cast<int>(ex.cot.size());
  return {loss, capture_at(g, out.hidden, prompt_pos, prompt_pos)};
}

std::pair<Tensor, HiddenCapture> student_loss(Graph& g, const BoundParams& p, const Example& ex,
                                              LatentState& state) {
  ex.validate();
  if (state.question_len != static_cast<int>(ex.question.size())) {
    throw std::invalid_argument("student_loss: rollout does not match example question");
  }
  const int m = static_cast<int>(ex.answer.size());
  const int start = state.cache.len;  // |Q| + 1 + K
  if (start + 2 + m > p.config.max_seq_len) {
    throw std::invalid_argument("student_loss: stream exceeds max_seq_len");
  }

  std::vector<int> tail = {ex.answer_prompt};
  tail.insert(tail.end(), ex.answer.begin(), ex.answer.end());
  Tensor rows = g.concat({add_positions(g, p, p.eot_embed, start), embed_tokens(g, p, tail, start + 1)}, 0);
  ForwardOutput out = transformer_forward(g, p, rows, &state.cache);

  // rows: eot, answer_prompt, y_1..y_m; targets exist for the answer only
  const int s = 2 + m;
  std::vector<int> targets(static_cast<size_t>(s), 0);
  std::vector<uint8_t> mask(static_cast<size_t>(s), 0);
  for (int i = 0; i < m; ++i) {
    targets[static_cast<size_t>(i + 1)] = ex.answer[static_cast<size_t>(i)];
    mask[static_cast<size_t>(i + 1)] = 1;
  }
  Tensor loss = g.cross_entropy(out.logits, targets, mask);

  const int prompt_pos = start + 1;  // |Q| + 1 + K + 1
  return {loss, capture_at(g, out.hidden, 1, prompt_pos)};
}

Tensor kd_loss(Graph& g, const HiddenCapture& teacher, const HiddenCapture& student,
               bool normalize) {
  if (teacher.layers.size() != student.layers.size()) {
    throw std::invalid_argument("kd_loss: layer count mismatch");
  }
  if (teacher.layers.empty()) throw std::invalid_argument("kd_loss: empty captures");
  Tensor total;
  for (size_t l = 0; l < teacher.layers.size(); ++l) {
    if (teacher.layers[l].shape() != student.layers[l].shape()) {
      throw std::invalid_argument("kd_loss: width mismatch at layer " + std::to_string(l));
    }
    Tensor term = g.l1_mean(g.stop_gradient(teacher.layers[l]), student.layers[l]);
    if (normalize) {
      const std::vector<double>& tv = teacher.layers[l].values();
      double mean = 0.0;
      for (double v : tv) mean += v;
      mean /= static_cast<double>(tv.size());
      double var = 0.0;
      for (double v : tv) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(tv.size()));
      term = g.scale(term, 1.0 / (sd + 1e-6));
    }
    total = l == 0 ? term : g.add(total, term);
  }
  return g.scale(total, 1.0 / static_cast<double>(teacher.layers.size()));
}

CodiStepResult codi_step(Graph& g, const BoundParams& p, const Example& ex,
                         const LossWeights& weights) {
  weights.validate();
  auto [t_loss, t_cap] = teacher_loss(g, p, ex);
  LatentState state = latent_rollout(g, p, ex.question, p.config.n_latents);
  auto [s_loss, s_cap] = student_loss(g, p, ex, state);
  Tensor kd = kd_loss(g, t_cap, s_cap, weights.normalize_kd);

  CodiStepResult r;
  r.teacher_value = t_loss.item();
  r.student_value = s_loss.item();
  r.kd_value = kd.item();
  r.total = g.add(g.add(g.scale(s_loss, weights.alpha), g.scale(kd, weights.beta)),
                  g.scale(t_loss, weights.gamma));
  return r;
}

CodiInferResult codi_infer(const ModelParams& params, const std::vector<int>& question,
                           int k_latents, int answer_prompt, int eoa_token, int max_answer) {
  if (max_answer < 1) throw std::invalid_argument("codi_infer: max_answer must be >= 1");
  Graph g;
  BoundParams p = BoundParams::bind(g, params, false);
  LatentState state = latent_rollout(g, p, question, k_latents);
  const int start = state.cache.len;
  Tensor rows = g.concat(
      {add_positions(g, p, p.eot_embed, start), embed_tokens(g, p, {answer_prompt}, start + 1)}, 0);
  GreedyResult decoded = decode_greedy(g, p, state.cache, rows, eoa_token, max_answer);

  CodiInferResult r;
  r.answer = std::move(decoded.tokens);
  r.thinking_tokens = k_latents;
  r.truncated = !decoded.stopped;
  return r;
}

}  // namespace codi
