#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace codi {

// One question/CoT/answer triple. The teacher stream is
// question + cot + answer_prompt + answer; the student stream replaces the
// cot tokens with latent thoughts between the <bot>/<eot> markers. The
// answer token sequence ends with the end-of-answer marker so decoders
// learn to terminate.
struct Example {
  int64_t id = -1;
  int64_t source_problem_id = -1;
  std::string language;
  std::string split;  // "train" | "test"
  std::vector<int> question;
  std::vector<int> cot;
  std::vector<int> answer;
  int answer_prompt = -1;

  // Set by strip_final_cot_sentence when the cot had a single step.
  bool cot_stripped_empty = false;

  std::vector<int> teacher_stream() const {
    std::vector<int> s = question;
    s.insert(s.end(), cot.begin(), cot.end());
    s.push_back(answer_prompt);
    s.insert(s.end(), answer.begin(), answer.end());
    return s;
  }

  void validate() const;
};

}  // namespace codi
