#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hyb/corpus.hpp"
#include "hyb/model.hpp"
#include "hyb/tensor.hpp"

namespace hyb {

// Key-value probe: the context embeds pairs like "[K=vv]" (keys A-Z, values
// two lowercase letters) in filler drawn from digits and spaces, the query
// "?K=" names one embedded key, and the answer is that key's two-letter
// value. Values are distinct within a task and no other context character is
// lowercase, so the answer appears verbatim in the context exactly once.
struct RecallTask {
  std::string context;
  std::string query;
  std::string answer;
  bool is_short = false;  // context fits inside the attention window
};

struct RecallAccuracy {
  int64_t n_short = 0, n_long = 0;
  int64_t correct_short = 0, correct_long = 0;

  double short_acc() const { return static_cast<double>(correct_short) / n_short; }
  double long_acc() const { return static_cast<double>(correct_long) / n_long; }
  double all_acc() const {
    return static_cast<double>(correct_short + correct_long) / (n_short + n_long);
  }
};

// n_tasks independent contexts, each carrying n_pairs pairs and one query on
// a uniformly drawn pair. Pairs sit in the first half of the context (or the
// smallest prefix that holds them), so a window shorter than the context has
// no pair in sight at query time. Tasks are short when context_len <= window.
std::vector<RecallTask> gen_recall_suite(int64_t vocab, int64_t n_pairs, int64_t context_len,
                                         int64_t window, int64_t n_tasks, uint64_t seed);

// JSONL, one task per line; a fixed suite renders to fixed bytes.
std::string render_recall_suite(const std::vector<RecallTask>& suite);
std::vector<RecallTask> parse_recall_suite(const std::string& text);

// Context, query and answer concatenated, the form a model trains on.
std::string task_text(const RecallTask& task);

// Greedy decoding through any logits source: fn(token_seq) must return the
// next-token logits (size vocab) for the end of the sequence. Exact match on
// the whole answer scores a task.
template <typename LogitsFn>
RecallAccuracy eval_recall_with(LogitsFn&& next_logits, const std::vector<RecallTask>& suite) {
  if (suite.empty()) throw std::invalid_argument("eval_recall: empty suite");
  RecallAccuracy acc;
  for (const auto& task : suite) {
    std::vector<int32_t> seq = tokenize(task.context + task.query);
    const auto want = tokenize(task.answer);
    bool ok = true;
    for (size_t k = 0; k < want.size(); ++k) {
      const std::vector<double> logits = next_logits(seq);
      int32_t best = 0;
      for (size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[static_cast<size_t>(best)]) best = static_cast<int32_t>(i);
      if (best != want[k]) {
        ok = false;
        break;
      }
      seq.push_back(best);
    }
    (task.is_short ? acc.n_short : acc.n_long) += 1;
    if (ok) (task.is_short ? acc.correct_short : acc.correct_long) += 1;
  }
  return acc;
}

template <typename T>
RecallAccuracy eval_recall(const Model<T>& m, const std::vector<RecallTask>& suite) {
  return eval_recall_with(
      [&](const std::vector<int32_t>& seq) {
        Tensor<int32_t> x({1, static_cast<int64_t>(seq.size())});
        for (size_t i = 0; i < seq.size(); ++i) x.v[i] = seq[i];
        const auto logits = model_forward(m, x);
        const int64_t V = logits.dim(2);
        std::vector<double> last(static_cast<size_t>(V));
        const T* row = logits.data() + (logits.dim(1) - 1) * V;
        for (int64_t i = 0; i < V; ++i) last[static_cast<size_t>(i)] = static_cast<double>(row[i]);
        return last;
      },
      suite);
}

}  // namespace hyb
