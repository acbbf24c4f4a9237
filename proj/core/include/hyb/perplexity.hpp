#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hyb/loss.hpp"
#include "hyb/model.hpp"

namespace hyb {

// exp of the mean next-token NLL over consecutive non-overlapping windows of
// exactly seq_len tokens, evaluated one window at a time in corpus order.
// Targets shift by one across the whole stream, so each transition is scored
// once; only the final position of the last window has nothing to predict.
// Tokens past the last full window are dropped. seq_len may exceed the
// length the model was trained at.
template <typename T>
double perplexity(const Model<T>& m, const std::vector<int32_t>& tokens, int64_t seq_len) {
  if (seq_len < 1) throw std::invalid_argument("perplexity: seq_len must be >= 1");
  const int64_t n = static_cast<int64_t>(tokens.size());
  if (n == 0) throw std::invalid_argument("perplexity: empty corpus");
  if (n < seq_len) throw std::invalid_argument("perplexity: corpus shorter than seq_len");

  const int64_t n_win = n / seq_len;
  double nll_sum = 0.0;
  int64_t scored_total = 0;
  for (int64_t w = 0; w < n_win; ++w) {
    const int64_t base = w * seq_len;
    Tensor<int32_t> x({1, seq_len}), y({1, seq_len});
    int64_t scored = 0;
    for (int64_t t = 0; t < seq_len; ++t) {
      x.v[static_cast<size_t>(t)] = tokens[static_cast<size_t>(base + t)];
      if (base + t + 1 < n) {
        y.v[static_cast<size_t>(t)] = tokens[static_cast<size_t>(base + t + 1)];
        ++scored;
      } else {
        y.v[static_cast<size_t>(t)] = kIgnoreTarget;
      }
    }
    if (scored == 0) continue;  // seq_len 1 leaves the last window empty
    auto logits = model_forward(m, x);
    nll_sum += cross_entropy(logits, y) * static_cast<double>(scored);
    scored_total += scored;
  }
  if (scored_total == 0) throw std::invalid_argument("perplexity: nothing to score");
  return std::exp(nll_sum / static_cast<double>(scored_total));
}

}  // namespace hyb
