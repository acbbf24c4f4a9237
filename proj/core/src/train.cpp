#include "hyb/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "hyb/loss.hpp"
#include "hyb/rng.hpp"

namespace hyb {

namespace {

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1 || cfg.seq_len < 1)
    throw std::invalid_argument("train: batch_size and seq_len must be >= 1");
  if (cfg.learning_rate < 0 || cfg.weight_decay < 0)
    throw std::invalid_argument("train: learning_rate and weight_decay must be >= 0");
  if ((cfg.steps > 0) == (cfg.epochs > 0))
    throw std::invalid_argument("train: set exactly one of steps, epochs");
  if (cfg.warmup_frac < 0 || cfg.warmup_frac > 1)
    throw std::invalid_argument("train: warmup_frac must be in [0,1]");
  if (cfg.log_every < 1) throw std::invalid_argument("train: log_every must be >= 1");
  if (cfg.precision != "f32")
    throw std::invalid_argument("train: precision must be f32 (checkpoint tensors are 32-bit)");
}

// Windows of seq_len+1 tokens at that stride; a trailing piece survives only
// if it still yields at least one scored target.
int64_t window_count(int64_t n_tokens, int64_t seq_len) {
  const int64_t stride = seq_len + 1;
  return n_tokens / stride + (n_tokens % stride >= 2 ? 1 : 0);
}

std::vector<int64_t> shuffled_indices(int64_t n, Rng& rng) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), int64_t{0});
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.uniform_int(i + 1))]);
  return idx;
}

void append_row(std::string& csv, int64_t step, double loss, double lr, int64_t tokens) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%lld\n", static_cast<long long>(step), loss,
                lr, static_cast<long long>(tokens));
  csv += buf;
}

}  // namespace

double lr_at(const TrainConfig& cfg, int64_t total_steps, int64_t step) {
  if (cfg.phase == TrainPhase::Continual) return cfg.learning_rate;
  const int64_t warmup = std::llround(cfg.warmup_frac * static_cast<double>(total_steps));
  if (warmup > 0 && step <= warmup)
    return cfg.learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  if (total_steps == warmup) return cfg.learning_rate;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

int64_t steps_per_epoch(int64_t n_tokens, const TrainConfig& cfg) {
  const int64_t n_seq = window_count(n_tokens, cfg.seq_len);
  if (n_seq == 0) throw std::invalid_argument("train: corpus too small for one window");
  return (n_seq + cfg.batch_size - 1) / cfg.batch_size;
}

TrainResult train(Model<float>& model, AdamWState<float>& opt,
                  const std::vector<int32_t>& tokens, const TrainConfig& cfg,
                  int64_t start_step, int64_t start_tokens, int64_t stop_step) {
  validate(cfg);
  const int64_t n_tokens = static_cast<int64_t>(tokens.size());
  const int64_t T = cfg.seq_len;
  const int64_t n_seq = window_count(n_tokens, T);
  if (n_seq == 0) throw std::invalid_argument("train: corpus too small for one window");
  const int64_t spe = (n_seq + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total = cfg.steps > 0 ? cfg.steps : cfg.epochs * spe;
  if (stop_step == 0) stop_step = total;
  if (start_step < 0 || start_step > total || stop_step < start_step || stop_step > total)
    throw std::invalid_argument("train: start_step or stop_step outside the run");
  for (int64_t i = 0; i < n_tokens; ++i)
    if (tokens[static_cast<size_t>(i)] < 0 || tokens[static_cast<size_t>(i)] >= model.dims.vocab)
      throw std::invalid_argument("train: token " +
                                  std::to_string(tokens[static_cast<size_t>(i)]) +
                                  " at position " + std::to_string(i) + " exceeds vocab");

  Rng rng(cfg.seed);
  std::vector<int64_t> order;
  int64_t cur_epoch = -1;

  TrainResult res;
  res.csv = "step,loss,lr,tokens\n";
  res.steps_done = start_step;
  res.tokens_seen = start_tokens;

  struct Snapshot {
    Model<float> model;
    AdamWState<float> opt;
    int64_t steps_done, tokens_seen;
  } good{model, opt, start_step, start_tokens};

  Model<float> grads = grad_shell(model);
  ModelCache<float> cache;

  for (int64_t step = 1; step <= stop_step; ++step) {
    const int64_t epoch = (step - 1) / spe;
    if (epoch != cur_epoch) {
      order = shuffled_indices(n_seq, rng);
      cur_epoch = epoch;
    }
    if (step <= start_step) continue;  // resume replays the shuffle draws only

    const int64_t b0 = ((step - 1) % spe) * cfg.batch_size;
    const int64_t b1 = std::min(b0 + cfg.batch_size, n_seq);
    const int64_t B = b1 - b0;
    Tensor<int32_t> x({B, T}), y({B, T});
    int64_t scored = 0;
    for (int64_t b = 0; b < B; ++b) {
      const int64_t base = order[static_cast<size_t>(b0 + b)] * (T + 1);
      const int64_t avail = std::min(T + 1, n_tokens - base);
      for (int64_t t = 0; t < T; ++t) {
        x.v[static_cast<size_t>(b * T + t)] = t < avail ? tokens[static_cast<size_t>(base + t)] : 0;
        if (t + 1 < avail) {
          y.v[static_cast<size_t>(b * T + t)] = tokens[static_cast<size_t>(base + t + 1)];
          ++scored;
        } else {
          y.v[static_cast<size_t>(b * T + t)] = kIgnoreTarget;
        }
      }
    }

    const double lr = lr_at(cfg, total, step);
    double loss;
    Tensor<float> dlogits;
    try {
      auto logits = model_forward(model, x, {}, nullptr, &cache);
      dlogits = Tensor<float>(logits.shape);
      loss = cross_entropy(logits, y, &dlogits);
    } catch (const std::invalid_argument&) {
      loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(loss)) {
      model = good.model;
      opt = good.opt;
      res.steps_done = good.steps_done;
      res.tokens_seen = good.tokens_seen;
      res.diverged = true;
      break;
    }
    good = {model, opt, step - 1, res.tokens_seen};

    try {
      grads.for_each_param([](const std::string&, Tensor<float>& t) { t.zero(); });
      model_backward(model, cache, dlogits, grads);
      opt.apply(model, grads, lr);
    } catch (const std::runtime_error&) {
      model = good.model;
      opt = good.opt;
      res.steps_done = good.steps_done;
      res.tokens_seen = good.tokens_seen;
      res.diverged = true;
      break;
    }

    res.steps_done = step;
    res.tokens_seen += scored;
    res.final_loss = loss;
    if (step % cfg.log_every == 0 || step == stop_step)
      append_row(res.csv, step, loss, lr, res.tokens_seen);
  }

  res.rng_state = rng.state();
  return res;
}

}  // namespace hyb
