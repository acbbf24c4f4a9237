#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hyb/model.hpp"
#include "hyb/optim.hpp"

namespace hyb {

enum class TrainPhase { Pretrain, Continual };

struct TrainConfig {
  int64_t batch_size = 8;
  int64_t seq_len = 256;
  double learning_rate = 4e-4;
  double weight_decay = 0.1;
  int64_t steps = 0;   // exactly one of steps, epochs must be positive
  int64_t epochs = 0;
  double warmup_frac = 0.02;  // pretrain only; continual runs at constant lr
  uint64_t seed = 0;
  std::string precision = "f32";
  TrainPhase phase = TrainPhase::Pretrain;
  int64_t log_every = 10;
};

struct TrainResult {
  int64_t steps_done = 0;
  int64_t tokens_seen = 0;  // scored target positions, cumulative
  double final_loss = 0.0;
  bool diverged = false;
  std::string csv;        // "step,loss,lr,tokens" header plus logged rows
  std::string rng_state;  // batching RNG after the last completed step
};

// Linear warmup over warmup_frac of the run, then cosine decay to zero.
// `step` is 1-based. Continual phase ignores the schedule entirely.
double lr_at(const TrainConfig& cfg, int64_t total_steps, int64_t step);

// Number of optimizer steps in one pass over the token stream.
int64_t steps_per_epoch(int64_t n_tokens, const TrainConfig& cfg);

// Runs steps start_step+1 .. stop_step (0 means the full run) on
// non-overlapping windows of seq_len+1 tokens (inputs and shifted targets;
// the final short window pads its missing targets as ignored). The lr
// schedule always spans the full run, so a stopped and resumed run walks the
// same curve. Window order reshuffles every epoch from a generator seeded
// with cfg.seed, and a resumed run replays the same draws, so (config, seed,
// corpus) fixes the metrics CSV byte for byte. A non-finite loss or a
// rejected optimizer step halts training and restores the last state whose
// loss was finite.
TrainResult train(Model<float>& model, AdamWState<float>& opt,
                  const std::vector<int32_t>& tokens, const TrainConfig& cfg,
                  int64_t start_step = 0, int64_t start_tokens = 0, int64_t stop_step = 0);

}  // namespace hyb
