#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hyb/model.hpp"
#include "hyb/optim.hpp"

namespace hyb {

// Checkpoint container, all integers little-endian:
//   bytes 0..7    magic "HYBCKPT1"
//   bytes 8..15   uint64 JSON header length H
//   bytes 16..    H bytes of UTF-8 JSON
//   then          tensor payload: f32 little-endian values, packed in
//                 directory order with no gaps
// The JSON header holds format_version, arch (canonical block spec), dims,
// step, tokens_seen, seed, the RNG state string, optimizer hyperparameters
// (null when absent) and a tensor directory of {name, shape, offset, count}
// with offsets counted in bytes from the start of the payload. Model tensors
// come first in parameter registry order, then adam.m.* and adam.v.* moments
// in the same order.
struct CheckpointMeta {
  int64_t step = 0;
  int64_t tokens_seen = 0;
  uint64_t seed = 0;
  std::string rng_state;
};

struct LoadedCheckpoint {
  Model<float> model;
  bool has_optimizer = false;
  AdamWState<float> opt;
  CheckpointMeta meta;
};

// opt may be null for a model-only checkpoint.
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const AdamWState<float>* opt, const CheckpointMeta& meta);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hyb
