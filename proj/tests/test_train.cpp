#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "hyb/checkpoint.hpp"
#include "hyb/corpus.hpp"
#include "hyb/io.hpp"
#include "hyb/train.hpp"
#include "support/testutil.hpp"

using namespace hyb;

namespace {

Model<float> tiny_model(uint64_t seed = 1) {
  ModelDims dims;
  dims.d = 8;
  dims.n = 4;
  dims.heads = 2;
  dims.window = 4;
  dims.blocks = 1;
  return build_model<float>("MSF", dims, seed);
}

// motif repeated to fill one training window, so next-token is predictable;
// alphabet drives how much falls to plain unigram statistics
std::vector<int32_t> copy_corpus(int64_t n_seq, int64_t seq_len, uint64_t seed,
                                 int32_t alphabet = 256) {
  Rng rng(seed);
  std::vector<int32_t> tokens;
  tokens.reserve(static_cast<size_t>(n_seq * (seq_len + 1)));
  for (int64_t s = 0; s < n_seq; ++s) {
    std::vector<int32_t> motif(8);
    for (auto& b : motif) b = static_cast<int32_t>(rng.uniform_int(alphabet));
    for (int64_t i = 0; i < seq_len + 1; ++i)
      tokens.push_back(motif[static_cast<size_t>(i % 8)]);
  }
  return tokens;
}

std::vector<double> csv_losses(const std::string& csv) {
  std::vector<double> out;
  size_t pos = csv.find('\n') + 1;  // skip header
  while (pos < csv.size()) {
    const size_t c1 = csv.find(',', pos);
    const size_t c2 = csv.find(',', c1 + 1);
    out.push_back(std::stod(csv.substr(c1 + 1, c2 - c1 - 1)));
    pos = csv.find('\n', pos) + 1;
  }
  return out;
}

}  // namespace

TEST_CASE("byte tokenizer round-trips any byte string") {
  std::string text;
  for (int i = 0; i < 256; ++i) text.push_back(static_cast<char>(i));
  auto tokens = tokenize(text);
  REQUIRE(tokens.size() == 256);
  CHECK(tokens[0] == 0);
  CHECK(tokens[255] == 255);
  CHECK(detokenize(tokens) == text);
  CHECK_THROWS_AS(detokenize(std::vector<int32_t>{256}), std::invalid_argument);
  CHECK_THROWS_AS(detokenize(std::vector<int32_t>{-1}), std::invalid_argument);
}

TEST_CASE("corpus loads documents sorted by filename") {
  auto dir = std::filesystem::temp_directory_path() / "hyb_corpus_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "b.txt", "second");
  write_file(dir / "a.txt", "first");
  write_file(dir / "c.txt", "third");

  auto corpus = load_corpus_dir(dir);
  REQUIRE(corpus.docs.size() == 3);
  CHECK(corpus.docs[0].name == "a.txt");
  CHECK(corpus.docs[1].name == "b.txt");
  CHECK(corpus.docs[2].name == "c.txt");
  CHECK(corpus.total_bytes() == 16);
  CHECK(detokenize(corpus_tokens(corpus)) == "firstsecondthird");

  CHECK_THROWS_AS(load_corpus_dir(dir / "missing"), std::runtime_error);
}

TEST_CASE("lr schedule warms up linearly then decays on a cosine to zero") {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.warmup_frac = 0.1;
  cfg.steps = 100;
  // warmup covers steps 1..10
  CHECK(lr_at(cfg, 100, 1) == doctest::Approx(1e-4));
  CHECK(lr_at(cfg, 100, 5) == doctest::Approx(5e-4));
  CHECK(lr_at(cfg, 100, 10) == doctest::Approx(1e-3));
  // cosine midpoint and endpoint
  CHECK(lr_at(cfg, 100, 55) == doctest::Approx(5e-4));
  CHECK(lr_at(cfg, 100, 100) < 1e-15);
  for (int64_t s = 11; s < 100; ++s) CHECK(lr_at(cfg, 100, s) > lr_at(cfg, 100, s + 1));

  cfg.phase = TrainPhase::Continual;
  CHECK(lr_at(cfg, 100, 1) == 1e-3);
  CHECK(lr_at(cfg, 100, 100) == 1e-3);
}

TEST_CASE("identical config, seed and corpus fix the metrics CSV bytes") {
  auto tokens = copy_corpus(12, 16, 5);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.seq_len = 16;
  cfg.steps = 9;
  cfg.seed = 2;
  cfg.log_every = 1;
  cfg.learning_rate = 1e-3;

  auto m1 = tiny_model(7);
  AdamWState<float> o1;
  o1.init(m1, AdamWConfig{.lr = cfg.learning_rate, .weight_decay = cfg.weight_decay});
  auto r1 = train(m1, o1, tokens, cfg);

  auto m2 = tiny_model(7);
  AdamWState<float> o2;
  o2.init(m2, AdamWConfig{.lr = cfg.learning_rate, .weight_decay = cfg.weight_decay});
  auto r2 = train(m2, o2, tokens, cfg);

  CHECK(r1.csv == r2.csv);
  CHECK(r1.rng_state == r2.rng_state);
  CHECK(r1.tokens_seen == r2.tokens_seen);
  CHECK(testutil::params_bitwise_equal(m1, m2));
}

TEST_CASE("zero learning rate leaves parameters untouched and loss flat") {
  // one window only, so every step sees the identical batch
  auto tokens = copy_corpus(1, 16, 9);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.seq_len = 16;
  cfg.steps = 5;
  cfg.learning_rate = 0.0;
  cfg.weight_decay = 0.3;
  cfg.log_every = 1;

  auto m = tiny_model(3);
  const auto before = m;
  AdamWState<float> opt;
  opt.init(m, AdamWConfig{.lr = 0.0, .weight_decay = 0.3});
  auto res = train(m, opt, tokens, cfg);

  CHECK(testutil::params_bitwise_equal(m, before));
  auto losses = csv_losses(res.csv);
  REQUIRE(losses.size() == 5);
  for (double l : losses) CHECK(l == losses[0]);
}

TEST_CASE("copy-task training loss strictly decreases for 50 full-batch steps") {
  // all 200 sequences in every batch, so each step descends the same loss
  auto tokens = copy_corpus(200, 32, 17, 16);
  for (uint64_t seed : {1u, 2u, 3u}) {
    ModelDims dims;
    dims.d = 64;
    dims.n = 16;
    dims.heads = 4;
    dims.window = 16;
    dims.blocks = 2;
    auto m = build_model<float>("MFSF", dims, seed);
    TrainConfig cfg;
    cfg.batch_size = 200;
    cfg.seq_len = 32;
    cfg.steps = 50;
    cfg.seed = seed;
    cfg.log_every = 1;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 0.0;
    AdamWState<float> opt;
    opt.init(m, AdamWConfig{.lr = cfg.learning_rate, .weight_decay = 0.0});
    auto res = train(m, opt, tokens, cfg);
    auto losses = csv_losses(res.csv);
    REQUIRE(losses.size() == 50);
    for (size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
    CHECK(losses.back() < 3.5);
  }
}

TEST_CASE("resume from checkpoint matches an unbroken run bitwise") {
  auto tokens = copy_corpus(10, 16, 23);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.seq_len = 16;
  cfg.steps = 14;
  cfg.seed = 4;
  cfg.log_every = 1;
  cfg.learning_rate = 2e-3;

  const AdamWConfig ocfg{.lr = cfg.learning_rate, .weight_decay = cfg.weight_decay};

  auto m_full = tiny_model(5);
  AdamWState<float> o_full;
  o_full.init(m_full, ocfg);
  auto r_full = train(m_full, o_full, tokens, cfg);

  // run 7 steps of the same 14-step schedule, checkpoint through disk, resume
  auto m_a = tiny_model(5);
  AdamWState<float> o_a;
  o_a.init(m_a, ocfg);
  auto r_a = train(m_a, o_a, tokens, cfg, 0, 0, 7);

  auto p = std::filesystem::temp_directory_path() / "hyb_resume.ckpt";
  save_checkpoint(p, m_a, &o_a,
                  CheckpointMeta{.step = r_a.steps_done, .tokens_seen = r_a.tokens_seen,
                                 .seed = cfg.seed, .rng_state = r_a.rng_state});
  auto loaded = load_checkpoint(p);
  REQUIRE(loaded.has_optimizer);
  auto r_b = train(loaded.model, loaded.opt, tokens, cfg, loaded.meta.step,
                   loaded.meta.tokens_seen);

  CHECK(testutil::params_bitwise_equal(m_full, loaded.model));
  CHECK(r_b.rng_state == r_full.rng_state);
  CHECK(r_b.tokens_seen == r_full.tokens_seen);

  // resumed CSV rows equal the tail of the unbroken run's rows
  const auto tail_at = [&](const std::string& csv, int64_t from_step) {
    size_t pos = csv.find('\n') + 1;
    while (pos < csv.size() && std::stoll(csv.substr(pos)) <= from_step)
      pos = csv.find('\n', pos) + 1;
    return csv.substr(pos);
  };
  CHECK(tail_at(r_full.csv, 7) == tail_at(r_b.csv, 7));
  CHECK(tail_at(r_b.csv, 0) == tail_at(r_b.csv, 7));  // no rows before step 8
}

TEST_CASE("divergence halts and hands back the last good state") {
  auto tokens = copy_corpus(6, 16, 31);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.seq_len = 16;
  cfg.steps = 40;
  cfg.learning_rate = 1e30;  // attention scores overflow float on the next pass
  cfg.log_every = 1;

  auto m = tiny_model(9);
  AdamWState<float> opt;
  opt.init(m, AdamWConfig{.lr = cfg.learning_rate});
  auto res = train(m, opt, tokens, cfg);

  CHECK(res.diverged);
  CHECK(res.steps_done < 40);
  bool finite = true;
  m.for_each_param([&](const std::string&, const Tensor<float>& t) {
    if (!all_finite(t)) finite = false;
  });
  CHECK(finite);

  // the restored state still trains at a sane lr
  TrainConfig gentle = cfg;
  gentle.learning_rate = 1e-4;
  gentle.steps = res.steps_done + 2;
  AdamWState<float> opt2;
  opt2.init(m, AdamWConfig{.lr = gentle.learning_rate});
  auto res2 = train(m, opt2, tokens, gentle, res.steps_done, res.tokens_seen);
  CHECK_FALSE(res2.diverged);
}

TEST_CASE("a trailing short window pads its targets as ignored") {
  // 16-token window plus a 3-token tail: 2 windows, 16+2 scored targets
  auto tokens = copy_corpus(1, 16, 2);  // 17 tokens
  tokens.push_back(65);
  tokens.push_back(66);
  tokens.push_back(67);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.seq_len = 16;
  cfg.steps = 1;
  cfg.log_every = 1;

  auto m = tiny_model(13);
  AdamWState<float> opt;
  opt.init(m, AdamWConfig{});
  auto res = train(m, opt, tokens, cfg);
  CHECK(res.tokens_seen == 18);
  CHECK(steps_per_epoch(static_cast<int64_t>(tokens.size()), cfg) == 1);
}

TEST_CASE("config validation rejects inconsistent settings") {
  auto tokens = copy_corpus(2, 8, 1);
  auto m = tiny_model();
  AdamWState<float> opt;
  opt.init(m, AdamWConfig{});

  TrainConfig cfg;
  cfg.seq_len = 8;
  SUBCASE("steps and epochs both set") {
    cfg.steps = 5;
    cfg.epochs = 2;
    CHECK_THROWS_WITH_AS(train(m, opt, tokens, cfg), doctest::Contains("exactly one"),
                         std::invalid_argument);
  }
  SUBCASE("neither steps nor epochs") {
    CHECK_THROWS_AS(train(m, opt, tokens, cfg), std::invalid_argument);
  }
  SUBCASE("unsupported precision") {
    cfg.steps = 1;
    cfg.precision = "f64";
    CHECK_THROWS_WITH_AS(train(m, opt, tokens, cfg), doctest::Contains("f32"),
                         std::invalid_argument);
  }
  SUBCASE("start_step beyond the run") {
    cfg.steps = 3;
    CHECK_THROWS_AS(train(m, opt, tokens, cfg, 4, 0), std::invalid_argument);
  }
  SUBCASE("token outside the model vocab") {
    cfg.steps = 1;
    ModelDims dims;
    dims.d = 8;
    dims.n = 4;
    dims.vocab = 100;
    auto small_vocab = build_model<float>("MF", dims, 1);
    AdamWState<float> o2;
    o2.init(small_vocab, AdamWConfig{});
    std::vector<int32_t> bad(20, 255);
    CHECK_THROWS_WITH_AS(train(small_vocab, o2, bad, cfg), doctest::Contains("vocab"),
                         std::invalid_argument);
  }
  SUBCASE("epochs drive the step count") {
    cfg.epochs = 3;
    cfg.batch_size = 1;
    // 2 windows of 9 tokens, batch 1: 2 steps per epoch
    auto res = train(m, opt, tokens, cfg);
    CHECK(res.steps_done == 6);
  }
}
