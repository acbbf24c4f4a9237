#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

#include "doctest.h"
#include "hyb/model.hpp"
#include "hyb/recall.hpp"
#include "support/testutil.hpp"

using namespace hyb;

namespace {

int count_occurrences(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (size_t at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("recall suite generation is deterministic and round-trips") {
  const auto a = gen_recall_suite(256, 4, 96, 32, 20, 7);
  const auto b = gen_recall_suite(256, 4, 96, 32, 20, 7);
  const std::string ra = render_recall_suite(a), rb = render_recall_suite(b);
  CHECK(ra == rb);
  CHECK(render_recall_suite(gen_recall_suite(256, 4, 96, 32, 20, 8)) != ra);

  const auto parsed = parse_recall_suite(ra);
  REQUIRE(parsed.size() == a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(parsed[i].context == a[i].context);
    CHECK(parsed[i].query == a[i].query);
    CHECK(parsed[i].answer == a[i].answer);
    CHECK(parsed[i].is_short == a[i].is_short);
  }
  CHECK(render_recall_suite(parsed) == ra);
}

TEST_CASE("recall tasks keep their structural guarantees") {
  for (uint64_t seed : {1u, 2u, 3u, 4u}) {
    const int64_t n_pairs = 5, context_len = 120, window = 64;
    const auto suite = gen_recall_suite(256, n_pairs, context_len, window, 25, seed);
    REQUIRE(suite.size() == 25);
    const int64_t region = std::max(context_len / 2, n_pairs * 6);
    for (const auto& task : suite) {
      CHECK(static_cast<int64_t>(task.context.size()) == context_len);
      REQUIRE(task.query.size() == 3);
      CHECK(task.query[0] == '?');
      CHECK(task.query[2] == '=');
      REQUIRE(task.answer.size() == 2);
      CHECK(std::islower(static_cast<unsigned char>(task.answer[0])));
      CHECK(std::islower(static_cast<unsigned char>(task.answer[1])));

      // The queried key is embedded and its value is the answer.
      const std::string slot = std::string("[") + task.query[1] + "=" + task.answer + "]";
      CHECK(count_occurrences(task.context, slot) == 1);

      // The answer bigram occurs nowhere else: values are distinct and the
      // filler alphabet has no lowercase.
      CHECK(count_occurrences(task.context, task.answer) == 1);

      // All pairs sit in the leading region, out of a trailing window's view.
      CHECK(task.context.find_last_of('[') < static_cast<size_t>(region));
      int pairs_seen = 0;
      for (char c : task.context)
        if (c == '[') ++pairs_seen;
      CHECK(pairs_seen == n_pairs);

      CHECK(task.is_short == (context_len <= window));
    }
  }
  CHECK(gen_recall_suite(256, 2, 24, 32, 5, 1)[0].is_short);
  CHECK_FALSE(gen_recall_suite(256, 2, 48, 32, 5, 1)[0].is_short);
}

TEST_CASE("recall suite with exactly fitting pairs has no filler") {
  const auto suite = gen_recall_suite(256, 1, 6, 32, 3, 11);
  for (const auto& task : suite) {
    REQUIRE(task.context.size() == 6);
    CHECK(task.context[0] == '[');
    CHECK(task.context[2] == '=');
    CHECK(task.context[5] == ']');
    CHECK(task.context.substr(3, 2) == task.answer);
    CHECK(task.query[1] == task.context[1]);
  }
}

TEST_CASE("recall suite generation rejects bad shapes") {
  CHECK_THROWS_WITH_AS(gen_recall_suite(256, 5, 24, 32, 5, 1),
                       "gen_recall_suite: pairs do not fit in context_len", std::invalid_argument);
  CHECK_THROWS_WITH_AS(gen_recall_suite(256, 0, 96, 32, 5, 1),
                       "gen_recall_suite: n_pairs must be in [1, 26]", std::invalid_argument);
  CHECK_THROWS_WITH_AS(gen_recall_suite(256, 27, 640, 32, 5, 1),
                       "gen_recall_suite: n_pairs must be in [1, 26]", std::invalid_argument);
  CHECK_THROWS_WITH_AS(gen_recall_suite(64, 4, 96, 32, 5, 1),
                       "gen_recall_suite: vocab must cover ASCII", std::invalid_argument);
  CHECK_THROWS_WITH_AS(gen_recall_suite(256, 4, 96, 32, 0, 1),
                       "gen_recall_suite: n_tasks must be >= 1", std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_recall_suite("{\"context\":\"x\"}\n"),
                       "parse_recall_suite: missing field", std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_recall_suite("not json\n"), "parse_recall_suite: malformed JSON line",
                       std::invalid_argument);
}

TEST_CASE("task_text concatenates the teaching form") {
  RecallTask t;
  t.context = "12 [A=qx] 9";
  t.query = "?A=";
  t.answer = "qx";
  CHECK(task_text(t) == "12 [A=qx] 9?A=qx");
}

TEST_CASE("an oracle that reads the task scores 100 percent") {
  const auto s_short = gen_recall_suite(256, 3, 24, 32, 30, 5);
  const auto s_long = gen_recall_suite(256, 3, 64, 32, 30, 6);
  std::vector<RecallTask> suite = s_short;
  suite.insert(suite.end(), s_long.begin(), s_long.end());

  auto oracle = [&](const std::vector<int32_t>& seq) {
    const std::string sofar = detokenize(seq);
    std::vector<double> logits(256, 0.0);
    for (const auto& task : suite) {
      const std::string prefix = task.context + task.query;
      if (sofar.size() >= prefix.size() && sofar.compare(0, prefix.size(), prefix) == 0) {
        const size_t k = sofar.size() - prefix.size();
        logits[static_cast<unsigned char>(task.answer[k])] = 1.0;
        return logits;
      }
    }
    return logits;
  };

  const auto acc = eval_recall_with(oracle, suite);
  CHECK(acc.n_short == 30);
  CHECK(acc.n_long == 30);
  CHECK(acc.correct_short == 30);
  CHECK(acc.correct_long == 30);
  CHECK(acc.short_acc() == 1.0);
  CHECK(acc.long_acc() == 1.0);
  CHECK(acc.all_acc() == 1.0);
}

TEST_CASE("accuracy pools classes by task count") {
  std::vector<RecallTask> suite;
  for (int i = 0; i < 4; ++i) {
    RecallTask t;
    t.context = "[A=aa]";
    t.query = "?A=";
    t.answer = i == 0 ? "aa" : "zz";  // only the first is answerable
    t.is_short = i < 3;
    suite.push_back(t);
  }
  auto constant_aa = [](const std::vector<int32_t>&) {
    std::vector<double> logits(256, 0.0);
    logits[static_cast<unsigned char>('a')] = 1.0;
    return logits;
  };
  const auto acc = eval_recall_with(constant_aa, suite);
  CHECK(acc.n_short == 3);
  CHECK(acc.n_long == 1);
  CHECK(acc.correct_short == 1);
  CHECK(acc.correct_long == 0);
  CHECK(acc.short_acc() == doctest::Approx(1.0 / 3));
  CHECK(acc.long_acc() == 0.0);
  CHECK(acc.all_acc() == doctest::Approx(0.25));
  CHECK(acc.all_acc() ==
        doctest::Approx((acc.short_acc() * acc.n_short + acc.long_acc() * acc.n_long) /
                        (acc.n_short + acc.n_long)));

  CHECK_THROWS_WITH_AS(eval_recall_with(constant_aa, {}), "eval_recall: empty suite",
                       std::invalid_argument);
}

TEST_CASE("an untrained model recalls at chance level") {
  ModelDims dims;
  dims.vocab = 256;
  dims.d = 16;
  dims.n = 4;
  dims.heads = 2;
  dims.window = 16;
  dims.blocks = 1;
  const auto m = build_model<float>("MSF", dims, 33);
  const auto suite = gen_recall_suite(256, 2, 24, 16, 120, 9);
  const auto acc = eval_recall(m, suite);
  CHECK(acc.all_acc() < 0.05);
}
