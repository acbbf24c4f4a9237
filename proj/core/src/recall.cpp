#include "hyb/recall.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <utility>

#include "hyb/rng.hpp"
#include "json.hpp"

namespace hyb {

namespace {

constexpr int64_t kPairLen = 6;  // "[K=vv]"
constexpr char kFiller[] = "0123456789 ";
constexpr int64_t kFillerLen = 11;

std::string make_context(Rng& rng, const std::vector<char>& keys,
                         const std::vector<std::string>& vals, int64_t context_len) {
  const int64_t n_pairs = static_cast<int64_t>(keys.size());
  const int64_t region = std::max(context_len / 2, n_pairs * kPairLen);

  // Gaps around the pairs partition the region's slack: n_pairs cuts drawn
  // uniformly in [0, slack], sorted, then differenced.
  const int64_t slack = region - n_pairs * kPairLen;
  std::vector<int64_t> cuts(static_cast<size_t>(n_pairs));
  for (auto& c : cuts) c = rng.uniform_int(slack + 1);
  std::sort(cuts.begin(), cuts.end());

  std::string ctx;
  ctx.reserve(static_cast<size_t>(context_len));
  auto fill = [&](int64_t count) {
    for (int64_t i = 0; i < count; ++i)
      ctx.push_back(kFiller[static_cast<size_t>(rng.uniform_int(kFillerLen))]);
  };
  int64_t prev = 0;
  for (int64_t p = 0; p < n_pairs; ++p) {
    fill(cuts[static_cast<size_t>(p)] - prev);
    prev = cuts[static_cast<size_t>(p)];
    ctx.push_back('[');
    ctx.push_back(keys[static_cast<size_t>(p)]);
    ctx.push_back('=');
    ctx += vals[static_cast<size_t>(p)];
    ctx.push_back(']');
  }
  fill(context_len - static_cast<int64_t>(ctx.size()));
  return ctx;
}

}  // namespace

std::vector<RecallTask> gen_recall_suite(int64_t vocab, int64_t n_pairs, int64_t context_len,
                                         int64_t window, int64_t n_tasks, uint64_t seed) {
  if (vocab < 128) throw std::invalid_argument("gen_recall_suite: vocab must cover ASCII");
  if (n_pairs < 1 || n_pairs > 26)
    throw std::invalid_argument("gen_recall_suite: n_pairs must be in [1, 26]");
  if (n_pairs * kPairLen > context_len)
    throw std::invalid_argument("gen_recall_suite: pairs do not fit in context_len");
  if (n_tasks < 1) throw std::invalid_argument("gen_recall_suite: n_tasks must be >= 1");

  Rng rng(seed);
  std::vector<RecallTask> suite;
  suite.reserve(static_cast<size_t>(n_tasks));
  for (int64_t t = 0; t < n_tasks; ++t) {
    std::vector<char> alphabet(26);
    for (int i = 0; i < 26; ++i) alphabet[static_cast<size_t>(i)] = static_cast<char>('A' + i);
    for (int i = 25; i > 0; --i)
      std::swap(alphabet[static_cast<size_t>(i)],
                alphabet[static_cast<size_t>(rng.uniform_int(i + 1))]);
    std::vector<char> keys(alphabet.begin(), alphabet.begin() + n_pairs);

    std::set<std::string> seen;
    std::vector<std::string> vals;
    while (static_cast<int64_t>(vals.size()) < n_pairs) {
      std::string v;
      v.push_back(static_cast<char>('a' + rng.uniform_int(26)));
      v.push_back(static_cast<char>('a' + rng.uniform_int(26)));
      if (seen.insert(v).second) vals.push_back(v);
    }

    RecallTask task;
    task.context = make_context(rng, keys, vals, context_len);
    const int64_t q = rng.uniform_int(n_pairs);
    task.query = std::string("?") + keys[static_cast<size_t>(q)] + "=";
    task.answer = vals[static_cast<size_t>(q)];
    task.is_short = context_len <= window;
    suite.push_back(std::move(task));
  }
  return suite;
}

std::string render_recall_suite(const std::vector<RecallTask>& suite) {
  std::string out;
  for (const auto& task : suite) {
    nlohmann::json j;
    j["answer"] = task.answer;
    j["class"] = task.is_short ? "short" : "long";
    j["context"] = task.context;
    j["query"] = task.query;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<RecallTask> parse_recall_suite(const std::string& text) {
  std::vector<RecallTask> suite;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("parse_recall_suite: malformed JSON line");
    }
    if (!j.contains("context") || !j.contains("query") || !j.contains("answer") ||
        !j.contains("class"))
      throw std::invalid_argument("parse_recall_suite: missing field");
    const std::string cls = j["class"].get<std::string>();
    if (cls != "short" && cls != "long")
      throw std::invalid_argument("parse_recall_suite: class must be short or long");
    RecallTask task;
    task.context = j["context"].get<std::string>();
    task.query = j["query"].get<std::string>();
    task.answer = j["answer"].get<std::string>();
    task.is_short = cls == "short";
    suite.push_back(std::move(task));
  }
  return suite;
}

std::string task_text(const RecallTask& task) { return task.context + task.query + task.answer; }

}  // namespace hyb
