#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hyb {

// Prompt skeleton shared by the prompt builder and the stub client's
// passage extraction.
inline constexpr const char* kQaPromptHead =
    "Write one factual question about the passage and answer it.\n\nPassage:\n";
inline constexpr const char* kQaPromptTail = "\n\nFormat:\nQ: <question>\nA: <answer>\n";

// Text-generation backend. complete() returns the raw completion for a
// prompt and throws std::runtime_error on transport failure; what the text
// means is the caller's problem.
class QaClient {
 public:
  virtual ~QaClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Deterministic offline generator. Finds the first sentence of the passage
// matching "X is Y" (fallback "X has Y"), with whitespace runs collapsed, and
// answers:
//   "X is Y"  -> "Q: What is x?\nA: Y\n"      (x = X with its first letter
//   "X has Y" -> "Q: What does x have?\nA: Y\n"           lowercased)
// No matching sentence yields a deliberately unparseable completion.
class StubQaClient final : public QaClient {
 public:
  std::string complete(const std::string& prompt) override;
};

// POSTs {model, prompt, max_tokens, temperature} as JSON to endpoint_url and
// expects {"completion": "..."} back. Bearer token comes from the
// HYB_LLM_API_KEY environment variable when set. Transport failures (connect
// errors, non-200 statuses, malformed response JSON) are retried up to
// max_retries total attempts, then thrown as std::runtime_error.
class HttpQaClient final : public QaClient {
 public:
  HttpQaClient(std::string endpoint_url, std::string model, int max_retries = 3);
  std::string complete(const std::string& prompt) override;

 private:
  std::string host_, path_, model_;
  int port_ = 80;
  int max_retries_;
};

// Wraps another client and records every (prompt, completion) exchange.
class RecordingQaClient final : public QaClient {
 public:
  explicit RecordingQaClient(QaClient& inner) : inner_(inner) {}
  std::string complete(const std::string& prompt) override;

  // JSONL transcript, one {"prompt", "completion"} object per line.
  std::string transcript() const;

 private:
  QaClient& inner_;
  std::vector<std::pair<std::string, std::string>> log_;
};

// Serves completions from a recorded transcript by exact prompt match;
// unknown prompts are transport errors.
class ReplayQaClient final : public QaClient {
 public:
  explicit ReplayQaClient(const std::string& transcript);
  std::string complete(const std::string& prompt) override;

 private:
  std::vector<std::pair<std::string, std::string>> log_;
};

}  // namespace hyb
