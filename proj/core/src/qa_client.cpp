#include "hyb/qa_client.hpp"

#include <cctype>
#include <cstdlib>
#include <stdexcept>

#include "httplib.h"
#include "json.hpp"

namespace hyb {

namespace {

std::string collapse_ws(const std::string& s) {
  std::string out;
  bool in_ws = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_ws = true;
      continue;
    }
    if (in_ws && !out.empty()) out.push_back(' ');
    in_ws = false;
    out.push_back(c);
  }
  return out;
}

std::string lower_first(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

std::string StubQaClient::complete(const std::string& prompt) {
  const size_t head = prompt.find(kQaPromptHead);
  const size_t tail = prompt.rfind(kQaPromptTail);
  if (head == std::string::npos || tail == std::string::npos)
    throw std::runtime_error("stub qa client: prompt has no passage section");
  const size_t begin = head + std::string(kQaPromptHead).size();
  const std::string passage = prompt.substr(begin, tail - begin);

  size_t pos = 0;
  while (pos <= passage.size()) {
    size_t dot = passage.find('.', pos);
    if (dot == std::string::npos) dot = passage.size();
    const std::string sentence = collapse_ws(passage.substr(pos, dot - pos));
    pos = dot + 1;

    size_t at = sentence.find(" is ");
    if (at != std::string::npos && at > 0 && at + 4 < sentence.size()) {
      const std::string x = sentence.substr(0, at), y = sentence.substr(at + 4);
      return "Q: What is " + lower_first(x) + "?\nA: " + y + "\n";
    }
    at = sentence.find(" has ");
    if (at != std::string::npos && at > 0 && at + 5 < sentence.size()) {
      const std::string x = sentence.substr(0, at), y = sentence.substr(at + 5);
      return "Q: What does " + lower_first(x) + " have?\nA: " + y + "\n";
    }
  }
  return "The passage states no extractable fact.\n";
}

HttpQaClient::HttpQaClient(std::string endpoint_url, std::string model, int max_retries)
    : model_(std::move(model)), max_retries_(max_retries) {
  if (max_retries_ < 1) throw std::invalid_argument("qa client: max_retries must be >= 1");
  std::string rest = endpoint_url;
  if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
  else if (rest.rfind("https://", 0) == 0)
    throw std::invalid_argument("qa client: https endpoints are not supported");
  const size_t slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  const size_t colon = hostport.find(':');
  host_ = colon == std::string::npos ? hostport : hostport.substr(0, colon);
  port_ = colon == std::string::npos ? 80 : std::atoi(hostport.c_str() + colon + 1);
  if (host_.empty() || port_ <= 0)
    throw std::invalid_argument("qa client: malformed endpoint url '" + endpoint_url + "'");
}

std::string HttpQaClient::complete(const std::string& prompt) {
  nlohmann::json body;
  body["model"] = model_;
  body["prompt"] = prompt;
  body["max_tokens"] = 256;
  body["temperature"] = 0;

  std::string last_error;
  for (int attempt = 0; attempt < max_retries_; ++attempt) {
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(5);
    cli.set_read_timeout(30);
    httplib::Headers headers;
    if (const char* key = std::getenv("HYB_LLM_API_KEY"))
      headers.emplace("Authorization", std::string("Bearer ") + key);
    const auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "connection failed";
      continue;
    }
    if (res->status != 200) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      last_error = "malformed response JSON";
      continue;
    }
    if (!reply.contains("completion") || !reply["completion"].is_string()) {
      last_error = "response has no completion field";
      continue;
    }
    return reply["completion"].get<std::string>();
  }
  throw std::runtime_error("qa client: transport failed after " + std::to_string(max_retries_) +
                           " attempts (" + last_error + ")");
}

std::string RecordingQaClient::complete(const std::string& prompt) {
  std::string completion = inner_.complete(prompt);
  log_.emplace_back(prompt, completion);
  return completion;
}

std::string RecordingQaClient::transcript() const {
  std::string out;
  for (const auto& [prompt, completion] : log_) {
    nlohmann::json j;
    j["completion"] = completion;
    j["prompt"] = prompt;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

ReplayQaClient::ReplayQaClient(const std::string& transcript) {
  size_t pos = 0;
  while (pos < transcript.size()) {
    size_t end = transcript.find('\n', pos);
    if (end == std::string::npos) end = transcript.size();
    const std::string line = transcript.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("replay qa client: malformed transcript line");
    }
    if (!j.contains("prompt") || !j.contains("completion"))
      throw std::invalid_argument("replay qa client: transcript line missing fields");
    log_.emplace_back(j["prompt"].get<std::string>(), j["completion"].get<std::string>());
  }
}

std::string ReplayQaClient::complete(const std::string& prompt) {
  for (const auto& [p, c] : log_)
    if (p == prompt) return c;
  throw std::runtime_error("qa client: prompt not in transcript");
}

}  // namespace hyb
