#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hyb {

inline constexpr int64_t kByteVocab = 256;

struct Document {
  std::string name;
  std::string text;
};

struct Corpus {
  std::vector<Document> docs;
  int64_t total_bytes() const {
    int64_t n = 0;
    for (const auto& d : docs) n += static_cast<int64_t>(d.text.size());
    return n;
  }
};

// One token per byte, vocab 256. No escaping, no special tokens.
std::vector<int32_t> tokenize(std::string_view text);
std::string detokenize(const int32_t* tokens, int64_t count);
std::string detokenize(const std::vector<int32_t>& tokens);

// Loads every regular file in dir as one document, ordered by filename.
Corpus load_corpus_dir(const std::filesystem::path& dir);

// All documents tokenized and concatenated in corpus order.
std::vector<int32_t> corpus_tokens(const Corpus& corpus);

}  // namespace hyb
