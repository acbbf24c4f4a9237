#include "hyb/corpus.hpp"

#include <stdexcept>

#include "hyb/io.hpp"

namespace hyb {

std::vector<int32_t> tokenize(std::string_view text) {
  std::vector<int32_t> out(text.size());
  for (size_t i = 0; i < text.size(); ++i)
    out[i] = static_cast<int32_t>(static_cast<unsigned char>(text[i]));
  return out;
}

std::string detokenize(const int32_t* tokens, int64_t count) {
  std::string out(static_cast<size_t>(count), '\0');
  for (int64_t i = 0; i < count; ++i) {
    if (tokens[i] < 0 || tokens[i] >= kByteVocab)
      throw std::invalid_argument("detokenize: token " + std::to_string(tokens[i]) +
                                  " out of byte range");
    out[static_cast<size_t>(i)] = static_cast<char>(static_cast<unsigned char>(tokens[i]));
  }
  return out;
}

std::string detokenize(const std::vector<int32_t>& tokens) {
  return detokenize(tokens.data(), static_cast<int64_t>(tokens.size()));
}

Corpus load_corpus_dir(const std::filesystem::path& dir) {
  Corpus corpus;
  for (const auto& path : list_files_sorted(dir))
    corpus.docs.push_back({path.filename().string(), read_file(path)});
  return corpus;
}

std::vector<int32_t> corpus_tokens(const Corpus& corpus) {
  std::vector<int32_t> out;
  out.reserve(static_cast<size_t>(corpus.total_bytes()));
  for (const auto& doc : corpus.docs) {
    auto t = tokenize(doc.text);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

}  // namespace hyb
