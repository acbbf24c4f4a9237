#include "hyb/pipeline.hpp"

#include <cctype>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "hyb/rng.hpp"
#include "json.hpp"

namespace hyb {

std::vector<Chunk> chunk_corpus(const Corpus& corpus, int64_t chunk_tokens) {
  if (chunk_tokens < 1) throw std::invalid_argument("chunk_corpus: chunk_tokens must be >= 1");
  std::vector<Chunk> chunks;
  int64_t next_id = 0;
  for (const auto& doc : corpus.docs) {
    const int64_t n = static_cast<int64_t>(doc.text.size());
    for (int64_t at = 0; at + chunk_tokens <= n; at += chunk_tokens) {
      Chunk c;
      c.id = next_id++;
      c.doc_id = doc.name;
      c.start = at;
      c.end = at + chunk_tokens;
      c.text = doc.text.substr(static_cast<size_t>(at), static_cast<size_t>(chunk_tokens));
      c.token_count = chunk_tokens;
      chunks.push_back(std::move(c));
    }
  }
  return chunks;
}

QaResult generate_qa(QaClient& client, const Chunk& chunk) {
  const std::string completion = client.complete(kQaPromptHead + chunk.text + kQaPromptTail);

  auto line_after = [&](const std::string& tag) -> std::string {
    size_t at = completion.rfind(tag, 0) == 0 ? 0 : completion.find("\n" + tag);
    if (at == std::string::npos) return "";
    at = (at == 0 ? 0 : at + 1) + tag.size();
    size_t end = completion.find('\n', at);
    if (end == std::string::npos) end = completion.size();
    return completion.substr(at, end - at);
  };

  QaResult res;
  res.qa.chunk_id = chunk.id;
  res.qa.question = line_after("Q: ");
  res.qa.answer = line_after("A: ");
  if (res.qa.question.empty() || res.qa.answer.empty()) {
    res.error = "completion has no Q:/A: lines";
    return res;
  }
  res.ok = true;
  return res;
}

ClozeResult to_cloze(const QaPair& qa) {
  ClozeResult res;
  res.cloze.chunk_id = qa.chunk_id;
  const std::string head = "What is ";
  if (qa.question.rfind(head, 0) != 0 || qa.question.back() != '?') {
    res.error = "question is not a what-is form";
    return res;
  }
  std::string x = qa.question.substr(head.size(), qa.question.size() - head.size() - 1);
  if (x.empty() || qa.answer.empty()) {
    res.error = "empty subject or answer";
    return res;
  }
  x[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(x[0])));
  res.cloze.statement = x + " is " + qa.answer;
  res.cloze.answer = qa.answer;
  res.ok = true;
  return res;
}

const char* reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::NoValidQa: return "NoValidQa";
    case RejectReason::AnswerNotInChunk: return "AnswerNotInChunk";
    case RejectReason::ClozeNotTerminal: return "ClozeNotTerminal";
  }
  return "?";
}

FilterVerdict filter_record(const Chunk& chunk, const QaResult& qa, const ClozeResult& cloze) {
  FilterVerdict v;
  if (!qa.ok || qa.qa.question.empty() || qa.qa.answer.empty()) {
    v.reason = RejectReason::NoValidQa;
    return v;
  }
  if (chunk.text.find(qa.qa.answer) == std::string::npos) {
    v.reason = RejectReason::AnswerNotInChunk;
    return v;
  }
  const std::string& s = cloze.cloze.statement;
  const std::string& a = qa.qa.answer;
  if (!cloze.ok || s.size() < a.size() || s.compare(s.size() - a.size(), a.size(), a) != 0) {
    v.reason = RejectReason::ClozeNotTerminal;
    return v;
  }
  v.accept = true;
  return v;
}

std::vector<ParaphraseRecord> run_pipeline(const Corpus& corpus, QaClient& client,
                                           int64_t chunk_tokens) {
  std::vector<ParaphraseRecord> records;
  for (const Chunk& chunk : chunk_corpus(corpus, chunk_tokens)) {
    const QaResult qa = generate_qa(client, chunk);
    const ClozeResult cloze = qa.ok ? to_cloze(qa.qa) : ClozeResult{};
    const FilterVerdict v = filter_record(chunk, qa, cloze);

    ParaphraseRecord rec;
    rec.chunk_id = chunk.id;
    rec.doc_id = chunk.doc_id;
    rec.start = chunk.start;
    rec.end = chunk.end;
    rec.question = qa.qa.question;
    rec.answer = qa.qa.answer;
    rec.cloze = cloze.ok ? cloze.cloze.statement : "";
    rec.accept = v.accept;
    rec.reason = v.reason;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ParaphraseRecord> dedup_cloze(const std::vector<ParaphraseRecord>& records) {
  std::vector<ParaphraseRecord> out;
  std::set<std::string> seen;
  for (const auto& rec : records) {
    if (rec.accept && !seen.insert(rec.cloze).second) continue;
    out.push_back(rec);
  }
  return out;
}

std::string render_records(const std::vector<ParaphraseRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    nlohmann::json j;
    j["chunk_id"] = rec.chunk_id;
    j["doc_id"] = rec.doc_id;
    j["span"] = {rec.start, rec.end};
    j["question"] = rec.question;
    j["answer"] = rec.answer;
    j["cloze"] = rec.cloze;
    j["status"] = rec.accept ? "accept" : "reject";
    j["reason"] = rec.accept ? nlohmann::json() : nlohmann::json(reject_reason_name(rec.reason));
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<TrainingSequence> assemble_dataset(const std::vector<ParaphraseRecord>& records,
                                               const std::vector<Chunk>& chunks, int64_t seq_len,
                                               int64_t target_instances, uint64_t seed) {
  bool len_ok = false;
  for (int64_t allowed : kAssemblySeqLens) len_ok = len_ok || seq_len == allowed;
  if (!len_ok)
    throw std::invalid_argument(
        "assemble_dataset: seq_len must be one of 2048, 4096, 6144, 8192");
  if (target_instances < 1)
    throw std::invalid_argument("assemble_dataset: target_instances must be >= 1");

  std::unordered_map<int64_t, size_t> chunk_at;
  for (size_t i = 0; i < chunks.size(); ++i) {
    if (chunks[i].token_count > seq_len)
      throw std::invalid_argument("assemble_dataset: chunk longer than seq_len");
    chunk_at[chunks[i].id] = i;
  }
  for (const auto& rec : records)
    if (rec.accept && !chunk_at.count(rec.chunk_id))
      throw std::invalid_argument("assemble_dataset: record references unknown chunk");

  Rng rng(seed);
  std::vector<TrainingSequence> seqs;
  size_t next_chunk = 0;
  while (next_chunk < chunks.size() && static_cast<int64_t>(seqs.size()) < target_instances) {
    // Greedy whole-chunk packing.
    const size_t first = next_chunk;
    int64_t packed = 0;
    while (next_chunk < chunks.size() &&
           packed + chunks[next_chunk].token_count <= seq_len) {
      packed += chunks[next_chunk].token_count;
      ++next_chunk;
    }
    const size_t k = next_chunk - first;

    // boundary j sits after in-sequence chunk j, j = 0..k-1; a record with
    // source chunk at position p may land on any boundary in [p, k).
    std::vector<std::vector<const ParaphraseRecord*>> at_boundary(k);
    for (const auto& rec : records) {
      if (!rec.accept) continue;
      const size_t pos = chunk_at.at(rec.chunk_id);
      if (pos < first || pos >= next_chunk) continue;
      const size_t p = pos - first;
      const size_t b = p + static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(k - p)));
      at_boundary[b].push_back(&rec);
    }

    TrainingSequence seq;
    seq.tokens.reserve(static_cast<size_t>(packed));
    for (size_t j = 0; j < k; ++j) {
      const auto chunk_tokens = tokenize(chunks[first + j].text);
      seq.tokens.insert(seq.tokens.end(), chunk_tokens.begin(), chunk_tokens.end());
      for (const ParaphraseRecord* rec : at_boundary[j]) {
        seq.insertions.push_back({rec->chunk_id, static_cast<int64_t>(seq.tokens.size())});
        const auto para_tokens = tokenize(rec->cloze + "\n");
        seq.tokens.insert(seq.tokens.end(), para_tokens.begin(), para_tokens.end());
      }
    }
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

std::string render_dataset(const std::vector<TrainingSequence>& seqs) {
  std::string out;
  for (const auto& seq : seqs) {
    nlohmann::json j;
    j["sequence_tokens"] = seq.tokens;
    j["insertions"] = nlohmann::json::array();
    for (const auto& ins : seq.insertions)
      j["insertions"].push_back({{"record_id", ins.record_id}, {"token_offset", ins.token_offset}});
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<TrainingSequence> parse_dataset(const std::string& text) {
  std::vector<TrainingSequence> seqs;
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
      throw std::invalid_argument("parse_dataset: malformed JSON line");
    }
    if (!j.contains("sequence_tokens") || !j.contains("insertions"))
      throw std::invalid_argument("parse_dataset: line missing fields");
    TrainingSequence seq;
    seq.tokens = j["sequence_tokens"].get<std::vector<int32_t>>();
    for (const auto& ins : j["insertions"])
      seq.insertions.push_back(
          {ins.at("record_id").get<int64_t>(), ins.at("token_offset").get<int64_t>()});
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

}  // namespace hyb
