#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hyb/corpus.hpp"
#include "hyb/qa_client.hpp"

namespace hyb {

// ---------------------------------------------------------------------------
// Chunking

struct Chunk {
  int64_t id = 0;       // global index across one chunking pass
  std::string doc_id;   // source document name
  int64_t start = 0;    // token span [start, end) within the document
  int64_t end = 0;
  std::string text;
  int64_t token_count = 0;
};

// Byte-level tokens: every chunk holds exactly chunk_tokens bytes; the final
// partial chunk of each document is dropped.
std::vector<Chunk> chunk_corpus(const Corpus& corpus, int64_t chunk_tokens = 1024);

// ---------------------------------------------------------------------------
// QA generation and cloze conversion

struct QaPair {
  int64_t chunk_id = 0;
  std::string question, answer;
};

struct QaResult {
  bool ok = false;
  QaPair qa;
  std::string error;  // generation failure detail when !ok
};

struct ClozeSentence {
  int64_t chunk_id = 0;
  std::string statement;  // ends with answer
  std::string answer;
};

struct ClozeResult {
  bool ok = false;
  ClozeSentence cloze;
  std::string error;
};

// Prompts the client about the chunk and parses a "Q: ...\nA: ..." reply.
// An unparseable completion is a generation failure, not an exception;
// transport errors from the client propagate as std::runtime_error.
QaResult generate_qa(QaClient& client, const Chunk& chunk);

// Wh-inversion: "What is X?" + answer A becomes "X is A" with X's first
// letter capitalized. Any other question shape cannot place the answer
// terminally and fails.
ClozeResult to_cloze(const QaPair& qa);

// ---------------------------------------------------------------------------
// Filtering

enum class RejectReason { NoValidQa, AnswerNotInChunk, ClozeNotTerminal };

const char* reject_reason_name(RejectReason r);

struct FilterVerdict {
  bool accept = false;
  RejectReason reason = RejectReason::NoValidQa;  // meaningful when !accept
};

// Criteria in order: (1) a valid QA pair exists, (2) the answer appears in
// the chunk text (case-sensitive substring), (3) the cloze ends with the
// answer. The first failure names the verdict.
FilterVerdict filter_record(const Chunk& chunk, const QaResult& qa, const ClozeResult& cloze);

struct ParaphraseRecord {
  int64_t chunk_id = 0;
  std::string doc_id;
  int64_t start = 0, end = 0;
  std::string question, answer, cloze;
  bool accept = false;
  RejectReason reason = RejectReason::NoValidQa;
};

// One record per chunk: generate, convert, filter.
std::vector<ParaphraseRecord> run_pipeline(const Corpus& corpus, QaClient& client,
                                           int64_t chunk_tokens = 1024);

// Drops accepted records whose cloze sentence already appeared (first one
// wins); rejected records pass through untouched.
std::vector<ParaphraseRecord> dedup_cloze(const std::vector<ParaphraseRecord>& records);

// JSONL, one record per line.
std::string render_records(const std::vector<ParaphraseRecord>& records);

// ---------------------------------------------------------------------------
// Sequence assembly

struct Insertion {
  int64_t record_id = 0;  // chunk id of the paraphrased chunk
  int64_t token_offset = 0;
};

struct TrainingSequence {
  std::vector<int32_t> tokens;
  std::vector<Insertion> insertions;
};

inline constexpr int64_t kAssemblySeqLens[] = {2048, 4096, 6144, 8192};

// Packs whole chunks greedily up to seq_len per sequence, then inserts each
// accepted record's cloze (plus a newline) at a chunk boundary drawn
// uniformly among the boundaries at or after the end of its source chunk.
// A record whose source chunk is the last of its sequence therefore lands
// immediately after it; records are never deferred across sequences, and
// records of chunks that fall outside the emitted sequences are dropped.
// Stops after target_instances sequences.
std::vector<TrainingSequence> assemble_dataset(const std::vector<ParaphraseRecord>& records,
                                               const std::vector<Chunk>& chunks, int64_t seq_len,
                                               int64_t target_instances, uint64_t seed);

// JSONL of {sequence_tokens, insertions}.
std::string render_dataset(const std::vector<TrainingSequence>& seqs);
std::vector<TrainingSequence> parse_dataset(const std::string& text);

}  // namespace hyb
