#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mhscreen/chunker.hpp"
#include "mhscreen/corpus.hpp"
#include "mhscreen/eval.hpp"

namespace mhscreen {

// Raised when a client response carries no usable verdict line. The raw
// response is preserved so the caller can log or retry.
class VerdictParseError : public std::runtime_error {
public:
  explicit VerdictParseError(std::string raw)
      : std::runtime_error("no parsable verdict in response"),
        raw_response(std::move(raw)) {}

  std::string raw_response;
};

// The fixed instruction scaffold sent with every chunk. render() fills the
// single response-text slot and changes nothing else.
struct PromptTemplate {
  std::string header;
  std::string task_block;
  std::string output_block;

  static const PromptTemplate& standard();
};

// The response text is embedded as a JSON string literal, so quotes and
// control characters cannot break out of the quoted slot.
std::string render_prompt(const PromptTemplate& tpl,
                          const std::string& response_text);

// Returns 1 for Yes, 0 for No from the first line carrying the
// case-insensitive keyword "Prediction:". Anything else on that line
// raises VerdictParseError.
int parse_verdict(const std::string& response);

class LlmClient {
public:
  virtual ~LlmClient() = default;
  virtual const std::string& name() const = 0;
  virtual std::string generate(const std::string& prompt) = 0;
  virtual bool deterministic() const = 0;
};

// Deterministic rule-based client: answers Yes exactly when the prompt
// contains one of the disorder's generator marker phrases. Stands in for a
// remote model so the zero-shot path is verifiable offline.
class MarkerStubClient final : public LlmClient {
public:
  explicit MarkerStubClient(Disorder disorder);

  const std::string& name() const override { return name_; }
  std::string generate(const std::string& prompt) override;
  bool deterministic() const override { return true; }

  std::size_t calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }

private:
  Disorder disorder_;
  std::string name_;
  std::size_t calls_ = 0;
};

// Append-only JSONL store keyed by (client name, prompt sha256); the last
// entry for a key wins, so retries simply append. Makes remote sweeps
// resumable and auditable.
class ResponseCache {
public:
  explicit ResponseCache(std::filesystem::path file);

  std::optional<std::string> lookup(const std::string& client,
                                    const std::string& prompt_sha) const;
  void store(const std::string& client, const std::string& prompt_sha,
             const std::string& response);

  static std::string prompt_hash(const std::string& prompt);

  std::size_t size() const { return entries_.size(); }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

private:
  std::filesystem::path file_;
  std::map<std::pair<std::string, std::string>, std::string> entries_;
  mutable std::size_t hits_ = 0;
  mutable std::size_t misses_ = 0;
};

struct ChunkVerdict {
  std::size_t chunk_index = 0;
  std::pair<std::size_t, std::size_t> chunk_ref; // token span
  double score = 0.0;
  std::string raw_response;
  bool excluded = false; // still unparseable after one retry
};

struct UserInference {
  int decision = 0;
  double mean_score = 0.0;
  std::vector<ChunkVerdict> verdicts;
  std::size_t excluded_chunks = 0;
};

// Chunks the transcript, queries the client per chunk, and averages parsed
// verdicts; decision = (mean >= threshold), ties positive. chunk_size 0
// sends the whole transcript as a single chunk. A chunk whose response stays
// unparseable after one retry is excluded from the mean; when every chunk is
// excluded a ClientError is raised instead of a silent negative.
UserInference infer_user(const Transcript& transcript, std::size_t chunk_size,
                         double overlap_ratio, LlmClient& client,
                         double threshold, Tokenizer& tokenizer,
                         const PromptTemplate& tpl = PromptTemplate::standard(),
                         ResponseCache* cache = nullptr);

struct ZeroshotRun {
  std::vector<PredictionRecord> records;
  // Participants whose inference failed, with the reason; the run continues
  // past them and the caller decides whether that is fatal.
  std::vector<std::pair<std::string, std::string>> failures;
};

ZeroshotRun run_zeroshot(const Corpus& corpus, Disorder disorder,
                         std::size_t chunk_size, double overlap_ratio,
                         LlmClient& client, double threshold,
                         Tokenizer& tokenizer,
                         const std::string& method_tag = "",
                         ResponseCache* cache = nullptr);

} // namespace mhscreen
