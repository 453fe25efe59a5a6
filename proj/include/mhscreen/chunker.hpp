#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mhscreen/corpus.hpp"

namespace mhscreen {

using TokenId = std::int32_t;

// A fixed-size window [start, end) over a token sequence.
struct TokenChunk {
  std::vector<TokenId> tokens;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
};

// The full overlapping-window cover of one token sequence.
struct ChunkSet {
  std::vector<TokenChunk> chunks;
  std::size_t chunk_size = 0;
  double overlap_ratio = 0.0;
  std::size_t source_length = 0;

  std::size_t stride() const;
};

std::size_t chunk_stride(std::size_t chunk_size, double overlap_ratio);

class Tokenizer {
public:
  virtual ~Tokenizer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<TokenId> encode(const std::string& text) = 0;
  virtual std::string decode(std::span<const TokenId> tokens) const = 0;
  // Token placed between transcript sections on concatenation.
  virtual TokenId separator_id() const = 0;
};

// Maps each maximal non-whitespace run to one id via an internal vocabulary
// (ids assigned in first-seen order, id 0 reserved for the separator). Lets
// the chunking and zero-shot paths run without any model backend.
class WhitespaceTokenizer final : public Tokenizer {
public:
  WhitespaceTokenizer();

  std::string name() const override { return "whitespace"; }
  std::vector<TokenId> encode(const std::string& text) override;
  std::string decode(std::span<const TokenId> tokens) const override;
  TokenId separator_id() const override { return 0; }

  std::size_t vocab_size() const { return words_.size(); }

private:
  std::map<std::string, TokenId> vocab_;
  std::vector<std::string> words_; // id -> word
};

std::vector<TokenId> tokenize(const std::string& text, Tokenizer& tokenizer);

// Windows of size `chunk_size` starting at 0, stride, 2*stride, ... with
// stride = max(1, floor(chunk_size * (1 - overlap_ratio))). Emission stops
// once a chunk's end reaches the sequence length; the final chunk may be
// short. overlap_ratio must be in [0, 1) and tokens non-empty.
ChunkSet make_chunks(std::span<const TokenId> tokens, std::size_t chunk_size,
                     double overlap_ratio);

// Tokenizes the five sections in prompt order, joined by a single separator
// token, then chunks the result. Chunks may span section boundaries.
ChunkSet chunk_transcript(const Transcript& transcript, std::size_t chunk_size,
                          double overlap_ratio, Tokenizer& tokenizer);

std::vector<TokenId> tokenize_transcript(const Transcript& transcript,
                                         Tokenizer& tokenizer);

} // namespace mhscreen
