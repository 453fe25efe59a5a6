#include "mhscreen/chunker.hpp"

#include <cmath>
#include <stdexcept>

#include "mhscreen/errors.hpp"

namespace mhscreen {

std::size_t chunk_stride(std::size_t chunk_size, double overlap_ratio) {
  auto raw = static_cast<std::size_t>(
      std::floor(static_cast<double>(chunk_size) * (1.0 - overlap_ratio)));
  return std::max<std::size_t>(1, raw);
}

std::size_t ChunkSet::stride() const {
  return chunk_stride(chunk_size, overlap_ratio);
}

WhitespaceTokenizer::WhitespaceTokenizer() {
  // id 0 is the section separator.
  vocab_["<sep>"] = 0;
  words_.push_back("<sep>");
}

std::vector<TokenId> WhitespaceTokenizer::encode(const std::string& text) {
  std::vector<TokenId> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  };
  while (i < n) {
    while (i < n && is_space(text[i])) ++i;
    std::size_t b = i;
    while (i < n && !is_space(text[i])) ++i;
    if (i > b) {
      std::string word = text.substr(b, i - b);
      auto [it, inserted] =
          vocab_.emplace(std::move(word), static_cast<TokenId>(words_.size()));
      if (inserted) words_.push_back(it->first);
      out.push_back(it->second);
    }
  }
  return out;
}

std::string WhitespaceTokenizer::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto id = tokens[i];
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
      throw std::invalid_argument("token id out of vocabulary: " +
                                  std::to_string(id));
    if (i) out += ' ';
    out += words_[id];
  }
  return out;
}

std::vector<TokenId> tokenize(const std::string& text, Tokenizer& tokenizer) {
  return tokenizer.encode(text);
}

ChunkSet make_chunks(std::span<const TokenId> tokens, std::size_t chunk_size,
                     double overlap_ratio) {
  if (chunk_size < 1) throw std::invalid_argument("chunk_size must be >= 1");
  if (!(overlap_ratio >= 0.0 && overlap_ratio < 1.0))
    throw std::invalid_argument("overlap_ratio must be in [0, 1)");
  if (tokens.empty()) throw DataError("cannot chunk an empty token sequence");

  ChunkSet cs;
  cs.chunk_size = chunk_size;
  cs.overlap_ratio = overlap_ratio;
  cs.source_length = tokens.size();

  const std::size_t stride = chunk_stride(chunk_size, overlap_ratio);
  std::size_t start = 0;
  while (true) {
    std::size_t end = std::min(start + chunk_size, tokens.size());
    TokenChunk chunk;
    chunk.start = start;
    chunk.end = end;
    chunk.tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                        tokens.begin() + static_cast<std::ptrdiff_t>(end));
    cs.chunks.push_back(std::move(chunk));
    if (end >= tokens.size()) break;
    start += stride;
  }
  return cs;
}

std::vector<TokenId> tokenize_transcript(const Transcript& transcript,
                                         Tokenizer& tokenizer) {
  std::vector<TokenId> tokens;
  for (std::size_t i = 0; i < transcript.sections.size(); ++i) {
    if (i) tokens.push_back(tokenizer.separator_id());
    auto sec = tokenizer.encode(transcript.sections[i].text);
    tokens.insert(tokens.end(), sec.begin(), sec.end());
  }
  return tokens;
}

ChunkSet chunk_transcript(const Transcript& transcript, std::size_t chunk_size,
                          double overlap_ratio, Tokenizer& tokenizer) {
  auto tokens = tokenize_transcript(transcript, tokenizer);
  return make_chunks(tokens, chunk_size, overlap_ratio);
}

} // namespace mhscreen
