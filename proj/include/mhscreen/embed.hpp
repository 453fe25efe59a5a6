#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mhscreen/adapt.hpp"
#include "mhscreen/chunker.hpp"
#include "mhscreen/corpus.hpp"
#include "mhscreen/linalg.hpp"

namespace mhscreen {

// cls_token backends summarize a chunk with the vector at the classification
// position; sentence-encoder style backends return their own pooled vector.
enum class PoolingMode { cls_token, backend_native };

class EncoderBackend {
public:
  virtual ~EncoderBackend() = default;
  virtual const std::string& name() const = 0;
  virtual std::size_t hidden_dim() const = 0;
  virtual std::size_t max_tokens() const = 0;
  virtual PoolingMode pooling_mode() const = 0;
  // Deterministic per-chunk summary vector of length hidden_dim().
  virtual VectorXf encode_chunk(const TokenChunk& chunk) const = 0;
};

struct LoraTargetInfo {
  std::string name;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
};

class AdaptableBackend : public EncoderBackend {
public:
  virtual std::vector<LoraTargetInfo> lora_targets() const = 0;
  // Attaching nullptr restores the base model. The state stays owned by the
  // caller and may be trained in place.
  virtual void attach(std::shared_ptr<const AdapterState> state) = 0;
  virtual std::shared_ptr<const AdapterState> attached() const = 0;
};

// Opaque per-chunk forward record kept for the backward pass.
struct EncodeTrace {
  virtual ~EncodeTrace() = default;
};

struct ProjectOptions {
  // When set, inverted dropout with rate `dropout` is applied to the adapter
  // branch inputs (training only; inference stays deterministic).
  std::mt19937_64* dropout_rng = nullptr;
  float dropout = 0.0f;
};

class TrainableBackend : public AdaptableBackend {
public:
  // Everything upstream of the adapted projections. Independent of attached
  // adapters, so trainers may precompute it once per chunk.
  virtual VectorXf base_features(std::span<const TokenId> tokens) const = 0;
  virtual VectorXf project(const VectorXf& base, std::unique_ptr<EncodeTrace>* trace,
                           const ProjectOptions& opts = {}) const = 0;
  // Accumulates dLoss/dA and dLoss/dB for the attached adapters into `grads`
  // (aligned with AdapterState::targets) given the upstream gradient dh.
  virtual void backward(const EncodeTrace& trace, const VectorXf& dh,
                        AdapterGradients& grads) const = 0;
};

// Deterministic weight-free encoder: token embeddings are a splitmix64 hash
// of (seed, token id), chunk features are their mean, and the summary vector
// is value_proj * tanh(query_proj * features). Both projections are frozen
// pseudo-random matrices and are the LoRA target matrices ("query", "value").
// backend_native mode additionally L2-normalizes the output, mimicking
// sentence-encoder backends.
class StubEncoder final : public TrainableBackend {
public:
  StubEncoder(std::string name, std::size_t hidden_dim, std::uint64_t seed,
              PoolingMode mode = PoolingMode::cls_token,
              std::size_t max_tokens = 4096);

  const std::string& name() const override { return name_; }
  std::size_t hidden_dim() const override { return dim_; }
  std::size_t max_tokens() const override { return max_tokens_; }
  PoolingMode pooling_mode() const override { return mode_; }
  VectorXf encode_chunk(const TokenChunk& chunk) const override;

  std::vector<LoraTargetInfo> lora_targets() const override;
  void attach(std::shared_ptr<const AdapterState> state) override;
  std::shared_ptr<const AdapterState> attached() const override { return adapters_; }

  VectorXf base_features(std::span<const TokenId> tokens) const override;
  VectorXf project(const VectorXf& base, std::unique_ptr<EncodeTrace>* trace,
                   const ProjectOptions& opts = {}) const override;
  void backward(const EncodeTrace& trace, const VectorXf& dh,
                AdapterGradients& grads) const override;

  // Checksum over the frozen projection weights; unchanged by training.
  std::string base_checksum() const;

  VectorXf token_embedding(TokenId token) const;

  std::size_t encode_calls() const { return encode_calls_; }
  void reset_encode_calls() { encode_calls_ = 0; }

private:
  std::string name_;
  std::size_t dim_;
  std::uint64_t seed_;
  PoolingMode mode_;
  std::size_t max_tokens_;
  RowMatrixXf query_proj_; // d x d
  RowMatrixXf value_proj_; // d x d
  std::shared_ptr<const AdapterState> adapters_;
  mutable std::size_t encode_calls_ = 0;
};

// Builds the named stub backend. Recognized: "stub" (d=128, cls_token) and
// "stub-large" (d=192, backend_native). Throws ConfigError otherwise.
std::unique_ptr<StubEncoder> make_backend(const std::string& name,
                                          std::uint64_t seed);

// T x d matrix of per-chunk summary vectors (row i = chunk i).
struct ChunkMatrix {
  RowMatrixXf values;
  std::vector<std::pair<std::size_t, std::size_t>> chunk_refs; // token spans

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
};

ChunkMatrix encode_chunkset(const ChunkSet& cs, const EncoderBackend& backend);

struct UserEmbedding {
  VectorXf vector;
  Aggregation aggregation = Aggregation::mean;
  std::string participant_id;
};

UserEmbedding mean_pool(const ChunkMatrix& H);
UserEmbedding max_pool(const ChunkMatrix& H);
UserEmbedding pool(const ChunkMatrix& H, Aggregation aggregation);

// ---------------------------------------------------------------------------
// Embedding cache
//
// <cache>/<key>/matrix.bin    row-major float32, all users' chunk rows
// <cache>/<key>/manifest.json rows, dim, per-user row ranges and chunk
//                             boundaries, plus full provenance
// where <key> = sha256 prefix of (corpus hash, backend, chunk size, overlap,
// adapter id).
// ---------------------------------------------------------------------------

struct UserChunkEmbeddings {
  std::string participant_id;
  ChunkMatrix matrix;
};

struct CorpusEmbeddings {
  std::vector<UserChunkEmbeddings> users;
  std::size_t dim = 0;
  std::string cache_key;
  bool loaded_from_cache = false;

  const UserChunkEmbeddings* find(const std::string& participant_id) const;
};

std::string embedding_cache_key(const std::string& corpus_sha,
                                const std::string& backend_name,
                                std::size_t chunk_size, double overlap_ratio,
                                const std::string& adapter_id);

// Chunks and encodes every transcript. When cache_dir is given, a complete
// cached entry is loaded without touching the backend; otherwise the result
// is written through.
CorpusEmbeddings encode_corpus(const Corpus& corpus,
                               const EncoderBackend& backend,
                               Tokenizer& tokenizer, std::size_t chunk_size,
                               double overlap_ratio,
                               const std::optional<std::filesystem::path>&
                                   cache_dir = std::nullopt,
                               const std::string& adapter_id = "");

std::string corpus_sha256(const Corpus& corpus);

} // namespace mhscreen
