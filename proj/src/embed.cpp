#include "mhscreen/embed.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "mhscreen/errors.hpp"
#include "mhscreen/hash.hpp"

namespace mhscreen {

namespace {

using nlohmann::ordered_json;

struct StubTrace final : EncodeTrace {
  VectorXf zd;     // (masked) query-branch adapter input
  VectorXf q_mid;  // Aq * zd
  VectorXf a;      // tanh activations
  VectorXf ad;     // (masked) value-branch adapter input
  VectorXf v_mid;  // Av * ad
  VectorXf mask_a; // empty when no dropout
  bool has_query = false;
  bool has_value = false;
  bool normalized = false;
  VectorXf h_hat;
  float inv_norm = 0.0f;
};

VectorXf apply_dropout(const VectorXf& v, const ProjectOptions& opts,
                       VectorXf* mask_out) {
  if (!opts.dropout_rng || opts.dropout <= 0.0f) {
    if (mask_out) mask_out->resize(0);
    return v;
  }
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  const float keep_scale = 1.0f / (1.0f - opts.dropout);
  VectorXf mask(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    mask[i] = unit(*opts.dropout_rng) < opts.dropout ? 0.0f : keep_scale;
  if (mask_out) *mask_out = mask;
  return mask.cwiseProduct(v);
}

} // namespace

StubEncoder::StubEncoder(std::string name, std::size_t hidden_dim,
                         std::uint64_t seed, PoolingMode mode,
                         std::size_t max_tokens)
    : name_(std::move(name)), dim_(hidden_dim), seed_(seed), mode_(mode),
      max_tokens_(max_tokens) {
  if (dim_ < 1) throw std::invalid_argument("hidden_dim must be >= 1");
  if (max_tokens_ < 1) throw std::invalid_argument("max_tokens must be >= 1");
  std::mt19937_64 rng(mix_u64(seed_, 0x57ab));
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(double(dim_)));
  query_proj_.resize(dim_, dim_);
  value_proj_.resize(dim_, dim_);
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = 0; j < dim_; ++j) query_proj_(i, j) = float(gauss(rng));
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = 0; j < dim_; ++j) value_proj_(i, j) = float(gauss(rng));
}

VectorXf StubEncoder::token_embedding(TokenId token) const {
  VectorXf e(dim_);
  auto state = mix_u64(seed_, static_cast<std::uint64_t>(
                                  static_cast<std::int64_t>(token)) +
                                  0x517cc1b727220a95ULL);
  for (std::size_t j = 0; j < dim_; ++j) {
    state = splitmix64(state);
    e[static_cast<Eigen::Index>(j)] =
        static_cast<float>((state >> 11) * (2.0 / 9007199254740992.0) - 1.0);
  }
  return e;
}

VectorXf StubEncoder::base_features(std::span<const TokenId> tokens) const {
  if (tokens.empty())
    throw std::invalid_argument("cannot encode an empty chunk");
  if (tokens.size() > max_tokens_)
    throw std::invalid_argument(
        "chunk length " + std::to_string(tokens.size()) +
        " exceeds backend max_tokens " + std::to_string(max_tokens_));
  ++encode_calls_;
  VectorXf z = VectorXf::Zero(dim_);
  for (TokenId t : tokens) z += token_embedding(t);
  z /= static_cast<float>(tokens.size());
  return z;
}

std::vector<LoraTargetInfo> StubEncoder::lora_targets() const {
  return {{"query", dim_, dim_}, {"value", dim_, dim_}};
}

void StubEncoder::attach(std::shared_ptr<const AdapterState> state) {
  if (state) {
    for (const auto& t : state->targets) {
      if (t.shape.name != "query" && t.shape.name != "value")
        throw ConfigError("unknown target matrix \"" + t.shape.name + "\"");
      if (t.shape.d_in != dim_ || t.shape.d_out != dim_)
        throw ConfigError("adapter target \"" + t.shape.name +
                          "\" dims do not match backend hidden_dim " +
                          std::to_string(dim_));
    }
  }
  adapters_ = std::move(state);
}

VectorXf StubEncoder::project(const VectorXf& base,
                              std::unique_ptr<EncodeTrace>* trace,
                              const ProjectOptions& opts) const {
  if (static_cast<std::size_t>(base.size()) != dim_)
    throw std::invalid_argument("base feature dimension mismatch");

  auto t = trace ? std::make_unique<StubTrace>() : nullptr;
  const float s = adapters_ ? adapters_->spec.scaling() : 0.0f;
  const AdapterTarget* q = adapters_ ? adapters_->find("query") : nullptr;
  const AdapterTarget* v = adapters_ ? adapters_->find("value") : nullptr;

  VectorXf u = query_proj_ * base;
  if (q) {
    VectorXf zd = apply_dropout(base, opts, nullptr);
    VectorXf q_mid = q->weights.A * zd;
    u += s * (q->weights.B * q_mid);
    if (t) {
      t->has_query = true;
      t->zd = std::move(zd);
      t->q_mid = std::move(q_mid);
    }
  }
  VectorXf a = u.array().tanh();
  VectorXf h = value_proj_ * a;
  if (v) {
    VectorXf mask_a;
    VectorXf ad = apply_dropout(a, opts, &mask_a);
    VectorXf v_mid = v->weights.A * ad;
    h += s * (v->weights.B * v_mid);
    if (t) {
      t->has_value = true;
      t->ad = std::move(ad);
      t->v_mid = std::move(v_mid);
      t->mask_a = std::move(mask_a);
    }
  }
  if (t) t->a = a;

  if (mode_ == PoolingMode::backend_native) {
    float norm = h.norm();
    if (norm > 0.0f) {
      h /= norm;
      if (t) {
        t->normalized = true;
        t->h_hat = h;
        t->inv_norm = 1.0f / norm;
      }
    }
  }
  if (trace) *trace = std::move(t);
  return h;
}

VectorXf StubEncoder::encode_chunk(const TokenChunk& chunk) const {
  return project(base_features(chunk.tokens), nullptr);
}

void StubEncoder::backward(const EncodeTrace& trace, const VectorXf& dh,
                           AdapterGradients& grads) const {
  if (!adapters_)
    throw std::logic_error("backward called without attached adapters");
  const auto& t = dynamic_cast<const StubTrace&>(trace);
  const float s = adapters_->spec.scaling();

  VectorXf dh_pre = dh;
  if (t.normalized)
    dh_pre = t.inv_norm * (dh - t.h_hat * t.h_hat.dot(dh));

  VectorXf da = value_proj_.transpose() * dh_pre;
  for (std::size_t i = 0; i < adapters_->targets.size(); ++i) {
    const auto& target = adapters_->targets[i];
    auto& g = grads.per_target[i];
    if (target.shape.name == "value" && t.has_value) {
      VectorXf bt_dh = target.weights.B.transpose() * dh_pre; // r
      g.B.noalias() += s * (dh_pre * t.v_mid.transpose());
      g.A.noalias() += s * (bt_dh * t.ad.transpose());
      VectorXf branch = s * (target.weights.A.transpose() * bt_dh);
      if (t.mask_a.size() > 0) branch = t.mask_a.cwiseProduct(branch);
      da += branch;
    }
  }
  VectorXf du =
      da.cwiseProduct((VectorXf::Ones(t.a.size()) - t.a.cwiseProduct(t.a)));
  for (std::size_t i = 0; i < adapters_->targets.size(); ++i) {
    const auto& target = adapters_->targets[i];
    auto& g = grads.per_target[i];
    if (target.shape.name == "query" && t.has_query) {
      VectorXf bt_du = target.weights.B.transpose() * du; // r
      g.B.noalias() += s * (du * t.q_mid.transpose());
      g.A.noalias() += s * (bt_du * t.zd.transpose());
    }
  }
}

std::string StubEncoder::base_checksum() const {
  std::string bytes;
  auto append = [&bytes](const RowMatrixXf& m) {
    bytes.append(reinterpret_cast<const char*>(m.data()),
                 sizeof(float) * static_cast<std::size_t>(m.size()));
  };
  append(query_proj_);
  append(value_proj_);
  return sha256_hex(bytes);
}

std::unique_ptr<StubEncoder> make_backend(const std::string& name,
                                          std::uint64_t seed) {
  if (name == "stub")
    return std::make_unique<StubEncoder>("stub", 128, seed,
                                         PoolingMode::cls_token);
  if (name == "stub-large")
    return std::make_unique<StubEncoder>("stub-large", 192, seed,
                                         PoolingMode::backend_native);
  throw ConfigError("unknown backend \"" + name +
                    "\" (available: stub, stub-large)");
}

// ---------------------------------------------------------------------------
// Chunk matrices and pooling
// ---------------------------------------------------------------------------

ChunkMatrix encode_chunkset(const ChunkSet& cs, const EncoderBackend& backend) {
  if (cs.chunks.empty())
    throw std::invalid_argument("cannot encode an empty chunk set");
  ChunkMatrix H;
  H.values.resize(static_cast<Eigen::Index>(cs.chunks.size()),
                  static_cast<Eigen::Index>(backend.hidden_dim()));
  for (std::size_t i = 0; i < cs.chunks.size(); ++i) {
    H.values.row(static_cast<Eigen::Index>(i)) =
        backend.encode_chunk(cs.chunks[i]).transpose();
    H.chunk_refs.emplace_back(cs.chunks[i].start, cs.chunks[i].end);
  }
  return H;
}

UserEmbedding mean_pool(const ChunkMatrix& H) {
  if (H.rows() == 0) throw std::invalid_argument("mean_pool of empty matrix");
  UserEmbedding out;
  out.aggregation = Aggregation::mean;
  VectorXf sum = VectorXf::Zero(static_cast<Eigen::Index>(H.dim()));
  for (std::size_t i = 0; i < H.rows(); ++i)
    sum += H.values.row(static_cast<Eigen::Index>(i)).transpose();
  out.vector = sum / static_cast<float>(H.rows());
  return out;
}

UserEmbedding max_pool(const ChunkMatrix& H) {
  if (H.rows() == 0) throw std::invalid_argument("max_pool of empty matrix");
  UserEmbedding out;
  out.aggregation = Aggregation::max;
  out.vector = H.values.row(0).transpose();
  for (std::size_t i = 1; i < H.rows(); ++i)
    out.vector =
        out.vector.cwiseMax(H.values.row(static_cast<Eigen::Index>(i)).transpose());
  return out;
}

UserEmbedding pool(const ChunkMatrix& H, Aggregation aggregation) {
  return aggregation == Aggregation::mean ? mean_pool(H) : max_pool(H);
}

// ---------------------------------------------------------------------------
// Embedding cache
// ---------------------------------------------------------------------------

std::string corpus_sha256(const Corpus& corpus) {
  std::string bytes;
  for (const auto& rec : corpus.records) {
    bytes += serialize_record(rec);
    bytes += '\n';
  }
  return sha256_hex(bytes);
}

std::string embedding_cache_key(const std::string& corpus_sha,
                                const std::string& backend_name,
                                std::size_t chunk_size, double overlap_ratio,
                                const std::string& adapter_id) {
  ordered_json j;
  j["corpus_sha256"] = corpus_sha;
  j["backend"] = backend_name;
  j["chunk_size"] = chunk_size;
  j["overlap_ratio"] = overlap_ratio;
  j["adapter_id"] = adapter_id;
  return sha256_hex(j.dump()).substr(0, 16);
}

const UserChunkEmbeddings*
CorpusEmbeddings::find(const std::string& participant_id) const {
  for (const auto& u : users)
    if (u.participant_id == participant_id) return &u;
  return nullptr;
}

namespace {

void write_cache_entry(const std::filesystem::path& cache_dir,
                       const std::string& key, const CorpusEmbeddings& emb,
                       const ordered_json& provenance) {
  namespace fs = std::filesystem;
  const fs::path final_dir = cache_dir / key;
  if (fs::exists(final_dir)) return;
  const fs::path tmp_dir = cache_dir / (key + ".partial");
  fs::remove_all(tmp_dir);
  fs::create_directories(tmp_dir);

  std::size_t total_rows = 0;
  ordered_json participants = ordered_json::array();
  {
    std::ofstream bin(tmp_dir / "matrix.bin", std::ios::binary);
    for (const auto& u : emb.users) {
      ordered_json pj;
      pj["id"] = u.participant_id;
      pj["row_begin"] = total_rows;
      total_rows += u.matrix.rows();
      pj["row_end"] = total_rows;
      ordered_json chunks = ordered_json::array();
      for (auto [b, e] : u.matrix.chunk_refs)
        chunks.push_back(ordered_json::array({b, e}));
      pj["chunks"] = std::move(chunks);
      participants.push_back(std::move(pj));
      bin.write(reinterpret_cast<const char*>(u.matrix.values.data()),
                static_cast<std::streamsize>(sizeof(float) *
                                             u.matrix.rows() * u.matrix.dim()));
    }
  }
  ordered_json manifest;
  manifest["rows"] = total_rows;
  manifest["dim"] = emb.dim;
  manifest["participants"] = std::move(participants);
  manifest["provenance"] = provenance;
  std::ofstream mf(tmp_dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
  mf.close();

  std::error_code ec;
  fs::rename(tmp_dir, final_dir, ec);
  if (ec) fs::remove_all(tmp_dir); // another writer won the key
}

std::optional<CorpusEmbeddings>
load_cache_entry(const std::filesystem::path& cache_dir, const std::string& key,
                 const ordered_json& expected_provenance) {
  namespace fs = std::filesystem;
  const fs::path dir = cache_dir / key;
  if (!fs::exists(dir / "manifest.json") || !fs::exists(dir / "matrix.bin"))
    return std::nullopt;

  ordered_json manifest;
  try {
    std::ifstream mf(dir / "manifest.json");
    mf >> manifest;
  } catch (...) {
    return std::nullopt;
  }
  if (!manifest.contains("provenance") ||
      manifest["provenance"] != expected_provenance)
    return std::nullopt;

  CorpusEmbeddings out;
  out.cache_key = key;
  out.loaded_from_cache = true;
  out.dim = manifest.at("dim").get<std::size_t>();
  const auto total_rows = manifest.at("rows").get<std::size_t>();

  std::ifstream bin(dir / "matrix.bin", std::ios::binary);
  std::vector<float> buf(total_rows * out.dim);
  bin.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(sizeof(float) * buf.size()));
  if (static_cast<std::size_t>(bin.gcount()) != sizeof(float) * buf.size())
    return std::nullopt;

  for (const auto& pj : manifest.at("participants")) {
    UserChunkEmbeddings u;
    u.participant_id = pj.at("id").get<std::string>();
    const auto b = pj.at("row_begin").get<std::size_t>();
    const auto e = pj.at("row_end").get<std::size_t>();
    if (e < b || e > total_rows) return std::nullopt;
    u.matrix.values.resize(static_cast<Eigen::Index>(e - b),
                           static_cast<Eigen::Index>(out.dim));
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(b * out.dim),
              buf.begin() + static_cast<std::ptrdiff_t>(e * out.dim),
              u.matrix.values.data());
    for (const auto& c : pj.at("chunks"))
      u.matrix.chunk_refs.emplace_back(c.at(0).get<std::size_t>(),
                                       c.at(1).get<std::size_t>());
    out.users.push_back(std::move(u));
  }
  return out;
}

} // namespace

CorpusEmbeddings encode_corpus(const Corpus& corpus,
                               const EncoderBackend& backend,
                               Tokenizer& tokenizer, std::size_t chunk_size,
                               double overlap_ratio,
                               const std::optional<std::filesystem::path>&
                                   cache_dir,
                               const std::string& adapter_id) {
  if (chunk_size > backend.max_tokens())
    throw ConfigError("chunk_size " + std::to_string(chunk_size) +
                      " exceeds backend max_tokens " +
                      std::to_string(backend.max_tokens()));

  const std::string corpus_sha = corpus_sha256(corpus);
  const std::string key = embedding_cache_key(
      corpus_sha, backend.name(), chunk_size, overlap_ratio, adapter_id);

  ordered_json provenance;
  provenance["corpus_sha256"] = corpus_sha;
  provenance["backend"] = backend.name();
  provenance["chunk_size"] = chunk_size;
  provenance["overlap_ratio"] = overlap_ratio;
  provenance["adapter_id"] = adapter_id;

  if (cache_dir) {
    if (auto cached = load_cache_entry(*cache_dir, key, provenance))
      return std::move(*cached);
  }

  CorpusEmbeddings out;
  out.cache_key = key;
  out.dim = backend.hidden_dim();
  for (const auto& rec : corpus.records) {
    UserChunkEmbeddings u;
    u.participant_id = rec.transcript.participant_id;
    auto cs = chunk_transcript(rec.transcript, chunk_size, overlap_ratio,
                               tokenizer);
    u.matrix = encode_chunkset(cs, backend);
    out.users.push_back(std::move(u));
  }
  if (cache_dir) write_cache_entry(*cache_dir, key, out, provenance);
  return out;
}

} // namespace mhscreen
