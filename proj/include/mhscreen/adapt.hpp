#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mhscreen/corpus.hpp"
#include "mhscreen/chunker.hpp"
#include "mhscreen/linalg.hpp"

namespace mhscreen {

class TrainableBackend;
class DifferentiableHead;

// Low-rank adaptation hyperparameters. The update to a frozen projection W is
// scaling * B * A with A in R^{r x d_in} (Gaussian init) and B in
// R^{d_out x r} (zero init), so a freshly attached adapter is the identity.
struct LoraSpec {
  int rank = 8;
  float alpha = 16.0f; // default 2 * rank
  float dropout = 0.1f;
  std::vector<std::string> target_matrices = {"query", "value"};

  float scaling() const { return alpha / static_cast<float>(rank); }
  void validate() const;
};

struct TargetShape {
  std::string name;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
};

struct AdapterMatrices {
  RowMatrixXf A; // rank x d_in
  RowMatrixXf B; // d_out x rank
};

struct TrainingMeta {
  int epochs = 0;
  std::uint64_t seed = 0;
  float final_loss = 0.0f;
  std::vector<float> epoch_losses; // full-data loss at the end of each epoch
};

struct AdapterTarget {
  TargetShape shape;
  AdapterMatrices weights;
};

struct AdapterState {
  LoraSpec spec;
  Disorder disorder = Disorder::mde;
  std::vector<AdapterTarget> targets;
  TrainingMeta meta;

  const AdapterTarget* find(const std::string& name) const;
  // Content hash of spec + weights; used as the cache key component.
  std::string id() const;
};

// Gradient buffers aligned with AdapterState::targets.
struct AdapterGradients {
  std::vector<AdapterMatrices> per_target;

  void init_like(const AdapterState& state);
  void zero();
};

struct TrainConfig {
  int batch_size = 8;
  float learning_rate = 2e-5f;
  int epochs = 10;
  std::uint64_t seed = 0;
  float weight_decay = 0.01f;
  // Fraction of train carved out for best-epoch selection by F1; 0 disables.
  float validation_fraction = 0.1f;

  void validate() const;
};

// Creates zero-initialized adapters for spec.target_matrices and attaches
// them to the backend. The base weights stay frozen; with B = 0 the adapted
// forward pass equals the base forward pass. Unknown target names raise
// ConfigError.
std::shared_ptr<AdapterState> attach_adapters(TrainableBackend& backend,
                                              const LoraSpec& spec,
                                              Disorder disorder,
                                              std::uint64_t seed = 0);

// Adapter parameters: sum over targets of rank * (d_in + d_out). When a head
// is supplied its parameters are included.
std::size_t count_trainable(const AdapterState& state,
                            const DifferentiableHead* head = nullptr);

// One labeled participant, pre-chunked.
struct TrainSample {
  std::string participant_id;
  std::vector<TokenChunk> chunks;
  int label = 0;
};

enum class Aggregation { mean, max };
Aggregation parse_aggregation(const std::string& name);
const std::string& aggregation_name(Aggregation a);

struct TrainResult {
  std::shared_ptr<AdapterState> state;
  float initial_loss = 0.0f;
  std::optional<float> best_validation_f1;
};

// Joint LoRA + head training with binary cross-entropy over pooled chunk
// embeddings. Attaches fresh adapters, then runs minibatch AdamW over the
// adapter and head parameters; the backend base weights are never touched.
// Deterministic given cfg.seed. Throws TrainError naming the epoch if the
// loss becomes non-finite, std::invalid_argument on empty data.
TrainResult train_adapter(TrainableBackend& backend, const LoraSpec& spec,
                          DifferentiableHead& head,
                          const std::vector<TrainSample>& data,
                          const TrainConfig& cfg, Disorder disorder,
                          Aggregation aggregation = Aggregation::mean);

// Adapter persistence: <dir>/spec.json + <dir>/weights.bin (A then B per
// target, row-major 32-bit floats, in spec.json target order).
void save_adapter(const AdapterState& state, const std::filesystem::path& dir);
AdapterState load_adapter(const std::filesystem::path& dir);

} // namespace mhscreen
