#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mhscreen/adapt.hpp"
#include "mhscreen/corpus.hpp"
#include "mhscreen/heads.hpp"

namespace mhscreen {

// Flat config document: one `key = value` pair per line with dotted section
// keys, `#` comments, blank lines ignored. Flat keys keep sweep-grid diffs
// greppable.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::filesystem::path& path);

struct ExperimentConfig {
  std::string method; // zeroshot | lora_finetune | embed_classify
  std::filesystem::path corpus_path;
  std::vector<Disorder> disorders{kAllDisorders.begin(), kAllDisorders.end()};

  std::size_t chunk_size = 0; // required > 0 for encoder methods
  double overlap_ratio = 0.5;

  std::string backend = "stub";
  std::uint64_t backend_seed = 7;
  Aggregation aggregation = Aggregation::mean;

  HeadConfig head;
  LoraSpec lora;
  TrainConfig train;

  double split_fraction = 0.8;
  std::uint64_t split_seed = 13;
  // Unset picks the method default: on for lora_finetune, off otherwise.
  std::optional<bool> upsample_train;

  double threshold = 0.5;
  std::string zeroshot_client = "marker-stub"; // marker-stub | http
  std::string zeroshot_scope = "test";         // test | all

  std::uint64_t seed = 0; // feeds training and head fits

  std::filesystem::path out_dir = "out";
  // "none" in the config disables the embedding cache; unset means
  // <out_dir>/cache.
  std::optional<std::filesystem::path> cache_dir;

  bool upsample_effective() const {
    return upsample_train.value_or(method == "lora_finetune");
  }

  // Strict parse: unknown keys and unparsable values raise ConfigError
  // listing every offender.
  static ExperimentConfig from_map(const ConfigMap& map);

  // Enumerates every violated key in one ConfigError.
  void validate() const;

  // Resolved snapshot of every field, as config keys.
  ConfigMap to_map() const;

  // Content hash of the resolved config minus output and cache locations,
  // so reports and caches are collision-addressable.
  std::string run_id() const;
};

} // namespace mhscreen
