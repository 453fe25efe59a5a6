#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mhscreen {

enum class Disorder { mde, ptsd, anxiety };

inline constexpr std::array<Disorder, 3> kAllDisorders = {
    Disorder::mde, Disorder::ptsd, Disorder::anxiety};

const std::string& disorder_name(Disorder d);
// Display label used in report tables (Depression / PTSD / Anxiety).
const std::string& disorder_label(Disorder d);
Disorder parse_disorder(const std::string& name);

// The five interview prompts, in the order every transcript follows.
enum class PromptKind {
  daily_activities,
  difficult_experience,
  emotion_regulation,
  negative_event,
  positive_event,
};

inline constexpr std::array<PromptKind, 5> kPromptOrder = {
    PromptKind::daily_activities, PromptKind::difficult_experience,
    PromptKind::emotion_regulation, PromptKind::negative_event,
    PromptKind::positive_event};

const std::string& prompt_kind_name(PromptKind k);
PromptKind parse_prompt_kind(const std::string& name);

struct Section {
  PromptKind kind;
  std::string text;
};

// Any field may be absent; absence is kept explicit, never imputed.
struct Demographics {
  std::optional<std::string> age_bracket;
  std::optional<std::string> sex;
  std::optional<std::string> race;
  std::optional<std::string> education;

  bool empty() const { return !age_bracket && !sex && !race && !education; }
};

struct Transcript {
  std::string participant_id;
  std::vector<Section> sections; // always 5, in kPromptOrder
  Demographics demographics;

  // Sections concatenated in prompt order, separated by single newlines.
  std::string full_text() const;
};

struct LabelSet {
  int mde = 0;
  int ptsd = 0;
  int anxiety = 0;

  int get(Disorder d) const;
};

struct CorpusRecord {
  Transcript transcript;
  LabelSet labels;
};

struct Provenance {
  std::string source_tag;
  std::optional<std::uint64_t> generator_seed;
};

struct Corpus {
  std::vector<CorpusRecord> records;
  Provenance provenance;

  std::size_t size() const { return records.size(); }
  std::map<std::string, LabelSet> label_map() const;
  std::size_t positive_count(Disorder d) const;
};

// JSONL corpus file, one self-contained record per line:
//   {"participant_id": str,
//    "sections": [{"kind": str, "text": str} x5],
//    "labels": {"mde":0|1, "ptsd":0|1, "anxiety":0|1},
//    "demographics": {optional fields}}
// Throws DataError with the offending line number on malformed input or any
// invariant violation (duplicate ids, wrong section order, empty text,
// non-binary or missing labels).
Corpus load_corpus(const std::filesystem::path& path);

// Serialization is canonical: fixed key order, no whitespace, one '\n' per
// record. save(load(save(c))) is byte-identical to save(c).
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_record(const CorpusRecord& record);

struct SynthConfig {
  std::size_t n_participants = 100;
  std::array<double, 3> positive_rate = {0.2, 0.2, 0.2}; // mde, ptsd, anxiety
  std::uint64_t seed = 0;
  // Mean transcript length in words across all five sections.
  std::size_t target_words = 2955;
};

// Deterministic synthetic corpus. Labels are independent Bernoulli draws per
// disorder. Each labeled-positive transcript embeds marker phrases from the
// disorder's lexicon (per-section injection probability 0.9; negatives 0.05),
// which makes the labels learnable by every downstream method.
Corpus generate_synthetic(const SynthConfig& cfg);

// Fixed lexicon of disorder-specific marker phrases. Shared with the
// rule-based zero-shot stub client and with the keyword oracle in tests.
const std::vector<std::string>& marker_phrases(Disorder d);

// User-level split: no participant appears in both halves.
// |train| = floor(train_fraction * n + 0.5), remainder to test.
std::pair<Corpus, Corpus> split_users(const Corpus& corpus,
                                      double train_fraction,
                                      std::uint64_t seed);

// Duplicates minority-class records (sampling with replacement) until class
// counts for `disorder` are equal, then shuffles deterministically. Requires
// at least one record of each class.
Corpus upsample(const Corpus& train, Disorder disorder, std::uint64_t seed);

} // namespace mhscreen
