#include "mhscreen/corpus.hpp"

#include <algorithm>
#include <cctype>
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

const std::array<std::string, 3> kDisorderNames = {"mde", "ptsd", "anxiety"};
const std::array<std::string, 3> kDisorderLabels = {"Depression", "PTSD",
                                                    "Anxiety"};
const std::array<std::string, 5> kPromptNames = {
    "daily_activities", "difficult_experience", "emotion_regulation",
    "negative_event", "positive_event"};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

} // namespace

const std::string& disorder_name(Disorder d) {
  return kDisorderNames[static_cast<int>(d)];
}

const std::string& disorder_label(Disorder d) {
  return kDisorderLabels[static_cast<int>(d)];
}

Disorder parse_disorder(const std::string& name) {
  for (auto d : kAllDisorders)
    if (kDisorderNames[static_cast<int>(d)] == name) return d;
  throw std::invalid_argument("unknown disorder: " + name);
}

const std::string& prompt_kind_name(PromptKind k) {
  return kPromptNames[static_cast<int>(k)];
}

PromptKind parse_prompt_kind(const std::string& name) {
  for (auto k : kPromptOrder)
    if (kPromptNames[static_cast<int>(k)] == name) return k;
  throw std::invalid_argument("unknown prompt kind: " + name);
}

std::string Transcript::full_text() const {
  std::string out;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (i) out += '\n';
    out += sections[i].text;
  }
  return out;
}

int LabelSet::get(Disorder d) const {
  switch (d) {
    case Disorder::mde: return mde;
    case Disorder::ptsd: return ptsd;
    case Disorder::anxiety: return anxiety;
  }
  return 0;
}

std::map<std::string, LabelSet> Corpus::label_map() const {
  std::map<std::string, LabelSet> out;
  for (const auto& r : records) out[r.transcript.participant_id] = r.labels;
  return out;
}

std::size_t Corpus::positive_count(Disorder d) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.labels.get(d) == 1;
  return n;
}

// ---------------------------------------------------------------------------
// JSONL ingestion
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
  throw DataError("line " + std::to_string(line_no) + ": " + what);
}

void check_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                std::size_t line_no, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) line_error(line_no, "unexpected key \"" + it.key() + "\" in " + where);
  }
}

int parse_label(const ordered_json& labels, const char* key, std::size_t line_no) {
  if (!labels.contains(key))
    line_error(line_no, std::string("missing label field \"") + key + "\"");
  const auto& v = labels.at(key);
  if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
    line_error(line_no, std::string("label \"") + key + "\" must be 0 or 1");
  return v.get<int>();
}

CorpusRecord parse_record(const std::string& line, std::size_t line_no) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    line_error(line_no, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) line_error(line_no, "record is not a JSON object");
  check_keys(j, {"participant_id", "sections", "labels", "demographics"},
             line_no, "record");

  CorpusRecord rec;
  if (!j.contains("participant_id") || !j.at("participant_id").is_string() ||
      j.at("participant_id").get<std::string>().empty())
    line_error(line_no, "participant_id must be a non-empty string");
  rec.transcript.participant_id = j.at("participant_id").get<std::string>();

  if (!j.contains("sections") || !j.at("sections").is_array())
    line_error(line_no, "sections must be an array");
  const auto& sections = j.at("sections");
  if (sections.size() != kPromptOrder.size())
    line_error(line_no, "expected 5 sections, got " +
                            std::to_string(sections.size()));
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const auto& s = sections.at(i);
    if (!s.is_object() || !s.contains("kind") || !s.contains("text"))
      line_error(line_no, "section " + std::to_string(i) +
                              " must have \"kind\" and \"text\"");
    check_keys(s, {"kind", "text"}, line_no, "section " + std::to_string(i));
    PromptKind kind;
    try {
      kind = parse_prompt_kind(s.at("kind").get<std::string>());
    } catch (const std::invalid_argument& e) {
      line_error(line_no, e.what());
    }
    if (kind != kPromptOrder[i])
      line_error(line_no, "section " + std::to_string(i) + " must be \"" +
                              prompt_kind_name(kPromptOrder[i]) + "\", got \"" +
                              prompt_kind_name(kind) + "\"");
    std::string text = s.at("text").get<std::string>();
    if (trim(text).empty())
      line_error(line_no, "section \"" + prompt_kind_name(kind) + "\" is empty");
    rec.transcript.sections.push_back({kind, std::move(text)});
  }

  if (!j.contains("labels") || !j.at("labels").is_object())
    line_error(line_no, "labels must be an object");
  const auto& labels = j.at("labels");
  check_keys(labels, {"mde", "ptsd", "anxiety"}, line_no, "labels");
  rec.labels.mde = parse_label(labels, "mde", line_no);
  rec.labels.ptsd = parse_label(labels, "ptsd", line_no);
  rec.labels.anxiety = parse_label(labels, "anxiety", line_no);

  if (j.contains("demographics")) {
    const auto& demo = j.at("demographics");
    if (!demo.is_object()) line_error(line_no, "demographics must be an object");
    check_keys(demo, {"age_bracket", "sex", "race", "education"}, line_no,
               "demographics");
    auto get_opt = [&](const char* key) -> std::optional<std::string> {
      if (!demo.contains(key)) return std::nullopt;
      if (!demo.at(key).is_string())
        line_error(line_no, std::string("demographics.") + key +
                                " must be a string");
      return demo.at(key).get<std::string>();
    };
    rec.transcript.demographics.age_bracket = get_opt("age_bracket");
    rec.transcript.demographics.sex = get_opt("sex");
    rec.transcript.demographics.race = get_opt("race");
    rec.transcript.demographics.education = get_opt("education");
  }
  return rec;
}

} // namespace

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path.string());

  Corpus corpus;
  corpus.provenance.source_tag = "file:" + path.filename().string();

  std::map<std::string, std::size_t> seen; // id -> first line
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) line_error(line_no, "blank line in corpus file");
    CorpusRecord rec = parse_record(line, line_no);
    auto [it, inserted] =
        seen.emplace(rec.transcript.participant_id, line_no);
    if (!inserted)
      line_error(line_no, "duplicate participant_id \"" +
                              rec.transcript.participant_id +
                              "\" (first seen at line " +
                              std::to_string(it->second) + ")");
    corpus.records.push_back(std::move(rec));
  }
  if (corpus.records.empty())
    throw DataError("corpus file has no records: " + path.string());
  return corpus;
}

std::string serialize_record(const CorpusRecord& record) {
  ordered_json j;
  j["participant_id"] = record.transcript.participant_id;
  ordered_json sections = ordered_json::array();
  for (const auto& s : record.transcript.sections) {
    ordered_json sec;
    sec["kind"] = prompt_kind_name(s.kind);
    sec["text"] = s.text;
    sections.push_back(std::move(sec));
  }
  j["sections"] = std::move(sections);
  j["labels"] = {{"mde", record.labels.mde},
                 {"ptsd", record.labels.ptsd},
                 {"anxiety", record.labels.anxiety}};
  const auto& demo = record.transcript.demographics;
  if (!demo.empty()) {
    ordered_json d;
    if (demo.age_bracket) d["age_bracket"] = *demo.age_bracket;
    if (demo.sex) d["sex"] = *demo.sex;
    if (demo.race) d["race"] = *demo.race;
    if (demo.education) d["education"] = *demo.education;
    j["demographics"] = std::move(d);
  }
  return j.dump();
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write corpus file: " + path.string());
  for (const auto& rec : corpus.records) out << serialize_record(rec) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

// Mundane daily-life vocabulary. Deliberately disjoint from the distinctive
// words of the marker lexicons below so that the markers stay the only
// label-bearing signal.
const std::vector<std::string> kFillerWords = {
    "the",     "and",     "then",    "we",       "went",    "to",
    "a",       "bit",     "of",      "time",     "with",    "my",
    "after",   "that",    "before",  "lunch",    "coffee",  "walked",
    "around",  "house",   "garden",  "kitchen",  "table",   "morning",
    "evening", "weekend", "friends", "family",   "called",  "talked",
    "about",   "plans",   "for",     "next",     "week",    "watched",
    "some",    "television", "read", "book",     "chapter", "cooked",
    "dinner",  "cleaned", "up",      "dishes",   "laundry", "errands",
    "grocery", "store",   "picked",  "kids",     "from",    "school",
    "played",  "outside", "weather", "was",      "pretty",  "mild",
    "drove",   "into",    "town",    "traffic",  "light",   "music",
    "radio",   "podcast", "while",   "commuting", "office", "meeting",
    "project", "deadline", "emails", "colleague", "helped", "finish",
    "report",  "took",    "break",   "stretch",  "water",   "snack",
    "afternoon", "slow",  "caught",  "on",       "chores",  "paid",
    "bills",   "budget",  "month",   "planning", "trip",    "visit",
    "parents", "sister",  "brother", "cousin",   "birthday", "party",
    "cake",    "games",   "laughed", "lot",      "stories", "old",
    "photos",  "shared",  "recipes", "tried",    "new",     "pasta",
    "turned",  "out",     "fine",    "usual",    "routine", "settled",
    "down",    "early",   "night",   "slept",    "okay",    "woke",
    "once",    "twice",   "back",    "asleep",   "alarm",   "snoozed",
    "shower",  "breakfast", "toast", "eggs",     "juice",   "news",
    "headlines", "quick", "walk",    "dog",      "park",    "bench",
    "neighbors", "waved", "chatted", "fence",    "mail",    "package",
    "arrived", "ordered", "online",  "returned", "item",    "refund"};

// One opening sentence per prompt, so sections read on-topic.
const std::array<std::string, 5> kSectionOpeners = {
    "Yesterday started early with the usual routine.",
    "The hardest part of this year was a situation at work.",
    "When things pile up I try to talk them through with someone.",
    "Last week something unpleasant happened on the commute.",
    "A bright spot recently was a small gathering with family."};

// Each lexicon leans on a small core of repeated distinctive words so the
// phrases point in a tight embedding direction while staying searchable as
// literal strings.
const std::array<std::vector<std::string>, 3> kMarkerLexicon = {{
    // mde
    {"everything feels hopeless and empty lately",
     "i feel hopeless worthless and empty inside",
     "a heavy hopeless emptiness drags me down",
     "worthless empty and hopeless every single day",
     "this heavy sadness feels hopeless and endless",
     "no joy anymore just hopeless empty heaviness"},
    // ptsd
    {"flashbacks and nightmares haunt me constantly",
     "nightmares and flashbacks wake me screaming",
     "always on edge scanning everywhere for danger",
     "loud noises trigger flashbacks and panic",
     "i avoid places that trigger the nightmares",
     "intrusive flashbacks and nightmares never stop"},
    // anxiety
    {"my heart keeps racing over small things",
     "constant worry and dread i cannot switch off",
     "dread knots my stomach every morning",
     "racing thoughts and constant worry at night",
     "restless tense and full of worry no matter what",
     "waves of panic and dread build out of nowhere"},
}};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(s[0]));
  return s;
}

std::string make_sentence(std::mt19937_64& rng, std::size_t n_words) {
  std::string s;
  for (std::size_t i = 0; i < n_words; ++i) {
    if (i) s += ' ';
    s += kFillerWords[rand_index(rng, kFillerWords.size())];
  }
  s = capitalize(s);
  s += '.';
  return s;
}

std::optional<std::string> sample_demographic(std::mt19937_64& rng,
                                              const std::vector<std::string>& pool,
                                              double missing_prob) {
  if (std::uniform_real_distribution<double>(0, 1)(rng) < missing_prob)
    return std::nullopt;
  return pool[rand_index(rng, pool.size())];
}

} // namespace

const std::vector<std::string>& marker_phrases(Disorder d) {
  return kMarkerLexicon[static_cast<int>(d)];
}

Corpus generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_participants < 1)
    throw std::invalid_argument("n_participants must be >= 1");
  for (double r : cfg.positive_rate)
    if (!(r >= 0.0 && r <= 1.0))
      throw std::invalid_argument("positive rate must be in [0,1]");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0, 1);

  const std::vector<std::string> ages = {"<25", "25-34", "35-44", "45-59", "60+"};
  const std::vector<std::string> sexes = {"male", "female"};
  const std::vector<std::string> races = {"white", "other"};
  const std::vector<std::string> education = {"high_school_or_below",
                                              "some_college", "college_or_above"};

  Corpus corpus;
  corpus.provenance.source_tag = "synthetic";
  corpus.provenance.generator_seed = cfg.seed;

  const double words_per_section =
      static_cast<double>(cfg.target_words) / kPromptOrder.size();

  for (std::size_t i = 0; i < cfg.n_participants; ++i) {
    CorpusRecord rec;
    std::ostringstream id;
    id.width(4);
    id.fill('0');
    id << (i + 1);
    rec.transcript.participant_id = id.str();

    for (std::size_t k = 0; k < 3; ++k) {
      int label = unit(rng) < cfg.positive_rate[k] ? 1 : 0;
      if (k == 0) rec.labels.mde = label;
      if (k == 1) rec.labels.ptsd = label;
      if (k == 2) rec.labels.anxiety = label;
    }

    for (std::size_t s = 0; s < kPromptOrder.size(); ++s) {
      // Section length varies +-25% around the per-section mean.
      double scale = 0.75 + 0.5 * unit(rng);
      auto target = static_cast<std::size_t>(
          std::max(12.0, words_per_section * scale));
      std::vector<std::string> sentences;
      sentences.push_back(kSectionOpeners[s]);
      std::size_t words = 7;
      while (words < target) {
        std::size_t len = 6 + rand_index(rng, 11); // 6..16 words
        sentences.push_back(make_sentence(rng, len));
        words += len;
      }
      // Marker injection: per section, probability 0.9 for a positive label,
      // 0.05 for a negative one. An injected section receives a burst of
      // phrases spread across it, strong enough that every chunk of a
      // positive transcript carries signal.
      for (auto d : kAllDisorders) {
        double inject_prob = rec.labels.get(d) == 1 ? 0.9 : 0.05;
        if (unit(rng) < inject_prob) {
          const auto& lex = marker_phrases(d);
          std::size_t burst = 10 + rand_index(rng, 3);
          for (std::size_t b = 0; b < burst; ++b) {
            std::string marker =
                capitalize(lex[rand_index(rng, lex.size())]) + ".";
            std::size_t pos = 1 + rand_index(rng, sentences.size());
            sentences.insert(sentences.begin() + std::min(pos, sentences.size()),
                             std::move(marker));
          }
        }
      }
      std::string text;
      for (std::size_t t = 0; t < sentences.size(); ++t) {
        if (t) text += ' ';
        text += sentences[t];
      }
      rec.transcript.sections.push_back({kPromptOrder[s], std::move(text)});
    }

    rec.transcript.demographics.age_bracket = sample_demographic(rng, ages, 0.0);
    rec.transcript.demographics.sex = sample_demographic(rng, sexes, 0.005);
    rec.transcript.demographics.race = sample_demographic(rng, races, 0.0);
    rec.transcript.demographics.education =
        sample_demographic(rng, education, 0.05);

    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Splits and upsampling
// ---------------------------------------------------------------------------

std::pair<Corpus, Corpus> split_users(const Corpus& corpus,
                                      double train_fraction,
                                      std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must be in (0,1)");
  const std::size_t n = corpus.records.size();
  if (n < 2) throw DataError("cannot split a corpus with fewer than 2 records");

  // Round half up on the train side, remainder to test.
  auto train_n = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n) + 0.5));
  if (train_n < 1 || train_n >= n)
    throw DataError("split would leave an empty side (n=" + std::to_string(n) +
                    ", fraction=" + std::to_string(train_fraction) + ")");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  shuffle_inplace(order, rng);

  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < train_n; ++i) in_train[order[i]] = true;

  Corpus train, test;
  train.provenance = corpus.provenance;
  test.provenance = corpus.provenance;
  for (std::size_t i = 0; i < n; ++i)
    (in_train[i] ? train : test).records.push_back(corpus.records[i]);
  return {std::move(train), std::move(test)};
}

Corpus upsample(const Corpus& train, Disorder disorder, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < train.records.size(); ++i)
    (train.records[i].labels.get(disorder) == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw DataError("cannot upsample \"" + disorder_name(disorder) +
                    "\": a class has zero members (" +
                    std::to_string(pos.size()) + " positive, " +
                    std::to_string(neg.size()) + " negative)");

  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t deficit =
      std::max(pos.size(), neg.size()) - minority.size();

  std::mt19937_64 rng(seed);
  Corpus out;
  out.provenance = train.provenance;
  out.records = train.records;
  for (std::size_t k = 0; k < deficit; ++k)
    out.records.push_back(
        train.records[minority[rand_index(rng, minority.size())]]);
  shuffle_inplace(out.records, rng);
  return out;
}

} // namespace mhscreen
