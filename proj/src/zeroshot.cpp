#include "mhscreen/zeroshot.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "mhscreen/errors.hpp"
#include "mhscreen/hash.hpp"

namespace mhscreen {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
    return char(std::tolower(c));
  });
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string iso_now() {
  const auto t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

const PromptTemplate& PromptTemplate::standard() {
  static const PromptTemplate tpl = {
      "You are an AI assisting mental health professionals in identifying "
      "psychiatric disorders.",
      "Task:\n"
      "Analyze the participant's response and determine whether there are "
      "signs of a psychiatric disorder. Do not include any reasoning or "
      "explanation.",
      "Output Format:\n"
      "Respond with a single-line binary decision:\n"
      "Prediction: Yes\n"
      "Prediction: No"};
  return tpl;
}

std::string render_prompt(const PromptTemplate& tpl,
                          const std::string& response_text) {
  if (response_text.empty())
    throw std::invalid_argument("response_text must be non-empty");
  const std::string quoted = nlohmann::json(response_text).dump();
  return tpl.header + "\n" + "Input Data:\n" + quoted +
         " \xE2\x80\x94 a free-form participant response from a "
         "semi-structured interview.\n" +
         tpl.task_block + "\n" + tpl.output_block + "\n";
}

int parse_verdict(const std::string& response) {
  std::size_t pos = 0;
  while (pos <= response.size()) {
    const auto nl = response.find('\n', pos);
    const auto end = nl == std::string::npos ? response.size() : nl;
    const std::string line = response.substr(pos, end - pos);
    const std::string low = lower(line);
    const auto k = low.find("prediction:");
    if (k != std::string::npos) {
      std::string rest = lower(trim(line.substr(k + 11)));
      while (!rest.empty() && rest.back() == '.') rest.pop_back();
      rest = trim(rest);
      if (rest == "yes") return 1;
      if (rest == "no") return 0;
      throw VerdictParseError(response);
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  throw VerdictParseError(response);
}

// ---------------------------------------------------------------------------
// Clients
// ---------------------------------------------------------------------------

MarkerStubClient::MarkerStubClient(Disorder disorder)
    : disorder_(disorder),
      name_("marker-stub-" + disorder_name(disorder)) {}

std::string MarkerStubClient::generate(const std::string& prompt) {
  ++calls_;
  const std::string low = lower(prompt);
  for (const auto& phrase : marker_phrases(disorder_))
    if (low.find(phrase) != std::string::npos) return "Prediction: Yes";
  return "Prediction: No";
}

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path file)
    : file_(std::move(file)) {
  std::ifstream in(file_);
  if (!in) return; // fresh cache
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries_[{j.at("client").get<std::string>(),
                j.at("prompt_sha256").get<std::string>()}] =
          j.at("response").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed cache line " + std::to_string(line_no) +
                      " in " + file_.string() + ": " + e.what());
    }
  }
}

std::optional<std::string> ResponseCache::lookup(
    const std::string& client, const std::string& prompt_sha) const {
  const auto it = entries_.find({client, prompt_sha});
  if (it == entries_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void ResponseCache::store(const std::string& client,
                          const std::string& prompt_sha,
                          const std::string& response) {
  entries_[{client, prompt_sha}] = response;
  if (file_.has_parent_path())
    std::filesystem::create_directories(file_.parent_path());
  nlohmann::ordered_json j;
  j["client"] = client;
  j["prompt_sha256"] = prompt_sha;
  j["response"] = response;
  j["timestamp"] = iso_now();
  std::ofstream out(file_, std::ios::app);
  if (!out) throw DataError("cannot append to cache " + file_.string());
  out << j.dump() << '\n';
}

std::string ResponseCache::prompt_hash(const std::string& prompt) {
  return sha256_hex(prompt);
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

UserInference infer_user(const Transcript& transcript, std::size_t chunk_size,
                         double overlap_ratio, LlmClient& client,
                         double threshold, Tokenizer& tokenizer,
                         const PromptTemplate& tpl, ResponseCache* cache) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw std::invalid_argument("threshold must lie in (0, 1]");
  const auto tokens = tokenize_transcript(transcript, tokenizer);
  const std::size_t c = chunk_size == 0 ? tokens.size() : chunk_size;
  const double ov = chunk_size == 0 ? 0.0 : overlap_ratio;
  const auto chunks = make_chunks(tokens, c, ov);

  UserInference out;
  double sum = 0.0;
  std::size_t included = 0;
  for (std::size_t i = 0; i < chunks.chunks.size(); ++i) {
    const auto& ch = chunks.chunks[i];
    const std::string prompt = render_prompt(tpl, tokenizer.decode(ch.tokens));
    const std::string sha = cache ? ResponseCache::prompt_hash(prompt) : "";

    std::string response;
    bool cached = false;
    if (cache) {
      if (auto hit = cache->lookup(client.name(), sha)) {
        response = *hit;
        cached = true;
      }
    }
    if (!cached) {
      response = client.generate(prompt);
      if (cache) cache->store(client.name(), sha, response);
    }

    ChunkVerdict v;
    v.chunk_index = i;
    v.chunk_ref = {ch.start, ch.end};
    v.raw_response = response;
    try {
      v.score = parse_verdict(response);
    } catch (const VerdictParseError&) {
      // One retry with the identical prompt; the retry bypasses the cache.
      response = client.generate(prompt);
      if (cache) cache->store(client.name(), sha, response);
      v.raw_response = response;
      try {
        v.score = parse_verdict(response);
      } catch (const VerdictParseError&) {
        v.excluded = true;
        ++out.excluded_chunks;
      }
    }
    if (!v.excluded) {
      sum += v.score;
      ++included;
    }
    out.verdicts.push_back(std::move(v));
  }

  if (included == 0)
    throw ClientError("all " + std::to_string(out.verdicts.size()) +
                      " chunks unparseable for participant \"" +
                      transcript.participant_id + "\"");
  out.mean_score = sum / double(included);
  out.decision = out.mean_score >= threshold ? 1 : 0;
  return out;
}

ZeroshotRun run_zeroshot(const Corpus& corpus, Disorder disorder,
                         std::size_t chunk_size, double overlap_ratio,
                         LlmClient& client, double threshold,
                         Tokenizer& tokenizer, const std::string& method_tag,
                         ResponseCache* cache) {
  if (corpus.records.empty())
    throw std::invalid_argument("run_zeroshot: empty corpus");

  std::string tag = method_tag;
  if (tag.empty()) {
    std::ostringstream os;
    os << "zeroshot client=" << client.name() << " c=" << chunk_size
       << " overlap=" << overlap_ratio << " threshold=" << threshold;
    tag = os.str();
  }

  ZeroshotRun run;
  for (const auto& rec : corpus.records) {
    try {
      const auto inf = infer_user(rec.transcript, chunk_size, overlap_ratio,
                                  client, threshold, tokenizer,
                                  PromptTemplate::standard(), cache);
      run.records.push_back({rec.transcript.participant_id, disorder,
                             inf.decision, inf.mean_score, tag});
    } catch (const ClientError& e) {
      run.failures.emplace_back(rec.transcript.participant_id, e.what());
    }
  }
  return run;
}

} // namespace mhscreen
