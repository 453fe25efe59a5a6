#include "mhscreen/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

#include "mhscreen/chunker.hpp"
#include "mhscreen/embed.hpp"
#include "mhscreen/errors.hpp"
#include "mhscreen/hash.hpp"

namespace mhscreen {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string iso_now() {
  const auto t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json_file(const fs::path& p, const ordered_json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

void write_text_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

std::optional<fs::path> effective_cache_dir(const ExperimentConfig& cfg) {
  if (!cfg.cache_dir) return cfg.out_dir / "cache";
  if (cfg.cache_dir->empty()) return std::nullopt; // "none"
  return *cfg.cache_dir;
}

std::string make_tag(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << cfg.method;
  if (cfg.method == "zeroshot") {
    os << " client=" << cfg.zeroshot_client;
  } else {
    os << " backend=" << cfg.backend << " agg="
       << aggregation_name(cfg.aggregation);
  }
  os << " c=" << cfg.chunk_size << " overlap=" << cfg.overlap_ratio;
  if (cfg.method == "lora_finetune") os << " rank=" << cfg.lora.rank;
  if (cfg.method != "zeroshot") os << " head=" << cfg.head.kind;
  os << " seed=" << cfg.seed;
  return os.str();
}

// Remote text-generation endpoint. Configuration comes from the environment
// (MHSCREEN_LLM_ENDPOINT, optional MHSCREEN_LLM_API_KEY); credentials are
// never written to disk. One transport retry, then ClientError.
class HttpLlmClient final : public LlmClient {
public:
  HttpLlmClient();

  const std::string& name() const override { return name_; }
  std::string generate(const std::string& prompt) override;
  bool deterministic() const override { return false; }

private:
  std::string name_ = "http";
  std::string base_;
  std::string path_ = "/generate";
  std::string api_key_;
};

} // namespace

MethodResult run_method(const ExperimentConfig& cfg, const Corpus& corpus,
                        ResponseCache* response_cache) {
  cfg.validate();
  auto [train_c, test_c] =
      split_users(corpus, cfg.split_fraction, cfg.split_seed);
  const auto labels = corpus.label_map();
  const std::string tag = make_tag(cfg);

  MethodResult out;

  if (cfg.method == "zeroshot") {
    const Corpus& scope = cfg.zeroshot_scope == "all" ? corpus : test_c;
    WhitespaceTokenizer tokenizer;
    for (Disorder d : cfg.disorders) {
      auto client = make_client(cfg.zeroshot_client, d);
      auto zr = run_zeroshot(scope, d, cfg.chunk_size, cfg.overlap_ratio,
                             *client, cfg.threshold, tokenizer, tag,
                             response_cache);
      if (!zr.records.empty())
        out.metrics.emplace(d, compute_metrics(zr.records, labels, d));
      out.predictions.insert(out.predictions.end(), zr.records.begin(),
                             zr.records.end());
      out.failures.insert(out.failures.end(), zr.failures.begin(),
                          zr.failures.end());
    }
    return out;
  }

  if (cfg.method == "embed_classify") {
    const auto backend = make_backend(cfg.backend, cfg.backend_seed);
    WhitespaceTokenizer tokenizer;
    const auto emb =
        encode_corpus(corpus, *backend, tokenizer, cfg.chunk_size,
                      cfg.overlap_ratio, effective_cache_dir(cfg));
    std::map<std::string, VectorXf> pooled;
    for (const auto& u : emb.users)
      pooled.emplace(u.participant_id, pool(u.matrix, cfg.aggregation).vector);

    for (std::size_t di = 0; di < cfg.disorders.size(); ++di) {
      const Disorder d = cfg.disorders[di];
      const Corpus train_set =
          cfg.upsample_effective()
              ? upsample(train_c, d, mix_u64(cfg.seed, 0xab5 + di))
              : train_c;

      RowMatrixXf X(train_set.records.size(),
                    Eigen::Index(backend->hidden_dim()));
      std::vector<int> y;
      for (std::size_t i = 0; i < train_set.records.size(); ++i) {
        const auto& rec = train_set.records[i];
        X.row(Eigen::Index(i)) =
            pooled.at(rec.transcript.participant_id).transpose();
        y.push_back(rec.labels.get(d));
      }

      std::shared_ptr<ClassifierHead> head = make_head(cfg.head);
      head->set_threshold(float(cfg.threshold));
      head->fit(X, y, mix_u64(cfg.seed, 0xf17 + di));

      std::vector<PredictionRecord> preds;
      for (const auto& rec : test_c.records) {
        const auto& v = pooled.at(rec.transcript.participant_id);
        const float proba = head->predict_proba(v);
        preds.push_back({rec.transcript.participant_id, d, head->predict(v),
                         double(proba), tag});
      }
      out.metrics.emplace(d, compute_metrics(preds, labels, d));
      out.predictions.insert(out.predictions.end(), preds.begin(),
                             preds.end());
      out.heads.emplace(d, std::move(head));
    }
    return out;
  }

  // lora_finetune
  WhitespaceTokenizer tokenizer;
  for (std::size_t di = 0; di < cfg.disorders.size(); ++di) {
    const Disorder d = cfg.disorders[di];
    const auto backend = make_backend(cfg.backend, cfg.backend_seed);
    const Corpus train_set =
        cfg.upsample_effective()
            ? upsample(train_c, d, mix_u64(cfg.seed, 0xab5 + di))
            : train_c;

    std::vector<TrainSample> samples;
    for (const auto& rec : train_set.records) {
      TrainSample s;
      s.participant_id = rec.transcript.participant_id;
      s.chunks = chunk_transcript(rec.transcript, cfg.chunk_size,
                                  cfg.overlap_ratio, tokenizer)
                     .chunks;
      s.label = rec.labels.get(d);
      samples.push_back(std::move(s));
    }

    std::shared_ptr<ClassifierHead> head = make_head(cfg.head);
    auto* dhead = dynamic_cast<DifferentiableHead*>(head.get());
    if (!dhead)
      throw ConfigError("head.kind: " + cfg.head.kind +
                        " cannot be trained jointly with adapters");

    TrainConfig tc = cfg.train;
    tc.seed = mix_u64(cfg.seed, 0x10a + di);
    auto res = train_adapter(*backend, cfg.lora, *dhead, samples, tc, d,
                             cfg.aggregation);
    dhead->set_threshold(float(cfg.threshold));

    std::vector<PredictionRecord> preds;
    for (const auto& rec : test_c.records) {
      const auto cs = chunk_transcript(rec.transcript, cfg.chunk_size,
                                       cfg.overlap_ratio, tokenizer);
      std::vector<VectorXf> rows;
      for (const auto& ch : cs.chunks)
        rows.push_back(
            backend->project(backend->base_features(ch.tokens), nullptr));
      RowMatrixXf H(Eigen::Index(rows.size()), rows.front().size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        H.row(Eigen::Index(i)) = rows[i].transpose();
      ChunkMatrix cm;
      cm.values = std::move(H);
      const VectorXf v = pool(cm, cfg.aggregation).vector;
      const float proba = dhead->predict_proba(v);
      preds.push_back({rec.transcript.participant_id, d, dhead->predict(v),
                       double(proba), tag});
    }
    out.metrics.emplace(d, compute_metrics(preds, labels, d));
    out.predictions.insert(out.predictions.end(), preds.begin(), preds.end());
    out.adapters.emplace(d, res.state);
    out.heads.emplace(d, std::move(head));
  }
  return out;
}

RunOutput run(const ExperimentConfig& cfg) {
  cfg.validate();
  RunOutput out;
  out.run_id = cfg.run_id();
  out.run_dir = cfg.out_dir / "runs" / out.run_id;
  out.reports_dir = cfg.out_dir / "reports" / out.run_id;
  fs::create_directories(out.run_dir);

  const Corpus corpus = load_corpus(cfg.corpus_path);

  ordered_json manifest;
  manifest["run_id"] = out.run_id;
  manifest["status"] = "running";
  manifest["created_utc"] = iso_now();
  manifest["config"] = ordered_json(cfg.to_map());
  manifest["corpus_sha256"] = corpus_sha256(corpus);
  manifest["seeds"] = {{"global", cfg.seed},
                       {"split", cfg.split_seed},
                       {"backend", cfg.backend_seed}};
  manifest["versions"] = {{"mhscreen", "0.1.0"}};
  manifest["artifacts"] = ordered_json::array();
  const fs::path manifest_path = out.run_dir / "manifest.json";
  write_json_file(manifest_path, manifest);
  auto track = [&](const fs::path& p) {
    const auto rel = fs::relative(p, cfg.out_dir).string();
    out.artifacts.push_back(rel);
    manifest["artifacts"].push_back(rel);
  };
  track(manifest_path);

  try {
    std::optional<ResponseCache> responses;
    if (cfg.method == "zeroshot")
      responses.emplace(out.run_dir / "responses.jsonl");
    auto mr = run_method(cfg, corpus, responses ? &*responses : nullptr);
    if (responses) track(out.run_dir / "responses.jsonl");

    out.predictions = mr.predictions;
    out.metrics = mr.metrics;
    out.failures = mr.failures;

    {
      const fs::path p = out.run_dir / "predictions.jsonl";
      std::ofstream pj(p);
      if (!pj) throw DataError("cannot write " + p.string());
      for (const auto& r : mr.predictions) {
        ordered_json j;
        j["participant_id"] = r.participant_id;
        j["disorder"] = disorder_name(r.disorder);
        j["decision"] = r.decision;
        j["score"] = r.score;
        j["method_tag"] = r.method_tag;
        pj << j.dump() << '\n';
      }
      track(p);
    }

    for (const auto& [d, state] : mr.adapters) {
      const fs::path dir = out.run_dir / "adapters" / disorder_name(d);
      save_adapter(*state, dir);
      track(dir / "spec.json");
      track(dir / "weights.bin");
    }
    for (const auto& [d, head] : mr.heads) {
      const fs::path dir = out.run_dir / "heads" / disorder_name(d);
      head->save(dir);
      track(dir / "head.json");
      track(dir / "params.bin");
    }

    out.grid.layout = TableLayout::main;
    out.grid.add_row(cfg.method);
    for (Disorder d : kAllDisorders) {
      auto it = mr.metrics.find(d);
      out.grid.set(cfg.method, d,
                   it == mr.metrics.end()
                       ? std::optional<MetricsReport>{}
                       : std::optional<MetricsReport>{it->second});
    }
    const fs::path table_path = out.reports_dir / "table_main.txt";
    write_text_file(table_path, render_table(out.grid));
    track(table_path);
    const fs::path csv_path = out.reports_dir / "metrics.csv";
    write_text_file(csv_path, render_csv(out.grid));
    track(csv_path);

    manifest["status"] = mr.failures.empty() ? "complete" : "partial";
    if (!mr.failures.empty()) {
      ordered_json fails = ordered_json::array();
      for (const auto& [id, why] : mr.failures)
        fails.push_back({{"participant_id", id}, {"reason", why}});
      manifest["failures"] = std::move(fails);
    }
    manifest["finished_utc"] = iso_now();
    write_json_file(manifest_path, manifest);
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    manifest["finished_utc"] = iso_now();
    write_json_file(manifest_path, manifest);
    throw;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

TableLayout sweep_layout(const std::string& sweep_kind) {
  if (sweep_kind == "chunk_sizes") return TableLayout::chunk_sweep;
  if (sweep_kind == "ranks") return TableLayout::rank_sweep;
  if (sweep_kind == "heads") return TableLayout::head_sweep;
  if (sweep_kind == "aggregations") return TableLayout::main;
  throw std::invalid_argument(
      "unknown sweep \"" + sweep_kind +
      "\" (chunk_sizes | ranks | heads | aggregations)");
}

AblateOutput ablate(const ExperimentConfig& base, const std::string& sweep_kind,
                    const std::vector<std::string>& values,
                    bool write_artifacts) {
  const TableLayout layout = sweep_layout(sweep_kind);
  if (values.empty())
    throw std::invalid_argument("empty sweep value list");
  if (sweep_kind == "ranks" && base.method != "lora_finetune")
    throw std::invalid_argument("rank sweep requires method lora_finetune");
  if ((sweep_kind == "heads" || sweep_kind == "aggregations") &&
      base.method == "zeroshot")
    throw std::invalid_argument(sweep_kind +
                                " sweep requires an encoder method");

  const Corpus corpus = load_corpus(base.corpus_path);

  AblateOutput out;
  out.grid.layout = layout;
  {
    std::string blob = base.run_id() + "|" + sweep_kind;
    for (const auto& v : values) blob += "|" + v;
    out.run_id = sha256_hex(blob).substr(0, 16);
  }

  const std::string source =
      base.method == "zeroshot" ? base.zeroshot_client : base.backend;

  for (const auto& value : values) {
    ExperimentConfig point = base;
    std::string row;
    if (sweep_kind == "chunk_sizes") {
      point.chunk_size = std::stoul(value);
      row = source + " " + value + " tokens";
    } else if (sweep_kind == "ranks") {
      point.lora.rank = std::stoi(value);
      row = source + " rank=" + value;
    } else if (sweep_kind == "heads") {
      point.head.kind = value;
      row = source + " + " + value;
    } else {
      point.aggregation = parse_aggregation(value);
      row = source + " " + value;
    }
    out.grid.add_row(row);

    try {
      auto mr = run_method(point, corpus);
      for (Disorder d : kAllDisorders) {
        auto it = mr.metrics.find(d);
        out.grid.set(row, d,
                     it == mr.metrics.end()
                         ? std::optional<MetricsReport>{}
                         : std::optional<MetricsReport>{it->second});
      }
    } catch (const std::exception& e) {
      for (Disorder d : kAllDisorders) out.grid.set(row, d, std::nullopt);
      out.failures.emplace_back(row, e.what());
    }
  }

  if (write_artifacts) {
    out.reports_dir = base.out_dir / "reports" / out.run_id;
    const fs::path table_path =
        out.reports_dir / ("table_" + layout_name(layout) + ".txt");
    write_text_file(table_path, render_table(out.grid));
    const fs::path csv_path = out.reports_dir / "metrics.csv";
    write_text_file(csv_path, render_csv(out.grid));

    ordered_json manifest;
    manifest["run_id"] = out.run_id;
    manifest["status"] = out.failures.empty() ? "complete" : "partial";
    manifest["created_utc"] = iso_now();
    manifest["sweep"] = {{"kind", sweep_kind}, {"values", values}};
    manifest["base_config"] = ordered_json(base.to_map());
    ordered_json arts = ordered_json::array();
    arts.push_back(fs::relative(table_path, base.out_dir).string());
    arts.push_back(fs::relative(csv_path, base.out_dir).string());
    manifest["artifacts"] = std::move(arts);
    if (!out.failures.empty()) {
      ordered_json fails = ordered_json::array();
      for (const auto& [row, why] : out.failures)
        fails.push_back({{"row", row}, {"reason", why}});
      manifest["failures"] = std::move(fails);
    }
    write_json_file(base.out_dir / "runs" / out.run_id / "manifest.json",
                    manifest);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clients
// ---------------------------------------------------------------------------

HttpLlmClient::HttpLlmClient() {
  const char* endpoint = std::getenv("MHSCREEN_LLM_ENDPOINT");
  if (!endpoint || !*endpoint)
    throw ClientError(
        "http client requires MHSCREEN_LLM_ENDPOINT to be set");
  std::string full(endpoint);
  const auto scheme = full.find("://");
  const auto path_at =
      scheme == std::string::npos ? full.find('/') : full.find('/', scheme + 3);
  if (path_at == std::string::npos) {
    base_ = full;
  } else {
    base_ = full.substr(0, path_at);
    path_ = full.substr(path_at);
  }
  if (const char* key = std::getenv("MHSCREEN_LLM_API_KEY")) api_key_ = key;
}

std::string HttpLlmClient::generate(const std::string& prompt) {
  httplib::Client http(base_);
  http.set_connection_timeout(10);
  http.set_read_timeout(120);
  httplib::Headers headers;
  if (!api_key_.empty())
    headers.emplace("Authorization", "Bearer " + api_key_);
  const std::string body = ordered_json{{"prompt", prompt}}.dump();

  for (int attempt = 0; attempt < 2; ++attempt) {
    auto res = http.Post(path_, headers, body, "application/json");
    if (!res || res->status != 200) continue;
    try {
      auto j = ordered_json::parse(res->body);
      if (j.contains("text") && j["text"].is_string())
        return j["text"].get<std::string>();
    } catch (const ordered_json::parse_error&) {
    }
  }
  throw ClientError("endpoint " + base_ + " unreachable or returned no text");
}

std::unique_ptr<LlmClient> make_client(const std::string& name,
                                       Disorder disorder) {
  if (name == "marker-stub")
    return std::make_unique<MarkerStubClient>(disorder);
  if (name == "http") return std::make_unique<HttpLlmClient>();
  throw ConfigError("unknown client \"" + name +
                    "\" (available: marker-stub, http)");
}

} // namespace mhscreen
