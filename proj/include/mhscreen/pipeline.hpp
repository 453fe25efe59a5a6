#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mhscreen/config.hpp"
#include "mhscreen/eval.hpp"
#include "mhscreen/zeroshot.hpp"

namespace mhscreen {

// Builds a client for one disorder. The stub client is disorder-aware; the
// http client ignores the disorder and reads its endpoint from the
// environment (MHSCREEN_LLM_ENDPOINT, optional MHSCREEN_LLM_API_KEY).
std::unique_ptr<LlmClient> make_client(const std::string& name,
                                       Disorder disorder);

struct RunOutput {
  std::string run_id;
  std::filesystem::path run_dir;     // <out>/runs/<run_id>
  std::filesystem::path reports_dir; // <out>/reports/<run_id>
  std::vector<PredictionRecord> predictions;
  std::map<Disorder, MetricsReport> metrics; // held-out split per disorder
  ReportGrid grid;                           // main layout, one row
  std::vector<std::pair<std::string, std::string>> failures;
  std::vector<std::string> artifacts; // relative to out_dir
};

// Executes one experiment end to end: load, split, (upsample), method
// pipeline, eval, reports. The manifest is written with status "running"
// before any result and flipped to "complete" (or "failed") at the end.
// Rerunning an identical config reproduces byte-identical reports.
RunOutput run(const ExperimentConfig& cfg);

// In-memory variant used by run(), ablate(), and tests. Writes nothing
// except the embedding cache (when enabled). The split is recomputed from
// cfg, so every caller with the same corpus and seeds sees identical
// train/test ids.
struct MethodResult {
  std::vector<PredictionRecord> predictions;
  std::map<Disorder, MetricsReport> metrics;
  std::vector<std::pair<std::string, std::string>> failures;
  // Trained artifacts for persistence by run(); empty for zeroshot.
  std::map<Disorder, std::shared_ptr<AdapterState>> adapters;
  std::map<Disorder, std::shared_ptr<ClassifierHead>> heads;
};

MethodResult run_method(const ExperimentConfig& cfg, const Corpus& corpus,
                        ResponseCache* response_cache = nullptr);

struct AblateOutput {
  std::string run_id;
  std::filesystem::path reports_dir;
  ReportGrid grid;
  // (row label, reason) for sweep points that failed; their cells render
  // as dashes.
  std::vector<std::pair<std::string, std::string>> failures;
};

// One run per sweep value with the split shared across points, rendered in
// the layout matching the sweep kind:
//   chunk_sizes -> chunk_sweep, ranks -> rank_sweep, heads -> head_sweep,
//   aggregations -> main.
// Throws std::invalid_argument on an empty or unknown sweep.
AblateOutput ablate(const ExperimentConfig& base, const std::string& sweep_kind,
                    const std::vector<std::string>& values,
                    bool write_artifacts = true);

TableLayout sweep_layout(const std::string& sweep_kind);

} // namespace mhscreen
