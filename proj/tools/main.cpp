#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mhscreen/chunker.hpp"
#include "mhscreen/config.hpp"
#include "mhscreen/corpus.hpp"
#include "mhscreen/embed.hpp"
#include "mhscreen/errors.hpp"
#include "mhscreen/eval.hpp"
#include "mhscreen/pipeline.hpp"

namespace {

using namespace mhscreen;
namespace fs = std::filesystem;

void print_corpus_stats(const Corpus& corpus) {
  std::cout << corpus.records.size() << " records";
  for (Disorder d : kAllDisorders)
    std::cout << ", " << disorder_name(d) << "+ "
              << corpus.positive_count(d);
  std::cout << "\n";
}

int finish_run(const RunOutput& out) {
  std::cout << "run " << out.run_id << "\n" << render_table(out.grid)
            << "reports: " << out.reports_dir.string() << "\n";
  if (out.failures.empty()) return 0;
  std::cerr << out.failures.size() << " participant(s) failed:\n";
  for (const auto& [id, why] : out.failures)
    std::cerr << "  " << id << ": " << why << "\n";
  return 5;
}

std::optional<fs::path> resolved_cache_dir(const ExperimentConfig& cfg) {
  if (!cfg.cache_dir) return cfg.out_dir / "cache";
  if (cfg.cache_dir->empty()) return std::nullopt;
  return *cfg.cache_dir;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"mhscreen: chunked screening experiments on interview "
               "transcripts (zeroshot, lora_finetune, embed_classify)"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed_cli = 0;
  std::string out_cli;
  app.add_option("--config", config_path,
                 "experiment config file, one key = value per line");
  auto* seed_opt = app.add_option("--seed", seed_cli, "override config seed");
  auto* out_opt =
      app.add_option("--out", out_cli, "override config output directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  SynthConfig sc;
  double synth_rate = -1.0;
  std::string synth_out;
  synth->add_option("--n", sc.n_participants, "number of participants");
  synth->add_option("--positive-rate", synth_rate,
                    "per-disorder positive rate (applied to all three)");
  synth->add_option("--words", sc.target_words,
                    "mean transcript length in words");
  synth->add_option("-o,--output", synth_out, "corpus output path")
      ->required();

  auto* ingest =
      app.add_subcommand("ingest", "validate and normalize a corpus file");
  std::string ingest_in, ingest_out;
  ingest->add_option("-i,--input", ingest_in, "corpus to read")->required();
  ingest->add_option("-o,--output", ingest_out, "normalized corpus path")
      ->required();

  auto* split_cmd =
      app.add_subcommand("split", "write a user-level train/test split");
  std::string split_corpus, split_upsample;
  std::string split_train = "train.jsonl", split_test = "test.jsonl";
  split_cmd->add_option("--corpus", split_corpus,
                        "corpus path (default: config corpus)");
  split_cmd->add_option("--train-output", split_train, "train corpus path");
  split_cmd->add_option("--test-output", split_test, "test corpus path");
  split_cmd->add_option(
      "--upsample", split_upsample,
      "upsample the train half to class parity for this disorder");

  auto* embed_cmd = app.add_subcommand(
      "embed", "encode a corpus into the embedding cache");
  std::string embed_corpus;
  embed_cmd->add_option("--corpus", embed_corpus,
                        "corpus path (default: config corpus)");

  auto* train_head = app.add_subcommand(
      "train-head", "fit classifier heads on pooled embeddings and evaluate");
  auto* train_lora = app.add_subcommand(
      "train-lora", "joint LoRA adapter + head training and evaluation");
  auto* zeroshot_cmd = app.add_subcommand(
      "zeroshot", "prompt-based screening with chunk vote aggregation");
  auto* evaluate =
      app.add_subcommand("evaluate", "run the configured method end to end");
  std::string only_disorder;
  for (auto* cmd : {train_head, train_lora, zeroshot_cmd, evaluate})
    cmd->add_option("--disorder", only_disorder,
                    "restrict to one disorder (mde | ptsd | anxiety); "
                    "default fans out all three");

  auto* ab = app.add_subcommand(
      "ablate", "sweep one dimension and render the matching table");
  std::string sweep_kind;
  std::vector<std::string> sweep_values;
  ab->add_option("--sweep", sweep_kind,
                 "chunk_sizes | ranks | heads | aggregations")
      ->required();
  ab->add_option("--values", sweep_values, "sweep values")
      ->required()
      ->delimiter(',');

  auto* report_cmd =
      app.add_subcommand("report", "re-render a table from a metrics CSV");
  std::string report_csv;
  report_cmd->add_option("--csv", report_csv, "metrics.csv from a run")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty())
      cfg = ExperimentConfig::from_map(load_config_file(config_path));
    if (seed_opt->count() > 0) {
      cfg.seed = seed_cli;
      cfg.train.seed = seed_cli;
    }
    if (out_opt->count() > 0) cfg.out_dir = out_cli;
    const bool have_config = !config_path.empty();
    auto require_config = [&] {
      if (!have_config)
        throw ConfigError("--config is required for this subcommand");
    };

    if (synth->parsed()) {
      if (seed_opt->count() > 0) sc.seed = seed_cli;
      if (synth_rate >= 0)
        sc.positive_rate = {synth_rate, synth_rate, synth_rate};
      const Corpus corpus = generate_synthetic(sc);
      save_corpus(corpus, synth_out);
      std::cout << "wrote " << synth_out << ": ";
      print_corpus_stats(corpus);
      return 0;
    }

    if (ingest->parsed()) {
      const Corpus corpus = load_corpus(ingest_in);
      save_corpus(corpus, ingest_out);
      std::cout << "wrote " << ingest_out << ": ";
      print_corpus_stats(corpus);
      return 0;
    }

    if (split_cmd->parsed()) {
      const fs::path src =
          split_corpus.empty() ? cfg.corpus_path : fs::path(split_corpus);
      if (src.empty()) throw ConfigError("corpus: no corpus given");
      const Corpus corpus = load_corpus(src);
      auto [train_c, test_c] =
          split_users(corpus, cfg.split_fraction, cfg.split_seed);
      if (!split_upsample.empty())
        train_c = upsample(train_c, parse_disorder(split_upsample), cfg.seed);
      save_corpus(train_c, split_train);
      save_corpus(test_c, split_test);
      std::cout << "train " << split_train << ": ";
      print_corpus_stats(train_c);
      std::cout << "test " << split_test << ": ";
      print_corpus_stats(test_c);
      return 0;
    }

    if (embed_cmd->parsed()) {
      const fs::path src =
          embed_corpus.empty() ? cfg.corpus_path : fs::path(embed_corpus);
      if (src.empty()) throw ConfigError("corpus: no corpus given");
      if (cfg.chunk_size == 0)
        throw ConfigError("chunk.size: required for embedding");
      const Corpus corpus = load_corpus(src);
      const auto backend = make_backend(cfg.backend, cfg.backend_seed);
      WhitespaceTokenizer tokenizer;
      const auto emb =
          encode_corpus(corpus, *backend, tokenizer, cfg.chunk_size,
                        cfg.overlap_ratio, resolved_cache_dir(cfg));
      std::size_t rows = 0;
      for (const auto& u : emb.users) rows += u.matrix.rows();
      std::cout << (emb.loaded_from_cache ? "cache hit " : "encoded ")
                << emb.users.size() << " users, " << rows << " chunks, dim "
                << emb.dim << ", key " << emb.cache_key << "\n";
      return 0;
    }

    if (report_cmd->parsed()) {
      std::ifstream in(report_csv);
      if (!in) throw DataError("cannot read " + report_csv);
      std::stringstream buf;
      buf << in.rdbuf();
      const std::string text = buf.str();
      const auto cells = parse_report_csv(text);

      ReportGrid grid;
      std::vector<std::string> order;
      std::istringstream lines(text);
      std::string line;
      std::getline(lines, line); // header
      bool first = true;
      while (std::getline(lines, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) continue;
        if (first) {
          grid.layout = parse_layout(line.substr(0, c1));
          first = false;
        }
        const std::string row = line.substr(c1 + 1, c2 - c1 - 1);
        if (std::find(order.begin(), order.end(), row) == order.end())
          order.push_back(row);
      }
      if (first) throw DataError("no data rows in " + report_csv);
      for (const auto& row : order) {
        grid.add_row(row);
        for (Disorder d : kAllDisorders) {
          auto it = cells.find({row, disorder_name(d)});
          grid.set(row, d,
                   it == cells.end() ? std::optional<MetricsReport>{}
                                     : std::optional<MetricsReport>{it->second});
        }
      }
      std::cout << render_table(grid);
      return 0;
    }

    if (ab->parsed()) {
      require_config();
      const auto out = ablate(cfg, sweep_kind, sweep_values);
      std::cout << "ablation " << out.run_id << "\n" << render_table(out.grid)
                << "reports: " << out.reports_dir.string() << "\n";
      if (out.failures.empty()) return 0;
      std::cerr << out.failures.size() << " sweep point(s) failed:\n";
      for (const auto& [row, why] : out.failures)
        std::cerr << "  " << row << ": " << why << "\n";
      return 5;
    }

    // train-head, train-lora, zeroshot, evaluate
    require_config();
    if (train_head->parsed()) cfg.method = "embed_classify";
    if (train_lora->parsed()) cfg.method = "lora_finetune";
    if (zeroshot_cmd->parsed()) cfg.method = "zeroshot";
    if (!only_disorder.empty())
      cfg.disorders = {parse_disorder(only_disorder)};
    return finish_run(run(cfg));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return 4;
  } catch (const ClientError& e) {
    std::cerr << "client error: " << e.what() << "\n";
    return 4;
  } catch (const TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const PartialFailure& e) {
    std::cerr << "partial failure: " << e.what() << "\n";
    return 5;
  } catch (const std::invalid_argument& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
