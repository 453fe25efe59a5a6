#include "mhscreen/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "mhscreen/embed.hpp"
#include "mhscreen/errors.hpp"
#include "mhscreen/hash.hpp"

namespace mhscreen {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  out.erase(std::remove(out.begin(), out.end(), ""), out.end());
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& parts,
                 const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Pulls typed values out of the flat map, collecting every failure instead
// of stopping at the first.
struct Reader {
  const ConfigMap& map;
  std::set<std::string> used;
  std::vector<std::string> problems;

  std::optional<std::string> raw(const std::string& key) {
    auto it = map.find(key);
    if (it == map.end()) return std::nullopt;
    used.insert(key);
    return it->second;
  }

  void str(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }

  template <typename T>
  void num(const std::string& key, T& out) {
    auto v = raw(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, double>) out = std::stod(*v);
      else if constexpr (std::is_same_v<T, float>) out = std::stof(*v);
      else if constexpr (std::is_same_v<T, int>) out = std::stoi(*v);
      else out = static_cast<T>(std::stoull(*v));
    } catch (const std::exception&) {
      problems.push_back(key + ": cannot parse \"" + *v + "\" as a number");
    }
  }

  void boolean(const std::string& key, std::optional<bool>& out) {
    auto v = raw(key);
    if (!v) return;
    if (*v == "true" || *v == "1" || *v == "yes") out = true;
    else if (*v == "false" || *v == "0" || *v == "no") out = false;
    else problems.push_back(key + ": cannot parse \"" + *v + "\" as a bool");
  }
};

} // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    if (!out.emplace(key, value).second)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": duplicate key \"" + key + "\"");
  }
  return out;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
  ExperimentConfig cfg;
  Reader r{map, {}, {}};

  r.str("method", cfg.method);
  std::string corpus;
  r.str("corpus", corpus);
  if (!corpus.empty()) cfg.corpus_path = corpus;
  if (auto v = r.raw("disorders")) {
    if (*v == "all") {
      cfg.disorders = {kAllDisorders.begin(), kAllDisorders.end()};
    } else {
      cfg.disorders.clear();
      for (const auto& name : split_list(*v)) {
        try {
          cfg.disorders.push_back(parse_disorder(name));
        } catch (const std::exception& e) {
          r.problems.push_back("disorders: " + std::string(e.what()));
        }
      }
    }
  }
  r.num("chunk.size", cfg.chunk_size);
  r.num("chunk.overlap", cfg.overlap_ratio);
  r.str("backend.name", cfg.backend);
  r.num("backend.seed", cfg.backend_seed);
  if (auto v = r.raw("aggregation")) {
    try {
      cfg.aggregation = parse_aggregation(*v);
    } catch (const std::exception& e) {
      r.problems.push_back(std::string(e.what()));
    }
  }

  r.str("head.kind", cfg.head.kind);
  r.num("head.l2", cfg.head.l2);
  r.num("head.iters", cfg.head.iters);
  r.num("head.learning_rate", cfg.head.learning_rate);
  r.num("head.hidden_dim", cfg.head.hidden_dim);
  r.num("head.n_trees", cfg.head.n_trees);
  r.num("head.max_depth", cfg.head.max_depth);
  r.num("head.gbt_shrinkage", cfg.head.gbt_shrinkage);
  r.num("head.gbt_lambda", cfg.head.gbt_lambda);

  r.num("lora.rank", cfg.lora.rank);
  r.num("lora.alpha", cfg.lora.alpha);
  r.num("lora.dropout", cfg.lora.dropout);
  if (auto v = r.raw("lora.targets")) cfg.lora.target_matrices = split_list(*v);

  r.num("train.batch_size", cfg.train.batch_size);
  r.num("train.learning_rate", cfg.train.learning_rate);
  r.num("train.epochs", cfg.train.epochs);
  r.num("train.weight_decay", cfg.train.weight_decay);
  r.num("train.validation_fraction", cfg.train.validation_fraction);

  r.num("split.fraction", cfg.split_fraction);
  r.num("split.seed", cfg.split_seed);
  r.boolean("upsample", cfg.upsample_train);
  r.num("threshold", cfg.threshold);
  r.str("zeroshot.client", cfg.zeroshot_client);
  r.str("zeroshot.scope", cfg.zeroshot_scope);
  r.num("seed", cfg.seed);

  std::string out_dir;
  r.str("out", out_dir);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (auto v = r.raw("cache.dir")) {
    if (*v == "none") cfg.cache_dir = std::filesystem::path{};
    else cfg.cache_dir = *v;
  }

  for (const auto& [key, value] : map) {
    (void)value;
    if (!r.used.count(key))
      r.problems.push_back("unknown key \"" + key + "\"");
  }
  if (!r.problems.empty())
    throw ConfigError("config errors: " + join(r.problems, "; "));

  cfg.head.threshold =
      (cfg.threshold > 0.0 && cfg.threshold < 1.0) ? float(cfg.threshold)
                                                   : cfg.head.threshold;
  cfg.train.seed = cfg.seed;
  return cfg;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  const bool encoder_method =
      method == "embed_classify" || method == "lora_finetune";

  if (method.empty()) {
    problems.push_back("method: required");
  } else if (!encoder_method && method != "zeroshot") {
    problems.push_back("method: unknown \"" + method +
                       "\" (zeroshot | lora_finetune | embed_classify)");
  }
  if (corpus_path.empty()) problems.push_back("corpus: required");
  if (disorders.empty()) problems.push_back("disorders: must be non-empty");

  if (!(overlap_ratio >= 0.0 && overlap_ratio < 1.0))
    problems.push_back("chunk.overlap: must lie in [0, 1)");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    problems.push_back("split.fraction: must lie in (0, 1)");

  if (encoder_method) {
    if (chunk_size == 0) {
      problems.push_back("chunk.size: required for encoder methods");
    } else {
      try {
        const auto be = make_backend(backend, backend_seed);
        if (chunk_size > be->max_tokens())
          problems.push_back("chunk.size: " + std::to_string(chunk_size) +
                             " exceeds backend max_tokens " +
                             std::to_string(be->max_tokens()));
      } catch (const ConfigError& e) {
        problems.push_back("backend.name: " + std::string(e.what()));
      }
    }
    if (!(threshold > 0.0 && threshold < 1.0))
      problems.push_back("threshold: must lie in (0, 1)");
    try {
      head.validate();
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  } else if (method == "zeroshot") {
    if (!(threshold > 0.0 && threshold <= 1.0))
      problems.push_back("threshold: must lie in (0, 1]");
    if (zeroshot_client != "marker-stub" && zeroshot_client != "http")
      problems.push_back("zeroshot.client: unknown \"" + zeroshot_client +
                         "\" (marker-stub | http)");
    if (zeroshot_scope != "test" && zeroshot_scope != "all")
      problems.push_back("zeroshot.scope: unknown \"" + zeroshot_scope +
                         "\" (test | all)");
  }

  if (method == "lora_finetune") {
    try {
      lora.validate();
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
    try {
      train.validate();
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
    if (head.kind == "gbt")
      problems.push_back(
          "head.kind: gbt cannot be trained jointly with adapters "
          "(use logistic or mlp)");
  }

  if (!problems.empty())
    throw ConfigError("invalid config: " + join(problems, "; "));
}

ConfigMap ExperimentConfig::to_map() const {
  ConfigMap m;
  m["method"] = method;
  m["corpus"] = corpus_path.string();
  {
    std::vector<std::string> names;
    for (Disorder d : disorders) names.push_back(disorder_name(d));
    m["disorders"] = join(names, ",");
  }
  m["chunk.size"] = std::to_string(chunk_size);
  m["chunk.overlap"] = fmt_double(overlap_ratio);
  m["backend.name"] = backend;
  m["backend.seed"] = std::to_string(backend_seed);
  m["aggregation"] = aggregation_name(aggregation);
  m["head.kind"] = head.kind;
  m["head.l2"] = fmt_float(head.l2);
  m["head.iters"] = std::to_string(head.iters);
  m["head.learning_rate"] = fmt_float(head.learning_rate);
  m["head.hidden_dim"] = std::to_string(head.hidden_dim);
  m["head.n_trees"] = std::to_string(head.n_trees);
  m["head.max_depth"] = std::to_string(head.max_depth);
  m["head.gbt_shrinkage"] = fmt_float(head.gbt_shrinkage);
  m["head.gbt_lambda"] = fmt_float(head.gbt_lambda);
  m["lora.rank"] = std::to_string(lora.rank);
  m["lora.alpha"] = fmt_float(lora.alpha);
  m["lora.dropout"] = fmt_float(lora.dropout);
  m["lora.targets"] = join(lora.target_matrices, ",");
  m["train.batch_size"] = std::to_string(train.batch_size);
  m["train.learning_rate"] = fmt_float(train.learning_rate);
  m["train.epochs"] = std::to_string(train.epochs);
  m["train.weight_decay"] = fmt_float(train.weight_decay);
  m["train.validation_fraction"] = fmt_float(train.validation_fraction);
  m["split.fraction"] = fmt_double(split_fraction);
  m["split.seed"] = std::to_string(split_seed);
  m["upsample"] = upsample_effective() ? "true" : "false";
  m["threshold"] = fmt_double(threshold);
  m["zeroshot.client"] = zeroshot_client;
  m["zeroshot.scope"] = zeroshot_scope;
  m["seed"] = std::to_string(seed);
  m["out"] = out_dir.string();
  if (cache_dir) m["cache.dir"] = cache_dir->empty() ? "none"
                                                     : cache_dir->string();
  else m["cache.dir"] = (out_dir / "cache").string();
  return m;
}

std::string ExperimentConfig::run_id() const {
  auto m = to_map();
  m.erase("out");
  m.erase("cache.dir");
  std::string bytes;
  for (const auto& [k, v] : m) bytes += k + "=" + v + "\n";
  return sha256_hex(bytes).substr(0, 16);
}

} // namespace mhscreen
