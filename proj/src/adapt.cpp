#include "mhscreen/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"

#include "mhscreen/embed.hpp"
#include "mhscreen/errors.hpp"
#include "mhscreen/hash.hpp"
#include "mhscreen/heads.hpp"
#include "mhscreen/optim.hpp"

namespace mhscreen {

namespace {

using nlohmann::ordered_json;

float sigmoidf(float z) {
  if (z >= 0.0f) {
    float e = std::exp(-z);
    return 1.0f / (1.0f + e);
  }
  float e = std::exp(z);
  return e / (1.0f + e);
}

} // namespace

void LoraSpec::validate() const {
  if (rank < 1) throw ConfigError("lora.rank must be >= 1");
  if (!(alpha > 0.0f)) throw ConfigError("lora.alpha must be > 0");
  if (!(dropout >= 0.0f && dropout < 1.0f))
    throw ConfigError("lora.dropout must lie in [0, 1)");
  if (target_matrices.empty())
    throw ConfigError("lora.target_matrices must be non-empty");
  std::set<std::string> seen;
  for (const auto& t : target_matrices)
    if (!seen.insert(t).second)
      throw ConfigError("duplicate target matrix \"" + t + "\"");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0f)) throw ConfigError("train.learning_rate must be > 0");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (weight_decay < 0.0f) throw ConfigError("train.weight_decay must be >= 0");
  if (!(validation_fraction >= 0.0f && validation_fraction < 1.0f))
    throw ConfigError("train.validation_fraction must lie in [0, 1)");
}

const AdapterTarget* AdapterState::find(const std::string& name) const {
  for (const auto& t : targets)
    if (t.shape.name == name) return &t;
  return nullptr;
}

std::string AdapterState::id() const {
  std::string bytes;
  ordered_json j;
  j["rank"] = spec.rank;
  j["alpha"] = spec.alpha;
  j["dropout"] = spec.dropout;
  j["targets"] = spec.target_matrices;
  j["disorder"] = disorder_name(disorder);
  j["seed"] = meta.seed;
  bytes = j.dump();
  for (const auto& t : targets) {
    bytes.append(reinterpret_cast<const char*>(t.weights.A.data()),
                 sizeof(float) * size_t(t.weights.A.size()));
    bytes.append(reinterpret_cast<const char*>(t.weights.B.data()),
                 sizeof(float) * size_t(t.weights.B.size()));
  }
  return sha256_hex(bytes).substr(0, 16);
}

void AdapterGradients::init_like(const AdapterState& state) {
  per_target.clear();
  for (const auto& t : state.targets) {
    AdapterMatrices m;
    m.A = RowMatrixXf::Zero(t.weights.A.rows(), t.weights.A.cols());
    m.B = RowMatrixXf::Zero(t.weights.B.rows(), t.weights.B.cols());
    per_target.push_back(std::move(m));
  }
}

void AdapterGradients::zero() {
  for (auto& m : per_target) {
    m.A.setZero();
    m.B.setZero();
  }
}

Aggregation parse_aggregation(const std::string& name) {
  if (name == "mean") return Aggregation::mean;
  if (name == "max") return Aggregation::max;
  throw ConfigError("unknown aggregation \"" + name +
                    "\" (available: mean, max)");
}

const std::string& aggregation_name(Aggregation a) {
  static const std::string mean = "mean", max = "max";
  return a == Aggregation::mean ? mean : max;
}

std::shared_ptr<AdapterState> attach_adapters(TrainableBackend& backend,
                                              const LoraSpec& spec,
                                              Disorder disorder,
                                              std::uint64_t seed) {
  spec.validate();
  const auto infos = backend.lora_targets();
  auto state = std::make_shared<AdapterState>();
  state->spec = spec;
  state->disorder = disorder;
  state->meta.seed = seed;

  std::mt19937_64 rng(mix_u64(seed, 0xadaf7ULL));
  std::normal_distribution<double> gauss(0.0, 0.02);
  for (const auto& name : spec.target_matrices) {
    const LoraTargetInfo* info = nullptr;
    for (const auto& cand : infos)
      if (cand.name == name) info = &cand;
    if (!info) throw ConfigError("unknown target matrix \"" + name + "\"");

    AdapterTarget t;
    t.shape = {name, info->d_in, info->d_out};
    t.weights.A.resize(spec.rank, Eigen::Index(info->d_in));
    for (Eigen::Index i = 0; i < t.weights.A.rows(); ++i)
      for (Eigen::Index k = 0; k < t.weights.A.cols(); ++k)
        t.weights.A(i, k) = float(gauss(rng));
    t.weights.B = RowMatrixXf::Zero(Eigen::Index(info->d_out), spec.rank);
    state->targets.push_back(std::move(t));
  }
  backend.attach(state);
  return state;
}

std::size_t count_trainable(const AdapterState& state,
                            const DifferentiableHead* head) {
  std::size_t n = 0;
  for (const auto& t : state.targets)
    n += std::size_t(state.spec.rank) * (t.shape.d_in + t.shape.d_out);
  if (head) n += head->param_count();
  return n;
}

// ---------------------------------------------------------------------------
// Joint training
// ---------------------------------------------------------------------------

namespace {

struct PooledForward {
  VectorXf pooled;
  std::vector<Eigen::Index> argmax; // max pooling only, per dimension
};

PooledForward pool_rows(const std::vector<VectorXf>& rows, Aggregation agg) {
  PooledForward out;
  const auto d = rows.front().size();
  if (agg == Aggregation::mean) {
    out.pooled = VectorXf::Zero(d);
    for (const auto& r : rows) out.pooled += r;
    out.pooled /= float(rows.size());
  } else {
    out.pooled = rows.front();
    out.argmax.assign(size_t(d), 0);
    for (std::size_t j = 1; j < rows.size(); ++j)
      for (Eigen::Index k = 0; k < d; ++k)
        if (rows[j][k] > out.pooled[k]) {
          out.pooled[k] = rows[j][k];
          out.argmax[size_t(k)] = Eigen::Index(j);
        }
  }
  return out;
}

// Full-data loss with dropout off and current parameters.
float dataset_loss(const TrainableBackend& backend, DifferentiableHead& head,
                   const std::vector<std::vector<VectorXf>>& base,
                   const std::vector<int>& labels,
                   const std::vector<std::size_t>& indices, Aggregation agg) {
  double acc = 0.0;
  for (std::size_t i : indices) {
    std::vector<VectorXf> rows;
    rows.reserve(base[i].size());
    for (const auto& z : base[i]) rows.push_back(backend.project(z, nullptr));
    const float logit = head.logit(pool_rows(rows, agg).pooled, nullptr);
    const double p =
        std::clamp(double(sigmoidf(logit)), 1e-7, 1.0 - 1e-7);
    acc += labels[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return float(acc / double(indices.size()));
}

std::optional<float> validation_f1(const TrainableBackend& backend,
                                   DifferentiableHead& head,
                                   const std::vector<std::vector<VectorXf>>& base,
                                   const std::vector<int>& labels,
                                   const std::vector<std::size_t>& indices,
                                   Aggregation agg, float threshold) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i : indices) {
    std::vector<VectorXf> rows;
    rows.reserve(base[i].size());
    for (const auto& z : base[i]) rows.push_back(backend.project(z, nullptr));
    const float p = sigmoidf(head.logit(pool_rows(rows, agg).pooled, nullptr));
    const int pred = p >= threshold ? 1 : 0;
    if (pred == 1 && labels[i] == 1) ++tp;
    else if (pred == 1 && labels[i] == 0) ++fp;
    else if (pred == 0 && labels[i] == 1) ++fn;
  }
  if (tp + fp == 0 || tp + fn == 0) return std::nullopt;
  const double prec = double(tp) / double(tp + fp);
  const double rec = double(tp) / double(tp + fn);
  if (prec + rec == 0.0) return std::nullopt;
  return float(2.0 * prec * rec / (prec + rec));
}

} // namespace

TrainResult train_adapter(TrainableBackend& backend, const LoraSpec& spec,
                          DifferentiableHead& head,
                          const std::vector<TrainSample>& data,
                          const TrainConfig& cfg, Disorder disorder,
                          Aggregation aggregation) {
  spec.validate();
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train_adapter: empty data");
  for (const auto& s : data)
    if (s.chunks.empty())
      throw std::invalid_argument("train_adapter: sample \"" +
                                  s.participant_id + "\" has no chunks");

  auto state = attach_adapters(backend, spec, disorder, cfg.seed);
  head.init_joint(backend.hidden_dim(), mix_u64(cfg.seed, 0x11eadULL));

  // Base features are frozen, so encode each chunk exactly once.
  std::vector<std::vector<VectorXf>> base(data.size());
  std::vector<int> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    labels[i] = data[i].label;
    for (const auto& ch : data[i].chunks)
      base[i].push_back(backend.base_features(ch.tokens));
  }

  // Validation carve-out for best-epoch selection.
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 split_rng(mix_u64(cfg.seed, 0x5b111ULL));
  shuffle_inplace(order, split_rng);
  auto val_n = std::size_t(
      std::floor(double(cfg.validation_fraction) * double(data.size()) + 0.5));
  if (val_n >= data.size()) val_n = data.size() - 1;
  std::vector<std::size_t> val_idx(order.begin(),
                                   order.begin() + std::ptrdiff_t(val_n));
  std::vector<std::size_t> train_idx(order.begin() + std::ptrdiff_t(val_n),
                                     order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  std::vector<std::size_t> all_idx(data.size());
  for (std::size_t i = 0; i < all_idx.size(); ++i) all_idx[i] = i;

  TrainResult result;
  result.state = state;
  result.initial_loss =
      dataset_loss(backend, head, base, labels, all_idx, aggregation);

  std::vector<RowMatrixXf*> params;
  for (auto& t : state->targets) {
    params.push_back(&t.weights.A);
    params.push_back(&t.weights.B);
  }
  const auto head_params = head.param_blocks();
  params.insert(params.end(), head_params.begin(), head_params.end());

  AdamW opt;
  opt.lr = cfg.learning_rate;
  opt.weight_decay = cfg.weight_decay;
  opt.init(params);

  AdapterGradients agrads;
  agrads.init_like(*state);
  std::vector<RowMatrixXf> hgrads(head_params.size());

  std::mt19937_64 rng(mix_u64(cfg.seed, 0x7ea17ULL));
  ProjectOptions dropout_opts{&rng, spec.dropout};

  float best_score = -1.0f;
  std::vector<RowMatrixXf> best_params;
  int best_epoch = -1;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_inplace(train_idx, rng);
    for (std::size_t begin = 0; begin < train_idx.size();
         begin += std::size_t(cfg.batch_size)) {
      const auto end =
          std::min(begin + std::size_t(cfg.batch_size), train_idx.size());
      agrads.zero();
      for (std::size_t k = 0; k < hgrads.size(); ++k)
        hgrads[k] = RowMatrixXf::Zero(head_params[k]->rows(),
                                      head_params[k]->cols());

      for (std::size_t bi = begin; bi < end; ++bi) {
        const std::size_t i = train_idx[bi];
        std::vector<VectorXf> rows;
        std::vector<std::unique_ptr<EncodeTrace>> traces(base[i].size());
        rows.reserve(base[i].size());
        for (std::size_t j = 0; j < base[i].size(); ++j)
          rows.push_back(
              backend.project(base[i][j], &traces[j], dropout_opts));
        PooledForward pf = pool_rows(rows, aggregation);

        std::unique_ptr<HeadTrace> htrace;
        const float logit = head.logit(pf.pooled, &htrace);
        const float p = sigmoidf(logit);
        const float dlogit = (p - float(labels[i])) / float(end - begin);
        VectorXf dx = head.backward(*htrace, dlogit, hgrads);

        if (aggregation == Aggregation::mean) {
          VectorXf dh = dx / float(rows.size());
          for (auto& tr : traces) backend.backward(*tr, dh, agrads);
        } else {
          for (std::size_t j = 0; j < rows.size(); ++j) {
            VectorXf dh = VectorXf::Zero(dx.size());
            bool any = false;
            for (Eigen::Index k = 0; k < dx.size(); ++k)
              if (pf.argmax[size_t(k)] == Eigen::Index(j)) {
                dh[k] = dx[k];
                any = true;
              }
            if (any) backend.backward(*traces[j], dh, agrads);
          }
        }
      }

      std::vector<RowMatrixXf> grads;
      grads.reserve(params.size());
      for (auto& m : agrads.per_target) {
        grads.push_back(m.A);
        grads.push_back(m.B);
      }
      for (auto& g : hgrads) grads.push_back(g);
      opt.step(params, grads);
    }

    const float epoch_loss =
        dataset_loss(backend, head, base, labels, all_idx, aggregation);
    if (!std::isfinite(epoch_loss))
      throw TrainError("training diverged at epoch " + std::to_string(epoch));
    state->meta.epoch_losses.push_back(epoch_loss);

    if (!val_idx.empty()) {
      auto f1 = validation_f1(backend, head, base, labels, val_idx,
                              aggregation, head.threshold());
      const float score = f1.value_or(0.0f);
      if (score > best_score) {
        best_score = score;
        best_epoch = epoch;
        result.best_validation_f1 = f1;
        best_params.clear();
        for (const auto* pb : params) best_params.push_back(*pb);
      }
    }
  }

  if (best_epoch >= 0)
    for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best_params[k];

  head.finalize_joint();
  state->meta.epochs = cfg.epochs;
  state->meta.seed = cfg.seed;
  state->meta.final_loss = cfg.epochs == 0
                               ? result.initial_loss
                               : dataset_loss(backend, head, base, labels,
                                              all_idx, aggregation);
  return result;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void save_adapter(const AdapterState& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ordered_json j;
  j["rank"] = state.spec.rank;
  j["alpha"] = state.spec.alpha;
  j["dropout"] = state.spec.dropout;
  j["target_matrices"] = state.spec.target_matrices;
  ordered_json targets = ordered_json::array();
  for (const auto& t : state.targets)
    targets.push_back({{"name", t.shape.name},
                       {"d_in", t.shape.d_in},
                       {"d_out", t.shape.d_out}});
  j["targets"] = std::move(targets);
  j["disorder"] = disorder_name(state.disorder);
  j["seed"] = state.meta.seed;
  j["epochs"] = state.meta.epochs;
  j["final_loss"] = state.meta.final_loss;
  j["epoch_losses"] = state.meta.epoch_losses;
  {
    std::ofstream out(dir / "spec.json");
    if (!out) throw DataError("cannot write " + (dir / "spec.json").string());
    out << j.dump(2) << '\n';
  }
  std::ofstream bin(dir / "weights.bin", std::ios::binary);
  if (!bin) throw DataError("cannot write " + (dir / "weights.bin").string());
  for (const auto& t : state.targets) {
    bin.write(reinterpret_cast<const char*>(t.weights.A.data()),
              std::streamsize(sizeof(float)) * t.weights.A.size());
    bin.write(reinterpret_cast<const char*>(t.weights.B.data()),
              std::streamsize(sizeof(float)) * t.weights.B.size());
  }
}

AdapterState load_adapter(const std::filesystem::path& dir) {
  std::ifstream in(dir / "spec.json");
  if (!in) throw DataError("cannot read " + (dir / "spec.json").string());
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("malformed " + (dir / "spec.json").string() + ": " +
                    e.what());
  }

  AdapterState state;
  std::vector<TargetShape> shapes;
  try {
    state.spec.rank = j.at("rank").get<int>();
    state.spec.alpha = j.at("alpha").get<float>();
    state.spec.dropout = j.at("dropout").get<float>();
    state.spec.target_matrices =
        j.at("target_matrices").get<std::vector<std::string>>();
    state.disorder = parse_disorder(j.at("disorder").get<std::string>());
    state.meta.seed = j.at("seed").get<std::uint64_t>();
    state.meta.epochs = j.at("epochs").get<int>();
    state.meta.final_loss = j.at("final_loss").get<float>();
    state.meta.epoch_losses = j.at("epoch_losses").get<std::vector<float>>();
    for (const auto& tj : j.at("targets")) {
      TargetShape s;
      s.name = tj.at("name").get<std::string>();
      s.d_in = tj.at("d_in").get<std::size_t>();
      s.d_out = tj.at("d_out").get<std::size_t>();
      shapes.push_back(std::move(s));
    }
  } catch (const ordered_json::exception& e) {
    throw DataError("invalid " + (dir / "spec.json").string() + ": " +
                    e.what());
  }

  std::ifstream bin(dir / "weights.bin", std::ios::binary);
  if (!bin) throw DataError("cannot read " + (dir / "weights.bin").string());
  for (const auto& shape : shapes) {
    AdapterTarget t;
    t.shape = shape;
    t.weights.A.resize(state.spec.rank, Eigen::Index(t.shape.d_in));
    t.weights.B.resize(Eigen::Index(t.shape.d_out), state.spec.rank);
    bin.read(reinterpret_cast<char*>(t.weights.A.data()),
             std::streamsize(sizeof(float)) * t.weights.A.size());
    bin.read(reinterpret_cast<char*>(t.weights.B.data()),
             std::streamsize(sizeof(float)) * t.weights.B.size());
    if (!bin) throw DataError("truncated weights file in " + dir.string());
    state.targets.push_back(std::move(t));
  }
  return state;
}

} // namespace mhscreen
