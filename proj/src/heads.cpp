#include "mhscreen/heads.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>

#include "json.hpp"

#include "mhscreen/errors.hpp"
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

float bce(const VectorXf& p, const VectorXf& y) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double pi = std::clamp(double(p[i]), 1e-7, 1.0 - 1e-7);
    acc += y[i] > 0.5f ? -std::log(pi) : -std::log(1.0 - pi);
  }
  return float(acc / double(p.size()));
}

// Shared fit preconditions. Returns labels as a float vector.
VectorXf check_fit_args(const RowMatrixXf& X, const std::vector<int>& y) {
  if (static_cast<std::size_t>(X.rows()) != y.size())
    throw std::invalid_argument("X rows and y length differ");
  if (X.rows() < 2)
    throw std::invalid_argument("need at least 2 training samples");
  std::size_t pos = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw std::invalid_argument("labels must be 0/1");
    pos += static_cast<std::size_t>(v);
  }
  if (pos == 0 || pos == y.size())
    throw DataError("degenerate labels: only one class present");
  VectorXf yl(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) yl[i] = float(y[size_t(i)]);
  return yl;
}

void check_predict_args(bool fitted, std::size_t dim, const VectorXf& x) {
  if (!fitted) throw std::logic_error("head is not fitted");
  if (static_cast<std::size_t>(x.size()) != dim)
    throw std::invalid_argument("input dimension mismatch");
}

void write_blocks(const std::filesystem::path& file,
                  const std::vector<const RowMatrixXf*>& blocks) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  for (const auto* b : blocks)
    out.write(reinterpret_cast<const char*>(b->data()),
              std::streamsize(sizeof(float)) * b->size());
}

void read_blocks(const std::filesystem::path& file,
                 const std::vector<RowMatrixXf*>& blocks) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read " + file.string());
  for (auto* b : blocks) {
    in.read(reinterpret_cast<char*>(b->data()),
            std::streamsize(sizeof(float)) * b->size());
    if (in.gcount() != std::streamsize(sizeof(float)) * b->size())
      throw DataError("truncated parameter file " + file.string());
  }
}

ordered_json read_head_json(const std::filesystem::path& dir) {
  std::ifstream in(dir / "head.json");
  if (!in) throw DataError("cannot read " + (dir / "head.json").string());
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("malformed " + (dir / "head.json").string() + ": " +
                    e.what());
  }
  return j;
}

void write_head_json(const std::filesystem::path& dir, const ordered_json& j) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "head.json");
  if (!out) throw DataError("cannot write " + (dir / "head.json").string());
  out << j.dump(2) << '\n';
}

const std::string kLogisticKind = "logistic";
const std::string kMlpKind = "mlp";
const std::string kGbtKind = "gbt";

} // namespace

void HeadConfig::validate() const {
  if (kind != kLogisticKind && kind != kMlpKind && kind != kGbtKind)
    throw ConfigError("unknown head kind \"" + kind +
                      "\" (available: logistic, mlp, gbt)");
  if (!(threshold > 0.0f && threshold < 1.0f))
    throw ConfigError("head.threshold must lie in (0, 1)");
  if (l2 < 0.0f) throw ConfigError("head.l2 must be >= 0");
  if (iters < 1) throw ConfigError("head.iters must be >= 1");
  if (hidden_dim < 1) throw ConfigError("head.hidden_dim must be >= 1");
  if (n_trees < 1) throw ConfigError("head.n_trees must be >= 1");
  if (max_depth < 1) throw ConfigError("head.max_depth must be >= 1");
  if (!(gbt_shrinkage > 0.0f)) throw ConfigError("head.gbt_shrinkage must be > 0");
  if (gbt_lambda < 0.0f) throw ConfigError("head.gbt_lambda must be >= 0");
}

void ClassifierHead::set_threshold(float t) {
  if (!(t > 0.0f && t < 1.0f))
    throw std::invalid_argument("threshold must lie in (0, 1)");
  threshold_ = t;
}

std::size_t DifferentiableHead::param_count() const {
  std::size_t n = 0;
  for (const auto* b : const_cast<DifferentiableHead*>(this)->param_blocks())
    n += static_cast<std::size_t>(b->size());
  return n;
}

// ---------------------------------------------------------------------------
// LogisticHead
// ---------------------------------------------------------------------------

namespace {
struct LogisticTrace final : HeadTrace {
  VectorXf z; // standardized input
};
} // namespace

LogisticHead::LogisticHead(const HeadConfig& cfg) : cfg_(cfg) {
  cfg_.kind = kLogisticKind;
  cfg_.validate();
  threshold_ = cfg_.threshold;
}

const std::string& LogisticHead::kind() const { return kLogisticKind; }

void LogisticHead::fit(const RowMatrixXf& X, const std::vector<int>& y,
                       std::uint64_t seed) {
  (void)seed; // zero init, nothing random
  VectorXf yl = check_fit_args(X, y);
  const auto n = X.rows();
  dim_ = static_cast<std::size_t>(X.cols());

  mu_ = X.colwise().mean().transpose();
  VectorXf var = ((X.rowwise() - mu_.transpose()).array().square())
                     .colwise()
                     .mean()
                     .transpose();
  sigma_ = var.array().sqrt().max(1e-6f);
  RowMatrixXf Z = (X.rowwise() - mu_.transpose()).array().rowwise() /
                  sigma_.transpose().array();

  w_ = RowMatrixXf::Zero(1, X.cols());
  b_ = RowMatrixXf::Zero(1, 1);
  AdamW opt;
  opt.lr = cfg_.learning_rate > 0.0f ? cfg_.learning_rate : 0.5f;
  auto params = param_blocks();
  opt.init(params);

  losses_.clear();
  std::vector<RowMatrixXf> grads(2);
  for (int it = 0; it < cfg_.iters; ++it) {
    VectorXf logits = (Z * w_.transpose()).col(0).array() + b_(0, 0);
    VectorXf p = logits.unaryExpr([](float v) { return sigmoidf(v); });
    losses_.push_back(bce(p, yl) + 0.5f * cfg_.l2 * w_.squaredNorm());
    VectorXf g = (p - yl) / float(n);
    grads[0] = g.transpose() * Z + cfg_.l2 * w_;
    grads[1] = RowMatrixXf::Constant(1, 1, g.sum());
    opt.step(params, grads);
  }
  fitted_ = true;
}

float LogisticHead::predict_proba(const VectorXf& x) const {
  check_predict_args(fitted_, dim_, x);
  VectorXf z = (x - mu_).cwiseQuotient(sigma_);
  return sigmoidf((w_ * z)(0, 0) + b_(0, 0));
}

void LogisticHead::init_joint(std::size_t input_dim, std::uint64_t seed) {
  (void)seed;
  dim_ = input_dim;
  mu_ = VectorXf::Zero(Eigen::Index(input_dim));
  sigma_ = VectorXf::Ones(Eigen::Index(input_dim));
  w_ = RowMatrixXf::Zero(1, Eigen::Index(input_dim));
  b_ = RowMatrixXf::Zero(1, 1);
  fitted_ = false;
  losses_.clear();
}

float LogisticHead::logit(const VectorXf& x,
                          std::unique_ptr<HeadTrace>* trace) const {
  if (static_cast<std::size_t>(x.size()) != dim_)
    throw std::invalid_argument("input dimension mismatch");
  VectorXf z = (x - mu_).cwiseQuotient(sigma_);
  if (trace) {
    auto t = std::make_unique<LogisticTrace>();
    t->z = z;
    *trace = std::move(t);
  }
  return (w_ * z)(0, 0) + b_(0, 0);
}

VectorXf LogisticHead::backward(const HeadTrace& trace, float dlogit,
                                std::vector<RowMatrixXf>& grads) const {
  const auto& t = dynamic_cast<const LogisticTrace&>(trace);
  grads[0].noalias() += dlogit * t.z.transpose();
  grads[1](0, 0) += dlogit;
  return dlogit * w_.transpose().col(0).cwiseQuotient(sigma_);
}

std::vector<RowMatrixXf*> LogisticHead::param_blocks() { return {&w_, &b_}; }

void LogisticHead::save(const std::filesystem::path& dir) const {
  ordered_json j;
  j["kind"] = kLogisticKind;
  j["threshold"] = threshold_;
  j["input_dim"] = dim_;
  j["fitted"] = fitted_;
  j["hyperparams"] = {{"l2", cfg_.l2},
                      {"iters", cfg_.iters},
                      {"learning_rate", cfg_.learning_rate}};
  write_head_json(dir, j);
  RowMatrixXf mu = mu_.transpose(), sigma = sigma_.transpose();
  write_blocks(dir / "params.bin", {&mu, &sigma, &w_, &b_});
}

std::unique_ptr<LogisticHead> LogisticHead::load(
    const std::filesystem::path& dir) {
  auto j = read_head_json(dir);
  HeadConfig cfg;
  cfg.kind = kLogisticKind;
  cfg.threshold = j.at("threshold").get<float>();
  cfg.l2 = j.at("hyperparams").at("l2").get<float>();
  cfg.iters = j.at("hyperparams").at("iters").get<int>();
  cfg.learning_rate = j.at("hyperparams").at("learning_rate").get<float>();
  auto head = std::make_unique<LogisticHead>(cfg);
  head->dim_ = j.at("input_dim").get<std::size_t>();
  const auto d = Eigen::Index(head->dim_);
  RowMatrixXf mu(1, d), sigma(1, d);
  head->w_.resize(1, d);
  head->b_.resize(1, 1);
  read_blocks(dir / "params.bin", {&mu, &sigma, &head->w_, &head->b_});
  head->mu_ = mu.transpose();
  head->sigma_ = sigma.transpose();
  head->fitted_ = j.at("fitted").get<bool>();
  return head;
}

// ---------------------------------------------------------------------------
// MlpHead
// ---------------------------------------------------------------------------

namespace {

constexpr float kLnEps = 1e-5f;

struct MlpTrace final : HeadTrace {
  VectorXf x;
  VectorXf nhat; // post-normalization, pre-affine
  VectorXf n;    // post-affine
  VectorXf r;    // post-relu
  float inv = 0.0f;
};

} // namespace

MlpHead::MlpHead(const HeadConfig& cfg) : cfg_(cfg) {
  cfg_.kind = kMlpKind;
  cfg_.validate();
  threshold_ = cfg_.threshold;
}

const std::string& MlpHead::kind() const { return kMlpKind; }

void MlpHead::init_joint(std::size_t input_dim, std::uint64_t seed) {
  dim_ = input_dim;
  const auto d = Eigen::Index(input_dim);
  const auto h = Eigen::Index(cfg_.hidden_dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g1(0.0, 1.0 / std::sqrt(double(input_dim)));
  std::normal_distribution<double> g2(0.0, 1.0 / std::sqrt(double(cfg_.hidden_dim)));
  w1_.resize(h, d);
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index k = 0; k < d; ++k) w1_(i, k) = float(g1(rng));
  gamma_ = RowMatrixXf::Ones(1, h);
  beta_ = RowMatrixXf::Zero(1, h);
  w2_.resize(1, h);
  for (Eigen::Index i = 0; i < h; ++i) w2_(0, i) = float(g2(rng));
  b2_ = RowMatrixXf::Zero(1, 1);
  fitted_ = false;
  losses_.clear();
}

float MlpHead::logit(const VectorXf& x,
                     std::unique_ptr<HeadTrace>* trace) const {
  if (static_cast<std::size_t>(x.size()) != dim_)
    throw std::invalid_argument("input dimension mismatch");
  VectorXf u = w1_ * x;
  const float mean = u.mean();
  const float var = (u.array() - mean).square().mean();
  const float inv = 1.0f / std::sqrt(var + kLnEps);
  VectorXf nhat = (u.array() - mean) * inv;
  VectorXf n = nhat.cwiseProduct(gamma_.transpose().col(0)) +
               beta_.transpose().col(0);
  VectorXf r = n.cwiseMax(0.0f);
  float out = (w2_ * r)(0, 0) + b2_(0, 0);
  if (trace) {
    auto t = std::make_unique<MlpTrace>();
    t->x = x;
    t->nhat = std::move(nhat);
    t->n = std::move(n);
    t->r = std::move(r);
    t->inv = inv;
    *trace = std::move(t);
  }
  return out;
}

VectorXf MlpHead::backward(const HeadTrace& trace, float dlogit,
                           std::vector<RowMatrixXf>& grads) const {
  const auto& t = dynamic_cast<const MlpTrace&>(trace);
  // blocks: w1, gamma, beta, w2, b2
  grads[3].noalias() += dlogit * t.r.transpose();
  grads[4](0, 0) += dlogit;
  VectorXf dr = dlogit * w2_.transpose().col(0);
  VectorXf dn =
      dr.cwiseProduct((t.n.array() > 0.0f).cast<float>().matrix());
  grads[1].noalias() += dn.cwiseProduct(t.nhat).transpose();
  grads[2].noalias() += dn.transpose();
  VectorXf dnhat = dn.cwiseProduct(gamma_.transpose().col(0));
  const float m1 = dnhat.mean();
  const float m2 = dnhat.cwiseProduct(t.nhat).mean();
  VectorXf du = (dnhat.array() - m1 - t.nhat.array() * m2) * t.inv;
  grads[0].noalias() += du * t.x.transpose();
  return w1_.transpose() * du;
}

std::vector<RowMatrixXf*> MlpHead::param_blocks() {
  return {&w1_, &gamma_, &beta_, &w2_, &b2_};
}

void MlpHead::fit(const RowMatrixXf& X, const std::vector<int>& y,
                  std::uint64_t seed) {
  VectorXf yl = check_fit_args(X, y);
  const auto n = X.rows();
  init_joint(static_cast<std::size_t>(X.cols()), seed);

  AdamW opt;
  opt.lr = cfg_.learning_rate > 0.0f ? cfg_.learning_rate : 0.02f;
  auto params = param_blocks();
  opt.init(params);

  losses_.clear();
  const auto h = Eigen::Index(cfg_.hidden_dim);
  for (int it = 0; it < cfg_.iters; ++it) {
    RowMatrixXf U = X * w1_.transpose(); // n x h
    VectorXf means = U.rowwise().mean();
    RowMatrixXf C = U.colwise() - means;
    VectorXf inv =
        (C.array().square().rowwise().mean() + kLnEps).sqrt().inverse();
    RowMatrixXf Nhat = C.array().colwise() * inv.array();
    RowMatrixXf N = (Nhat.array().rowwise() * gamma_.row(0).array())
                        .rowwise() +
                    beta_.row(0).array();
    RowMatrixXf R = N.cwiseMax(0.0f);
    VectorXf logits = (R * w2_.transpose()).col(0).array() + b2_(0, 0);
    VectorXf p = logits.unaryExpr([](float v) { return sigmoidf(v); });
    losses_.push_back(bce(p, yl) +
                      0.5f * cfg_.l2 * (w1_.squaredNorm() + w2_.squaredNorm()));

    VectorXf dlogits = (p - yl) / float(n);
    std::vector<RowMatrixXf> grads(5);
    grads[3] = dlogits.transpose() * R;
    grads[4] = RowMatrixXf::Constant(1, 1, dlogits.sum());
    RowMatrixXf dR = dlogits * w2_; // n x h
    RowMatrixXf dN =
        dR.cwiseProduct((N.array() > 0.0f).cast<float>().matrix());
    grads[1] = dN.cwiseProduct(Nhat).colwise().sum();
    grads[2] = dN.colwise().sum();
    RowMatrixXf dNhat = dN.array().rowwise() * gamma_.row(0).array();
    VectorXf m1 = dNhat.rowwise().mean();
    VectorXf m2 = dNhat.cwiseProduct(Nhat).rowwise().mean();
    RowMatrixXf dU =
        (((dNhat.colwise() - m1).array() -
          Nhat.array().colwise() * m2.array())
             .colwise() *
         inv.array());
    grads[0] = dU.transpose() * X;
    (void)h;
    opt.step(params, grads);
    // Decoupled weight decay on the linear weights. Folding the penalty into
    // the gradient would be flattened by Adam's per-coordinate normalization,
    // leaving the final norm insensitive to l2.
    const float shrink = std::max(0.0f, 1.0f - opt.lr * cfg_.l2);
    w1_ *= shrink;
    w2_ *= shrink;
  }
  fitted_ = true;
}

float MlpHead::predict_proba(const VectorXf& x) const {
  check_predict_args(fitted_, dim_, x);
  return sigmoidf(logit(x, nullptr));
}

VectorXf MlpHead::first_layer_activations(const VectorXf& x) const {
  if (w1_.size() == 0) throw std::logic_error("head is not initialized");
  if (static_cast<std::size_t>(x.size()) != dim_)
    throw std::invalid_argument("input dimension mismatch");
  VectorXf u = w1_ * x;
  const float mean = u.mean();
  const float var = (u.array() - mean).square().mean();
  VectorXf nhat = (u.array() - mean) / std::sqrt(var + kLnEps);
  return nhat.cwiseProduct(gamma_.transpose().col(0)) +
         beta_.transpose().col(0);
}

float MlpHead::weight_norm() const {
  return std::sqrt(w1_.squaredNorm() + w2_.squaredNorm());
}

void MlpHead::save(const std::filesystem::path& dir) const {
  ordered_json j;
  j["kind"] = kMlpKind;
  j["threshold"] = threshold_;
  j["input_dim"] = dim_;
  j["fitted"] = fitted_;
  j["hyperparams"] = {{"l2", cfg_.l2},
                      {"iters", cfg_.iters},
                      {"learning_rate", cfg_.learning_rate},
                      {"hidden_dim", cfg_.hidden_dim}};
  write_head_json(dir, j);
  write_blocks(dir / "params.bin", {&w1_, &gamma_, &beta_, &w2_, &b2_});
}

std::unique_ptr<MlpHead> MlpHead::load(const std::filesystem::path& dir) {
  auto j = read_head_json(dir);
  HeadConfig cfg;
  cfg.kind = kMlpKind;
  cfg.threshold = j.at("threshold").get<float>();
  cfg.l2 = j.at("hyperparams").at("l2").get<float>();
  cfg.iters = j.at("hyperparams").at("iters").get<int>();
  cfg.learning_rate = j.at("hyperparams").at("learning_rate").get<float>();
  cfg.hidden_dim = j.at("hyperparams").at("hidden_dim").get<int>();
  auto head = std::make_unique<MlpHead>(cfg);
  head->dim_ = j.at("input_dim").get<std::size_t>();
  const auto d = Eigen::Index(head->dim_);
  const auto h = Eigen::Index(cfg.hidden_dim);
  head->w1_.resize(h, d);
  head->gamma_.resize(1, h);
  head->beta_.resize(1, h);
  head->w2_.resize(1, h);
  head->b2_.resize(1, 1);
  read_blocks(dir / "params.bin", {&head->w1_, &head->gamma_, &head->beta_,
                                   &head->w2_, &head->b2_});
  head->fitted_ = j.at("fitted").get<bool>();
  return head;
}

// ---------------------------------------------------------------------------
// GbtHead
// ---------------------------------------------------------------------------

GbtHead::GbtHead(const HeadConfig& cfg) : cfg_(cfg) {
  cfg_.kind = kGbtKind;
  cfg_.validate();
  threshold_ = cfg_.threshold;
}

const std::string& GbtHead::kind() const { return kGbtKind; }

namespace {

struct TreeBuilder {
  const RowMatrixXf& X;
  const std::vector<float>& g;
  const std::vector<float>& h;
  float lambda;
  float shrinkage;
  int max_depth;
  GbtHead::Tree nodes;

  int build(std::vector<int> idx, int depth) {
    double G = 0.0, H = 0.0;
    for (int i : idx) {
      G += g[size_t(i)];
      H += h[size_t(i)];
    }
    const int node_id = int(nodes.size());
    nodes.push_back({});

    int best_feature = -1;
    float best_split = 0.0f;
    double best_gain = 1e-12;
    const double parent = G * G / (H + lambda);
    if (depth < max_depth && idx.size() >= 2) {
      for (int f = 0; f < int(X.cols()); ++f) {
        std::vector<std::pair<float, int>> order;
        order.reserve(idx.size());
        for (int i : idx) order.emplace_back(X(i, f), i);
        std::sort(order.begin(), order.end());
        double GL = 0.0, HL = 0.0;
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
          GL += g[size_t(order[k].second)];
          HL += h[size_t(order[k].second)];
          if (order[k].first == order[k + 1].first) continue;
          const double GR = G - GL, HR = H - HL;
          const double gain =
              GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - parent;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = f;
            best_split = 0.5f * (order[k].first + order[k + 1].first);
          }
        }
      }
    }

    if (best_feature < 0) {
      nodes[size_t(node_id)].feature = -1;
      nodes[size_t(node_id)].value =
          float(-G / (H + lambda)) * shrinkage;
      return node_id;
    }

    std::vector<int> left, right;
    for (int i : idx)
      (X(i, best_feature) < best_split ? left : right).push_back(i);
    nodes[size_t(node_id)].feature = best_feature;
    nodes[size_t(node_id)].split = best_split;
    nodes[size_t(node_id)].left = build(std::move(left), depth + 1);
    nodes[size_t(node_id)].right = build(std::move(right), depth + 1);
    return node_id;
  }
};

float eval_tree(const GbtHead::Tree& tree, const VectorXf& x) {
  int at = 0;
  while (tree[size_t(at)].feature >= 0) {
    const auto& nd = tree[size_t(at)];
    at = x[nd.feature] < nd.split ? nd.left : nd.right;
  }
  return tree[size_t(at)].value;
}

} // namespace

void GbtHead::fit(const RowMatrixXf& X, const std::vector<int>& y,
                  std::uint64_t seed) {
  (void)seed; // exact greedy splits, nothing random
  VectorXf yl = check_fit_args(X, y);
  const auto n = X.rows();
  dim_ = static_cast<std::size_t>(X.cols());

  const float prior = yl.mean();
  base_score_ = std::log(prior / (1.0f - prior));
  const auto ns = static_cast<std::size_t>(n);
  std::vector<float> f(ns, base_score_);
  std::vector<float> grad(ns), hess(ns);
  std::vector<int> all(ns);
  for (int i = 0; i < int(n); ++i) all[size_t(i)] = i;

  trees_.clear();
  losses_.clear();
  for (int round = 0; round < cfg_.n_trees; ++round) {
    VectorXf p(n);
    for (Eigen::Index i = 0; i < n; ++i) p[i] = sigmoidf(f[size_t(i)]);
    losses_.push_back(bce(p, yl));
    for (Eigen::Index i = 0; i < n; ++i) {
      grad[size_t(i)] = p[i] - yl[i];
      hess[size_t(i)] = std::max(p[i] * (1.0f - p[i]), 1e-6f);
    }
    TreeBuilder builder{X,    grad, hess, cfg_.gbt_lambda, cfg_.gbt_shrinkage,
                        cfg_.max_depth, {}};
    builder.build(all, 0);
    for (Eigen::Index i = 0; i < n; ++i)
      f[size_t(i)] += eval_tree(builder.nodes, X.row(i).transpose());
    trees_.push_back(std::move(builder.nodes));
  }
  {
    VectorXf p(n);
    for (Eigen::Index i = 0; i < n; ++i) p[i] = sigmoidf(f[size_t(i)]);
    losses_.push_back(bce(p, yl));
  }
  fitted_ = true;
}

float GbtHead::predict_proba(const VectorXf& x) const {
  check_predict_args(fitted_, dim_, x);
  float f = base_score_;
  for (const auto& tree : trees_) f += eval_tree(tree, x);
  return sigmoidf(f);
}

void GbtHead::save(const std::filesystem::path& dir) const {
  ordered_json j;
  j["kind"] = kGbtKind;
  j["threshold"] = threshold_;
  j["input_dim"] = dim_;
  j["fitted"] = fitted_;
  j["hyperparams"] = {{"n_trees", cfg_.n_trees},
                      {"max_depth", cfg_.max_depth},
                      {"shrinkage", cfg_.gbt_shrinkage},
                      {"lambda", cfg_.gbt_lambda}};
  write_head_json(dir, j);

  std::ofstream out(dir / "params.bin", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "params.bin").string());
  auto put_f32 = [&out](float v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  auto put_i32 = [&out](std::int32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  put_f32(base_score_);
  put_i32(std::int32_t(trees_.size()));
  for (const auto& tree : trees_) {
    put_i32(std::int32_t(tree.size()));
    for (const auto& nd : tree) {
      put_i32(nd.feature);
      put_f32(nd.split);
      put_i32(nd.left);
      put_i32(nd.right);
      put_f32(nd.value);
    }
  }
}

std::unique_ptr<GbtHead> GbtHead::load(const std::filesystem::path& dir) {
  auto j = read_head_json(dir);
  HeadConfig cfg;
  cfg.kind = kGbtKind;
  cfg.threshold = j.at("threshold").get<float>();
  cfg.n_trees = j.at("hyperparams").at("n_trees").get<int>();
  cfg.max_depth = j.at("hyperparams").at("max_depth").get<int>();
  cfg.gbt_shrinkage = j.at("hyperparams").at("shrinkage").get<float>();
  cfg.gbt_lambda = j.at("hyperparams").at("lambda").get<float>();
  auto head = std::make_unique<GbtHead>(cfg);
  head->dim_ = j.at("input_dim").get<std::size_t>();

  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw DataError("cannot read " + (dir / "params.bin").string());
  auto get_f32 = [&in]() {
    float v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  auto get_i32 = [&in]() {
    std::int32_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  head->base_score_ = get_f32();
  const auto n_trees = get_i32();
  for (std::int32_t t = 0; t < n_trees; ++t) {
    Tree tree(static_cast<std::size_t>(get_i32()));
    for (auto& nd : tree) {
      nd.feature = get_i32();
      nd.split = get_f32();
      nd.left = get_i32();
      nd.right = get_i32();
      nd.value = get_f32();
    }
    head->trees_.push_back(std::move(tree));
  }
  if (!in) throw DataError("truncated parameter file");
  head->fitted_ = j.at("fitted").get<bool>();
  return head;
}

// ---------------------------------------------------------------------------
// Factories
// ---------------------------------------------------------------------------

std::unique_ptr<ClassifierHead> make_head(const HeadConfig& cfg) {
  cfg.validate();
  if (cfg.kind == kLogisticKind) return std::make_unique<LogisticHead>(cfg);
  if (cfg.kind == kMlpKind) return std::make_unique<MlpHead>(cfg);
  return std::make_unique<GbtHead>(cfg);
}

std::unique_ptr<ClassifierHead> load_head(const std::filesystem::path& dir) {
  std::string kind;
  try {
    kind = read_head_json(dir).at("kind").get<std::string>();
  } catch (const ordered_json::exception& e) {
    throw DataError("invalid " + (dir / "head.json").string() + ": " +
                    e.what());
  }
  if (kind == kLogisticKind) return LogisticHead::load(dir);
  if (kind == kMlpKind) return MlpHead::load(dir);
  if (kind == kGbtKind) return GbtHead::load(dir);
  throw DataError("unknown head kind \"" + kind + "\" in " + dir.string());
}

} // namespace mhscreen
