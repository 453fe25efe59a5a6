#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mhscreen/linalg.hpp"

namespace mhscreen {

// Hyperparameters for the per-disorder binary heads. Unused fields are
// ignored by kinds they do not apply to. learning_rate <= 0 picks the
// kind default (logistic 0.5, mlp 0.02).
struct HeadConfig {
  std::string kind = "logistic"; // logistic | mlp | gbt
  float threshold = 0.5f;
  float l2 = 1e-4f;   // weight penalty, logistic and mlp
  int iters = 400;    // full-batch steps, logistic and mlp
  float learning_rate = 0.0f;
  int hidden_dim = 128; // mlp
  int n_trees = 60;     // gbt
  int max_depth = 3;    // gbt
  float gbt_shrinkage = 0.3f;
  float gbt_lambda = 1.0f;

  void validate() const;
};

// Binary classifier over pooled user embeddings. Rows of X are samples.
class ClassifierHead {
public:
  virtual ~ClassifierHead() = default;

  virtual const std::string& kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual bool fitted() const = 0;

  float threshold() const { return threshold_; }
  void set_threshold(float t);

  // Deterministic given seed. Throws DataError when y is single-class,
  // std::invalid_argument on size or dimension mismatch.
  virtual void fit(const RowMatrixXf& X, const std::vector<int>& y,
                   std::uint64_t seed) = 0;

  // Probability of the positive class. Throws std::logic_error when not
  // fitted, std::invalid_argument on dimension mismatch.
  virtual float predict_proba(const VectorXf& x) const = 0;

  int predict(const VectorXf& x) const {
    return predict_proba(x) >= threshold_ ? 1 : 0;
  }

  // Full-batch loss per iteration (logistic/mlp) or per boosting round (gbt).
  const std::vector<float>& training_losses() const { return losses_; }

  virtual void save(const std::filesystem::path& dir) const = 0;

protected:
  float threshold_ = 0.5f;
  std::vector<float> losses_;
};

// Opaque per-sample forward record for the joint-training backward pass.
struct HeadTrace {
  virtual ~HeadTrace() = default;
};

// A head whose logit is differentiable in both parameters and input, so it
// can be trained jointly with LoRA adapters by minibatch gradient descent.
class DifferentiableHead : public ClassifierHead {
public:
  // Allocates parameters for joint training at this input size. Replaces any
  // earlier fit; the head reports fitted() == false until finalize_joint().
  virtual void init_joint(std::size_t input_dim, std::uint64_t seed) = 0;
  virtual void finalize_joint() = 0;

  virtual float logit(const VectorXf& x,
                      std::unique_ptr<HeadTrace>* trace) const = 0;
  // Accumulates d loss / d params into grads (aligned with param_blocks
  // order) and returns d loss / d x.
  virtual VectorXf backward(const HeadTrace& trace, float dlogit,
                            std::vector<RowMatrixXf>& grads) const = 0;

  virtual std::vector<RowMatrixXf*> param_blocks() = 0;
  std::size_t param_count() const;
};

class LogisticHead final : public DifferentiableHead {
public:
  explicit LogisticHead(const HeadConfig& cfg = {});

  const std::string& kind() const override;
  std::size_t input_dim() const override { return dim_; }
  bool fitted() const override { return fitted_; }

  void fit(const RowMatrixXf& X, const std::vector<int>& y,
           std::uint64_t seed) override;
  float predict_proba(const VectorXf& x) const override;

  void init_joint(std::size_t input_dim, std::uint64_t seed) override;
  void finalize_joint() override { fitted_ = true; }
  float logit(const VectorXf& x,
              std::unique_ptr<HeadTrace>* trace) const override;
  VectorXf backward(const HeadTrace& trace, float dlogit,
                    std::vector<RowMatrixXf>& grads) const override;
  std::vector<RowMatrixXf*> param_blocks() override;

  void save(const std::filesystem::path& dir) const override;
  static std::unique_ptr<LogisticHead> load(const std::filesystem::path& dir);

  float weight_norm() const { return w_.norm(); }

private:
  HeadConfig cfg_;
  std::size_t dim_ = 0;
  bool fitted_ = false;
  // Inputs are standardized with training statistics; joint training uses
  // identity statistics since embeddings move during optimization.
  VectorXf mu_, sigma_;
  RowMatrixXf w_; // 1 x d
  RowMatrixXf b_; // 1 x 1
};

class MlpHead final : public DifferentiableHead {
public:
  explicit MlpHead(const HeadConfig& cfg = {});

  const std::string& kind() const override;
  std::size_t input_dim() const override { return dim_; }
  bool fitted() const override { return fitted_; }

  void fit(const RowMatrixXf& X, const std::vector<int>& y,
           std::uint64_t seed) override;
  float predict_proba(const VectorXf& x) const override;

  void init_joint(std::size_t input_dim, std::uint64_t seed) override;
  void finalize_joint() override { fitted_ = true; }
  float logit(const VectorXf& x,
              std::unique_ptr<HeadTrace>* trace) const override;
  VectorXf backward(const HeadTrace& trace, float dlogit,
                    std::vector<RowMatrixXf>& grads) const override;
  std::vector<RowMatrixXf*> param_blocks() override;

  void save(const std::filesystem::path& dir) const override;
  static std::unique_ptr<MlpHead> load(const std::filesystem::path& dir);

  // Post-layer-norm activations of the hidden layer. The first linear layer
  // has no bias, so these are exactly invariant to positive rescaling of x.
  VectorXf first_layer_activations(const VectorXf& x) const;
  float weight_norm() const;

private:
  HeadConfig cfg_;
  std::size_t dim_ = 0;
  bool fitted_ = false;
  RowMatrixXf w1_;    // hidden x d, no bias
  RowMatrixXf gamma_; // 1 x hidden, layer norm scale
  RowMatrixXf beta_;  // 1 x hidden, layer norm shift
  RowMatrixXf w2_;    // 1 x hidden
  RowMatrixXf b2_;    // 1 x 1
};

// Gradient-boosted trees with second-order (gradient/hessian) splits,
// exact greedy split search, shrinkage, and a depth limit. Deterministic.
class GbtHead final : public ClassifierHead {
public:
  struct Node {
    int feature = -1; // -1 marks a leaf
    float split = 0.0f;
    int left = -1;
    int right = -1;
    float value = 0.0f; // leaf weight, shrinkage already applied
  };
  using Tree = std::vector<Node>;

  explicit GbtHead(const HeadConfig& cfg = {});

  const std::string& kind() const override;
  std::size_t input_dim() const override { return dim_; }
  bool fitted() const override { return fitted_; }

  void fit(const RowMatrixXf& X, const std::vector<int>& y,
           std::uint64_t seed) override;
  float predict_proba(const VectorXf& x) const override;

  void save(const std::filesystem::path& dir) const override;
  static std::unique_ptr<GbtHead> load(const std::filesystem::path& dir);

  std::size_t tree_count() const { return trees_.size(); }

private:
  HeadConfig cfg_;
  std::size_t dim_ = 0;
  bool fitted_ = false;
  float base_score_ = 0.0f;
  std::vector<Tree> trees_;
};

// Builds a head of cfg.kind. Throws ConfigError on an unknown kind.
std::unique_ptr<ClassifierHead> make_head(const HeadConfig& cfg);

// Reads head.json to dispatch on kind, then restores parameters exactly.
std::unique_ptr<ClassifierHead> load_head(const std::filesystem::path& dir);

} // namespace mhscreen
