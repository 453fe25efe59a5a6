#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mhscreen/linalg.hpp"

namespace mhscreen {

// Adaptive-moment optimizer with decoupled weight decay over a fixed list of
// parameter blocks. weight_decay = 0 gives plain Adam; callers that decay
// only a subset of blocks keep it at 0 and shrink those blocks themselves.
struct AdamW {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;

  void init(const std::vector<RowMatrixXf*>& params) {
    t_ = 0;
    m_.clear();
    v_.clear();
    for (const auto* p : params) {
      m_.push_back(RowMatrixXf::Zero(p->rows(), p->cols()));
      v_.push_back(RowMatrixXf::Zero(p->rows(), p->cols()));
    }
  }

  void step(const std::vector<RowMatrixXf*>& params,
            const std::vector<RowMatrixXf>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw std::logic_error("optimizer block count mismatch");
    ++t_;
    const float c1 = 1.0f - std::pow(beta1, static_cast<float>(t_));
    const float c2 = 1.0f - std::pow(beta2, static_cast<float>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      const auto& g = grads[i];
      m_[i] = beta1 * m_[i] + (1.0f - beta1) * g;
      v_[i] = beta2 * v_[i] + (1.0f - beta2) * g.cwiseProduct(g);
      RowMatrixXf mhat = m_[i] / c1;
      RowMatrixXf vhat = v_[i] / c2;
      p.array() -= lr * (mhat.array() / (vhat.array().sqrt() + eps) +
                         weight_decay * p.array());
    }
  }

private:
  int t_ = 0;
  std::vector<RowMatrixXf> m_, v_;
};

} // namespace mhscreen
