#ifndef ROLLBOX_NN_ADAM_HPP_
#define ROLLBOX_NN_ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "rollbox/nn/layers.hpp"

namespace rollbox::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

class Adam {
 public:
  Adam() = default;
  Adam(ParamList params, AdamConfig config) : params_(std::move(params)) {
    state_.config = config;
    for (const auto& p : params_) {
      state_.m.emplace_back(p.tensor.size(), 0.0);
      state_.v.emplace_back(p.tensor.size(), 0.0);
    }
  }

  // Applies one update and clears the gradients.
  void step() {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) throw Error("missing gradient for parameter '" + p.name + "'");
    }
    ++state_.step;
    const AdamConfig& c = state_.config;
    const double t = static_cast<double>(state_.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor& p = params_[k].tensor;
      auto& m = state_.m[k];
      auto& v = state_.v[k];
      const auto& g = p.grad();
      double* w = p.data();
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        w[i] -= c.lr * mh / (std::sqrt(vh) + c.eps);
      }
      p.zero_grad();
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void set_lr(double lr) { state_.config.lr = lr; }
  const AdamState& state() const { return state_; }
  const ParamList& params() const { return params_; }

  void load_state(const AdamState& s) {
    if (s.m.size() != params_.size() || s.v.size() != params_.size()) throw Error("optimizer state does not match parameters");
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (s.m[k].size() != params_[k].tensor.size() || s.v[k].size() != params_[k].tensor.size()) {
        throw Error("optimizer state does not match parameter '" + params_[k].name + "'");
      }
    }
    state_ = s;
  }

 private:
  ParamList params_;
  AdamState state_;
};

// Rescales gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
inline double clip_grad_norm(const ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (const auto& p : params) {
      Tensor t = p.tensor;  // handle copy, same storage
      for (double& g : t.grad()) g *= f;
    }
  }
  return norm;
}

}  // namespace rollbox::nn

#endif  // ROLLBOX_NN_ADAM_HPP_
