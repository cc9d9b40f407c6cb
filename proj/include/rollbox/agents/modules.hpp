#ifndef ROLLBOX_AGENTS_MODULES_HPP_
#define ROLLBOX_AGENTS_MODULES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "rollbox/agents/spec.hpp"
#include "rollbox/env/action.hpp"
#include "rollbox/nn/layers.hpp"

namespace rollbox::agents {

using nn::Tensor;

// Two-layer perceptron with a ReLU hidden layer and a linear output.
struct Mlp {
  nn::Linear l1, l2;
  Mlp() = default;
  Mlp(int in, int hidden, int out, Rng& rng, double out_gain = 1.0)
      : l1(in, hidden, nn::kReluGain, rng), l2(hidden, out, out_gain, rng) {}
  Tensor operator()(const Tensor& x) const { return l2(nn::relu(l1(x))); }
  nn::ParamList params() const {
    nn::ParamList out = nn::prefixed("l1.", l1.params());
    nn::append(out, nn::prefixed("l2.", l2.params()));
    return out;
  }
};

inline Tensor one_hot(const std::vector<int>& actions, int k) {
  std::vector<double> v(actions.size() * k, 0.0);
  for (std::size_t i = 0; i < actions.size(); ++i) v[i * k + actions[i]] = 1.0;
  return Tensor::from({static_cast<int>(actions.size()), k}, std::move(v));
}

// Row-wise squared L2 norm, [B, D] -> [B].
inline Tensor row_sq_norm(const Tensor& x) { return nn::sum_last(nn::square(x)); }

inline std::vector<double> row_norms(const Tensor& x) {
  const int b = x.dim(0), d = x.dim(1);
  std::vector<double> out(b);
  for (int i = 0; i < b; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += x.data()[i * d + j] * x.data()[i * d + j];
    out[i] = std::sqrt(s);
  }
  return out;
}

// --- ICM -------------------------------------------------------------------

struct IcmLoss {
  Tensor total;
  Tensor forward;  // MSE of the forward model
  Tensor inverse;  // action cross-entropy
};

struct Icm {
  Mlp forward_model;  // [phi, onehot(a)] -> phi'
  Mlp inverse_model;  // [phi, phi'] -> logits

  Icm() = default;
  Icm(int latent, int hidden, Rng& rng)
      : forward_model(latent + env::kNumActions, hidden, latent, rng), inverse_model(2 * latent, hidden, env::kNumActions, rng) {}

  Tensor predict(const Tensor& phi, const std::vector<int>& actions) const {
    return forward_model(nn::concat_last(phi, one_hot(actions, env::kNumActions)));
  }

  IcmLoss loss(const Tensor& phi, const Tensor& phi_next, const std::vector<int>& actions, double beta) const {
    IcmLoss l;
    l.forward = nn::mse(predict(phi, actions), phi_next);
    l.inverse = nn::cross_entropy(inverse_model(nn::concat_last(phi, phi_next)), actions);
    l.total = nn::add(nn::scale(l.forward, beta), nn::scale(l.inverse, 1.0 - beta));
    return l;
  }

  nn::ParamList params() const {
    nn::ParamList out = nn::prefixed("forward.", forward_model.params());
    nn::append(out, nn::prefixed("inverse.", inverse_model.params()));
    return out;
  }
};

// eta/2 * ||prediction - target||^2 per row.
inline std::vector<double> forward_error_reward(const Tensor& prediction, const Tensor& target, double eta) {
  nn::NoGradGuard ng;
  const Tensor d = row_sq_norm(nn::sub(prediction, target));
  std::vector<double> out(d.values());
  for (double& r : out) r *= 0.5 * eta;
  return out;
}

// --- RND -------------------------------------------------------------------

// Per-pixel running mean and variance. The RND target sees whitened
// pixels so its features respond to what changes between frames rather
// than to the constant table background.
struct PixelStats {
  Tensor mean;   // [P]
  Tensor var;    // [P]
  Tensor count;  // [1]

  PixelStats() = default;
  explicit PixelStats(int pixels)
      : mean(Tensor::zeros({pixels})), var(Tensor::from({pixels}, std::vector<double>(pixels, 1.0))), count(Tensor::zeros({1})) {}

  // Parallel-variance merge of a batch of images into the running moments.
  void update(const std::vector<const std::uint8_t*>& images) {
    if (images.empty()) return;
    const std::size_t p = mean.size();
    const double nb = static_cast<double>(images.size());
    const double na = count.values()[0];
    const double n = na + nb;
    for (std::size_t k = 0; k < p; ++k) {
      double m = 0.0;
      for (const auto* img : images) m += img[k] * (1.0 / 255.0);
      m /= nb;
      double v = 0.0;
      for (const auto* img : images) {
        const double d = img[k] * (1.0 / 255.0) - m;
        v += d * d;
      }
      v /= nb;
      const double delta = m - mean.values()[k];
      const double m2 = var.values()[k] * na + v * nb + delta * delta * na * nb / n;
      mean.values()[k] += delta * nb / n;
      var.values()[k] = m2 / n;
    }
    count.values()[0] = n;
  }

  // (x - mean) / sqrt(var + 1e-8), clipped to [-5, 5].
  Tensor whiten(const std::vector<const std::uint8_t*>& images, int size, int channels) const {
    const std::size_t per = static_cast<std::size_t>(size) * size * channels;
    if (per != mean.size()) throw Error("pixel statistics do not match the image size");
    std::vector<double> v(images.size() * per);
    for (std::size_t b = 0; b < images.size(); ++b) {
      for (std::size_t k = 0; k < per; ++k) {
        const double z = (images[b][k] * (1.0 / 255.0) - mean.values()[k]) / std::sqrt(var.values()[k] + 1e-8);
        v[b * per + k] = std::clamp(z, -5.0, 5.0);
      }
    }
    return Tensor::from({static_cast<int>(images.size()), size, size, channels}, std::move(v));
  }

  nn::ParamList params() const { return {{"mean", mean}, {"var", var}, {"count", count}}; }
};

struct Rnd {
  nn::Encoder target_encoder;  // frozen
  nn::Linear target_head;      // frozen
  Mlp predictor;               // on top of the shared encoder
  PixelStats stats;
  int size = 0, channels = 0;

  Rnd() = default;
  Rnd(const nn::EncoderSpec& spec, int hidden, int out, Rng& rng)
      : stats(spec.input_size * spec.input_size * spec.input_channels), size(spec.input_size), channels(spec.input_channels) {
    Rng trng = rng.fork("rnd-target");
    target_encoder = nn::Encoder(spec, trng).clone(false);
    target_head = nn::Linear(spec.latent_dim, out, 1.0, trng);
    target_head.w = target_head.w.detach();
    target_head.b = target_head.b.detach();
    // Starts near zero so early novelty reflects the target, not the
    // predictor's own initial output.
    predictor = Mlp(spec.latent_dim, hidden, out, rng, 0.01);
  }

  Tensor target(const std::vector<const std::uint8_t*>& images) const {
    nn::NoGradGuard ng;
    return target_head(target_encoder(stats.whiten(images, size, channels)));
  }

  Tensor predict(const Tensor& phi) const { return predictor(phi); }

  nn::ParamList params() const { return nn::prefixed("predictor.", predictor.params()); }

  nn::ParamList target_params() const {
    nn::ParamList out = nn::prefixed("target.encoder.", target_encoder.params());
    nn::append(out, nn::prefixed("target.head.", target_head.params()));
    return out;
  }

  nn::ParamList state_params() const { return nn::prefixed("obs_stats.", stats.params()); }
};

// Mean over output dims of the squared error, per row.
inline std::vector<double> prediction_error_reward(const Tensor& prediction, const Tensor& target) {
  nn::NoGradGuard ng;
  const Tensor d = row_sq_norm(nn::sub(prediction, target));
  std::vector<double> out(d.values());
  const double k = prediction.dim(1);
  for (double& r : out) r /= k;
  return out;
}

// --- RIDE ------------------------------------------------------------------

inline std::vector<double> ride_reward(const Tensor& phi, const Tensor& phi_next) {
  nn::NoGradGuard ng;
  return row_norms(nn::sub(phi_next, phi));
}

// Visit counts over discretised embeddings, reset every `period` steps.
class EpisodicCounter {
 public:
  explicit EpisodicCounter(int period = 512, double bin = 0.5) : period_(period), bin_(bin) {}

  // Returns the count after recording `embedding`.
  int visit(const double* embedding, int dim) {
    if (steps_ % period_ == 0) counts_.clear();
    ++steps_;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int i = 0; i < dim; ++i) {
      const auto q = static_cast<std::int64_t>(std::floor(embedding[i] / bin_));
      h = splitmix64(h ^ static_cast<std::uint64_t>(q));
    }
    return ++counts_[h];
  }

  void reset() {
    counts_.clear();
    steps_ = 0;
  }

 private:
  int period_;
  double bin_;
  std::int64_t steps_ = 0;
  std::unordered_map<std::uint64_t, int> counts_;
};

// --- CURL ------------------------------------------------------------------

// Crops a `crop` x `crop` window at (top, left) and resizes it back to the
// full size with bilinear sampling (pixel-centre alignment). Output in [0, 1].
inline void crop_resize(const std::uint8_t* img, int size, int channels, int crop, int top, int left, double* out) {
  const double scale = static_cast<double>(crop) / size;
  for (int r = 0; r < size; ++r) {
    const double sy = std::clamp((r + 0.5) * scale - 0.5, 0.0, crop - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, crop - 1);
    const double fy = sy - y0;
    for (int c = 0; c < size; ++c) {
      const double sx = std::clamp((c + 0.5) * scale - 0.5, 0.0, crop - 1.0);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, crop - 1);
      const double fx = sx - x0;
      for (int ch = 0; ch < channels; ++ch) {
        auto at = [&](int y, int x) { return img[((top + y) * size + (left + x)) * channels + ch] * (1.0 / 255.0); };
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
        out[(r * size + c) * channels + ch] = v;
      }
    }
  }
}

inline Tensor random_crops(const std::vector<const std::uint8_t*>& images, int size, int channels, int crop, Rng& rng) {
  const std::size_t per = static_cast<std::size_t>(size) * size * channels;
  std::vector<double> v(images.size() * per);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const int top = rng.range(0, size - crop);
    const int left = rng.range(0, size - crop);
    crop_resize(images[b], size, channels, crop, top, left, v.data() + b * per);
  }
  return Tensor::from({static_cast<int>(images.size()), size, size, channels}, std::move(v));
}

// InfoNCE over logits [B, B] with positives on the diagonal.
inline Tensor info_nce(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(0) != logits.dim(1)) throw Error("info_nce: logits must be square, got " + nn::shape_str(logits.shape()));
  if (logits.dim(0) < 2) throw Error("contrastive batch needs B >= 2");
  std::vector<int> diag(logits.dim(0));
  for (int i = 0; i < logits.dim(0); ++i) diag[i] = i;
  return nn::cross_entropy(logits, diag);
}

struct Curl {
  Tensor w;                // [latent, latent] bilinear form
  nn::Encoder key_encoder; // momentum copy, never receives gradients

  Curl() = default;
  Curl(const nn::Encoder& online, int latent)
      : w(Tensor::zeros({latent, latent}, true)), key_encoder(online.clone(false)) {
    for (int i = 0; i < latent; ++i) w.data()[i * latent + i] = 1.0;
  }

  // logits_ij = q_i^T W k_j
  Tensor logits(const Tensor& q, const Tensor& k) const { return nn::matmul_nt(nn::matmul(q, w), k); }

  Tensor keys(const Tensor& images) const {
    nn::NoGradGuard ng;
    return key_encoder(images);
  }

  Tensor loss(const nn::Encoder& online, const Tensor& query_images, const Tensor& key_images) const {
    if (query_images.dim(0) < 2) throw Error("contrastive batch needs B >= 2");
    return info_nce(logits(online(query_images), keys(key_images)));
  }

  // key <- tau * key + (1 - tau) * online.
  void update_momentum(const nn::Encoder& online, double tau) {
    const nn::ParamList src = online.params();
    nn::ParamList dst = key_encoder.params();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto& s = src[i].tensor.values();
      auto& d = dst[i].tensor.values();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = tau * d[k] + (1.0 - tau) * s[k];
    }
  }

  nn::ParamList params() const { return {{"w", w}}; }
  nn::ParamList key_params() const { return nn::prefixed("key.", key_encoder.params()); }
};

}  // namespace rollbox::agents

#endif  // ROLLBOX_AGENTS_MODULES_HPP_
