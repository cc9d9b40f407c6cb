#ifndef ROLLBOX_AGENTS_AGENT_HPP_
#define ROLLBOX_AGENTS_AGENT_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rollbox/agents/modules.hpp"
#include "rollbox/agents/spec.hpp"
#include "rollbox/env/raster.hpp"
#include "rollbox/nn/adam.hpp"
#include "rollbox/nn/checkpoint.hpp"

namespace rollbox::agents {

using Image = std::shared_ptr<const std::vector<std::uint8_t>>;

inline Image share(std::vector<std::uint8_t> pixels) {
  return std::make_shared<const std::vector<std::uint8_t>>(std::move(pixels));
}

struct Transition {
  Image obs;
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward_ext = 0.0;
  double reward_int = 0.0;
  bool done = false;
  Image next_obs;
  // Stream ends here without termination; GAE bootstraps from next_value.
  bool cut = false;
  double next_value = 0.0;
  int env_id = 0;
};

inline void check(const Transition& t) {
  if (!std::isfinite(t.reward_ext) || !std::isfinite(t.reward_int)) throw Error("transition reward is not finite");
  if (!(t.log_prob <= 0.0)) throw Error("transition log_prob must be <= 0");
  if (!t.obs || !t.next_obs) throw Error("transition without observation");
  if (t.action < 0 || t.action >= env::kNumActions) throw Error("transition action out of range");
}

// Which reward drives the update.
inline double total_reward(double reward_ext, double reward_int, const AgentSpec& spec, Phase phase) {
  if (spec.model == Model::none || phase == Phase::finetune) return reward_ext;
  return reward_int;
}

// min(r * A, clip(r, 1 - eps, 1 + eps) * A) for one sample.
inline double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// GAE over a batch laid out as consecutive streams. The successor of t is
// t+1 unless t is done (no bootstrap) or cut (bootstrap from next_value).
inline Advantages compute_gae(const std::vector<Transition>& batch, const std::vector<double>& rewards, double gamma, double lambda) {
  const std::size_t n = batch.size();
  if (rewards.size() != n) throw Error("gae: reward count does not match batch");
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const Transition& t = batch[k];
    const bool last = k + 1 == n;
    if (last && !t.done && !t.cut) throw Error("gae: final transition must be done or cut");
    double next_value = 0.0;
    double carry = 0.0;
    if (!t.done) {
      next_value = t.cut ? t.next_value : batch[k + 1].value;
      carry = t.cut ? 0.0 : 1.0;
    }
    const double delta = rewards[k] + gamma * next_value - t.value;
    next_adv = delta + gamma * lambda * carry * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + t.value;
  }
  return out;
}

inline void normalize(std::vector<double>& v) {
  if (v.size() < 2) return;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / v.size());
  for (double& x : v) x = (x - mean) / (sd + 1e-8);
}

// Welford estimate of a stream's standard deviation.
class RunningStd {
 public:
  void update(const std::vector<double>& xs) {
    for (double x : xs) {
      ++n_;
      const double d = x - mean_;
      mean_ += d / n_;
      m2_ += d * (x - mean_);
    }
  }
  double std() const { return n_ < 2 ? 1.0 : std::sqrt(m2_ / n_); }
  double count() const { return n_; }

 private:
  double n_ = 0.0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct PpoTerms {
  Tensor loss;       // minimised: -(surrogate - c_v * value + c_e * entropy)
  Tensor surrogate;  // mean clipped surrogate
  Tensor value_loss; // mean squared error
  Tensor entropy;    // mean policy entropy
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

inline PpoTerms ppo_terms(const Tensor& logits, const Tensor& values, const std::vector<int>& actions,
                          const std::vector<double>& old_log_probs, const std::vector<double>& advantages,
                          const std::vector<double>& returns, const Hyperparams& hp) {
  const int b = logits.dim(0);
  const auto bs = static_cast<std::size_t>(b);
  if (actions.size() != bs || old_log_probs.size() != bs || advantages.size() != bs || returns.size() != bs) {
    throw Error("ppo: batch fields disagree in length");
  }
  PpoTerms t;
  const Tensor logp_all = nn::log_softmax(logits);
  const Tensor logp = nn::gather_last(logp_all, actions);
  const Tensor ratio = nn::exp(nn::sub(logp, Tensor::from({b}, old_log_probs)));
  const Tensor adv = Tensor::from({b}, advantages);
  const Tensor s1 = nn::mul(ratio, adv);
  const Tensor s2 = nn::mul(nn::clamp(ratio, 1.0 - hp.clip, 1.0 + hp.clip), adv);
  t.surrogate = nn::mean(nn::minimum(s1, s2));
  t.value_loss = nn::mse(nn::reshape(values, {b}), Tensor::from({b}, returns));
  t.entropy = nn::scale(nn::mean(nn::sum_last(nn::mul(nn::exp(logp_all), logp_all))), -1.0);
  const Tensor objective =
      nn::add(nn::sub(t.surrogate, nn::scale(t.value_loss, hp.value_coef)), nn::scale(t.entropy, hp.entropy_coef));
  t.loss = nn::scale(objective, -1.0);
  int clipped = 0;
  double kl = 0.0;
  for (int i = 0; i < b; ++i) {
    const double r = ratio.values()[i];
    if (std::abs(r - 1.0) > hp.clip) ++clipped;
    kl += old_log_probs[i] - logp.values()[i];
  }
  t.clip_fraction = static_cast<double>(clipped) / b;
  t.approx_kl = kl / b;
  return t;
}

struct ActResult {
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double model_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double intrinsic_mean = 0.0;  // raw, before normalisation
  double extrinsic_mean = 0.0;
  int minibatches = 0;
  std::vector<double> model_losses;  // one per minibatch
};

// Actor-critic over a shared encoder, plus the world model of the spec.
class Agent {
 public:
  Agent(const AgentSpec& spec, std::uint64_t seed, Phase phase = Phase::exploration)
      : spec_(spec), phase_(phase), rng_(derive_seed(seed, "agent")), counter_(spec.hp.ride_count_period) {
    spec_.validate();
    Rng init(derive_seed(seed, "init"));
    encoder_ = nn::Encoder(spec_.encoder, init);
    const int latent = spec_.encoder.latent_dim;
    policy_ = nn::Linear(latent, env::kNumActions, 0.01, init);
    value_ = nn::Linear(latent, 1, 1.0, init);
    if (phase_ == Phase::exploration) {
      switch (spec_.model) {
        case Model::icm: icm_ = Icm(latent, spec_.hp.model_hidden, init); break;
        case Model::rnd: rnd_ = Rnd(spec_.encoder, spec_.hp.model_hidden, spec_.hp.rnd_out, init); break;
        case Model::curl: curl_ = Curl(encoder_, latent); break;
        case Model::none: break;
      }
    }
    optimizer_ = nn::Adam(trainable_params(), nn::AdamConfig{spec_.hp.lr});
  }

  const AgentSpec& spec() const { return spec_; }
  Phase phase() const { return phase_; }
  const nn::Encoder& encoder() const { return encoder_; }
  const std::optional<Icm>& icm() const { return icm_; }
  const std::optional<Rnd>& rnd() const { return rnd_; }
  std::optional<Rnd>& rnd() { return rnd_; }
  const std::optional<Curl>& curl() const { return curl_; }
  nn::Adam& optimizer() { return optimizer_; }
  Rng& rng() { return rng_; }

  bool model_active() const { return phase_ == Phase::exploration && spec_.model != Model::none; }
  bool random_policy() const { return phase_ == Phase::exploration && !spec_.trains_policy(); }

  Tensor images(const std::vector<const std::uint8_t*>& px) const {
    return nn::images_to_tensor(px, spec_.encoder.input_size, spec_.encoder.input_channels);
  }

  Tensor logits(const Tensor& phi) const { return policy_(phi); }
  Tensor values(const Tensor& phi) const { return value_(phi); }

  // Samples one action per image. The random-exploration agent ignores the
  // policy head and draws uniformly.
  ActResult act(const std::vector<const std::uint8_t*>& px, Rng& rng) const {
    ActResult r;
    const std::size_t n = px.size();
    if (random_policy()) {
      for (std::size_t i = 0; i < n; ++i) {
        r.actions.push_back(static_cast<int>(rng.below(env::kNumActions)));
        r.log_probs.push_back(-std::log(static_cast<double>(env::kNumActions)));
        r.values.push_back(0.0);
      }
      return r;
    }
    nn::NoGradGuard ng;
    const Tensor phi = encoder_(images(px));
    const Tensor logp = nn::log_softmax(logits(phi));
    const Tensor v = values(phi);
    std::vector<double> probs(env::kNumActions);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = logp.data() + i * env::kNumActions;
      for (int k = 0; k < env::kNumActions; ++k) probs[k] = std::exp(row[k]);
      const int a = nn::sample_categorical(probs.data(), env::kNumActions, rng);
      r.actions.push_back(a);
      r.log_probs.push_back(std::min(0.0, row[a]));
      r.values.push_back(v.data()[i]);
    }
    return r;
  }

  std::vector<double> value_of(const std::vector<const std::uint8_t*>& px) const {
    if (random_policy()) return std::vector<double>(px.size(), 0.0);
    nn::NoGradGuard ng;
    return values(encoder_(images(px))).values();
  }

  // Raw intrinsic rewards (>= 0) of a batch under the current weights.
  std::vector<double> intrinsic_rewards(const std::vector<Transition>& batch) {
    std::vector<double> out(batch.size(), 0.0);
    if (!model_active()) return out;
    nn::NoGradGuard ng;
    const auto embed = embeddings(batch);
    const int d = spec_.encoder.latent_dim;
    constexpr std::size_t kChunk = 256;
    for (std::size_t s = 0; s < batch.size(); s += kChunk) {
      const std::size_t e = std::min(batch.size(), s + kChunk);
      const int n = static_cast<int>(e - s);
      std::vector<double> a(n * d), b(n * d);
      std::vector<int> acts(n);
      for (int i = 0; i < n; ++i) {
        const auto& t = batch[s + i];
        std::copy_n(embed.at(t.obs.get()).begin(), d, a.begin() + i * d);
        std::copy_n(embed.at(t.next_obs.get()).begin(), d, b.begin() + i * d);
        acts[i] = t.action;
      }
      const Tensor phi = Tensor::from({n, d}, std::move(a));
      const Tensor phi_next = Tensor::from({n, d}, std::move(b));
      std::vector<double> r;
      switch (spec_.exploration) {
        case Exploration::forward_error: r = forward_error_reward(icm_->predict(phi, acts), phi_next, spec_.hp.eta); break;
        case Exploration::state_prediction_error: {
          std::vector<const std::uint8_t*> px;
          for (int i = 0; i < n; ++i) px.push_back(batch[s + i].next_obs->data());
          r = prediction_error_reward(rnd_->predict(phi_next), rnd_->target(px));
          for (double& x : r) x *= spec_.hp.eta;
          break;
        }
        case Exploration::ride: {
          r = ride_reward(phi, phi_next);
          for (int i = 0; i < n; ++i) {
            r[i] *= spec_.hp.eta;
            if (spec_.hp.ride_count_norm) {
              const int c = counter_.visit(phi_next.data() + i * d, d);
              r[i] /= std::sqrt(static_cast<double>(c));
            }
          }
          break;
        }
        default: break;
      }
      std::copy(r.begin(), r.end(), out.begin() + s);
    }
    return out;
  }

  // World-model loss on a minibatch (ICM forward MSE enters the total with
  // the inverse term; the recorded loss is the forward part).
  struct ModelLoss {
    Tensor total;
    double recorded = 0.0;
  };

  ModelLoss model_loss(const std::vector<const Transition*>& mb, const Tensor& phi) {
    ModelLoss out;
    std::vector<const std::uint8_t*> obs, next;
    std::vector<int> acts;
    for (const auto* t : mb) {
      obs.push_back(t->obs->data());
      next.push_back(t->next_obs->data());
      acts.push_back(t->action);
    }
    switch (spec_.model) {
      case Model::icm: {
        const IcmLoss l = icm_->loss(phi, encoder_(images(next)), acts, spec_.hp.beta);
        out.total = l.total;
        out.recorded = l.forward.item();
        break;
      }
      case Model::rnd: {
        out.total = nn::mse(rnd_->predict(encoder_(images(next))), rnd_->target(next));
        out.recorded = out.total.item();
        break;
      }
      case Model::curl: {
        const int s = spec_.encoder.input_size, c = spec_.encoder.input_channels;
        const Tensor q = random_crops(obs, s, c, spec_.hp.crop, rng_);
        const Tensor k = random_crops(obs, s, c, spec_.hp.crop, rng_);
        out.total = curl_->loss(encoder_, q, k);
        out.recorded = out.total.item();
        break;
      }
      case Model::none: break;
    }
    return out;
  }

  // One PPO update (or a model-only update for the random-policy agent) on
  // a complete rollout. Fills reward_int with normalised intrinsic rewards.
  UpdateStats update(std::vector<Transition>& batch) {
    if (batch.empty()) throw Error("ppo_update: empty batch");
    for (const auto& t : batch) check(t);
    UpdateStats st;
    if (rnd_) {
      std::vector<const std::uint8_t*> px;
      for (const auto& t : batch) px.push_back(t.next_obs->data());
      rnd_->stats.update(px);
    }
    if (model_active()) {
      const auto raw = intrinsic_rewards(batch);
      int_std_.update(raw);
      const double sd = int_std_.std();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        st.intrinsic_mean += raw[i] / batch.size();
        batch[i].reward_int = raw[i] / (sd + 1e-8);
      }
    }
    std::vector<double> rewards(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      rewards[i] = total_reward(batch[i].reward_ext, batch[i].reward_int, spec_, phase_);
      st.extrinsic_mean += batch[i].reward_ext / batch.size();
    }
    Advantages adv = compute_gae(batch, rewards, spec_.hp.gamma, spec_.hp.gae_lambda);
    std::vector<double> norm_adv = adv.advantages;
    normalize(norm_adv);

    const bool train_policy = !random_policy();
    const std::size_t mb_size = static_cast<std::size_t>(spec_.hp.minibatch);
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < spec_.hp.epochs; ++epoch) {
      shuffle(order);
      for (std::size_t s = 0; s < order.size(); s += mb_size) {
        const std::size_t e = std::min(order.size(), s + mb_size);
        if (e - s < 2 && s > 0) continue;  // a lone leftover sample adds only noise
        std::vector<const Transition*> mb;
        std::vector<const std::uint8_t*> px;
        std::vector<int> acts;
        std::vector<double> old_lp, a, ret;
        for (std::size_t k = s; k < e; ++k) {
          const Transition& t = batch[order[k]];
          mb.push_back(&t);
          px.push_back(t.obs->data());
          acts.push_back(t.action);
          old_lp.push_back(t.log_prob);
          a.push_back(norm_adv[order[k]]);
          ret.push_back(adv.returns[order[k]]);
        }
        const Tensor phi = encoder_(images(px));
        Tensor loss;
        if (train_policy) {
          const PpoTerms terms = ppo_terms(logits(phi), values(phi), acts, old_lp, a, ret, spec_.hp);
          loss = terms.loss;
          st.policy_loss += -terms.surrogate.item();
          st.value_loss += terms.value_loss.item();
          st.entropy += terms.entropy.item();
          st.approx_kl += terms.approx_kl;
          st.clip_fraction += terms.clip_fraction;
        }
        if (model_active()) {
          const ModelLoss ml = model_loss(mb, phi);
          loss = loss.defined() ? nn::add(loss, ml.total) : ml.total;
          st.model_losses.push_back(ml.recorded);
          st.model_loss += ml.recorded;
        }
        nn::backward(loss);
        fill_missing_grads();
        nn::clip_grad_norm(optimizer_.params(), spec_.hp.max_grad_norm);
        optimizer_.step();
        if (curl_) curl_->update_momentum(encoder_, spec_.hp.tau);
        ++st.minibatches;
      }
    }
    if (st.minibatches > 0) {
      const double m = st.minibatches;
      st.policy_loss /= m, st.value_loss /= m, st.entropy /= m, st.approx_kl /= m, st.clip_fraction /= m, st.model_loss /= m;
    }
    return st;
  }

  // Parameters the optimizer updates in the current phase.
  nn::ParamList trainable_params() const {
    nn::ParamList out = nn::prefixed("encoder.", encoder_.params());
    if (!random_policy()) {
      nn::append(out, nn::prefixed("policy.", policy_.params()));
      nn::append(out, nn::prefixed("value.", value_.params()));
    }
    if (icm_) nn::append(out, nn::prefixed("icm.", icm_->params()));
    if (rnd_) nn::append(out, nn::prefixed("rnd.", rnd_->params()));
    if (curl_) nn::append(out, nn::prefixed("curl.", curl_->params()));
    return out;
  }

  // Everything, including frozen and momentum networks.
  nn::ParamList all_params() const {
    nn::ParamList out = nn::prefixed("encoder.", encoder_.params());
    nn::append(out, nn::prefixed("policy.", policy_.params()));
    nn::append(out, nn::prefixed("value.", value_.params()));
    if (icm_) nn::append(out, nn::prefixed("icm.", icm_->params()));
    if (rnd_) {
      nn::append(out, nn::prefixed("rnd.", rnd_->params()));
      nn::append(out, nn::prefixed("rnd.", rnd_->target_params()));
      nn::append(out, nn::prefixed("rnd.", rnd_->state_params()));
    }
    if (curl_) {
      nn::append(out, nn::prefixed("curl.", curl_->params()));
      nn::append(out, nn::prefixed("curl.", curl_->key_params()));
    }
    return out;
  }

  nn::ParamList policy_params() const {
    nn::ParamList out = nn::prefixed("policy.", policy_.params());
    nn::append(out, nn::prefixed("value.", value_.params()));
    return out;
  }

  nn::Checkpoint checkpoint(std::uint64_t step, const std::string& source, bool with_optimizer = false) const {
    nn::Checkpoint c;
    c.descriptor = descriptor(spec_);
    c.step = step;
    c.source = source;
    c.params = nn::capture(all_params());
    if (with_optimizer) {
      // Optimizer moments follow trainable_params(); store them only when the
      // two lists coincide so the file stays self-describing.
      const auto names = trainable_params();
      const auto all = all_params();
      bool same = names.size() == all.size();
      for (std::size_t i = 0; same && i < names.size(); ++i) same = names[i].name == all[i].name;
      if (same) c.optimizer = optimizer_.state();
    }
    return c;
  }

  void check_descriptor(const nn::Checkpoint& c) const {
    if (c.descriptor != descriptor(spec_)) {
      throw Error("checkpoint/spec mismatch: checkpoint encoder '" + c.descriptor + "', spec expects '" + descriptor(spec_) + "'");
    }
  }

  // Loads only the encoder; heads keep their fresh initialisation.
  void load_encoder(const nn::Checkpoint& c) {
    check_descriptor(c);
    nn::ParamList p = encoder_.params();
    nn::restore(c.params, p, "encoder.");
    if (curl_) curl_->key_encoder = encoder_.clone(false);
  }

  // Loads every parameter this agent owns.
  void load_all(const nn::Checkpoint& c) {
    check_descriptor(c);
    nn::ParamList p = all_params();
    nn::restore(c.params, p);
    if (c.optimizer) optimizer_.load_state(*c.optimizer);
  }

 private:
  // Embeddings of every distinct image in the batch.
  std::unordered_map<const std::vector<std::uint8_t>*, std::vector<double>> embeddings(const std::vector<Transition>& batch) const {
    std::vector<const std::vector<std::uint8_t>*> unique;
    std::unordered_map<const std::vector<std::uint8_t>*, std::vector<double>> out;
    for (const auto& t : batch) {
      for (const auto* img : {t.obs.get(), t.next_obs.get()}) {
        if (out.emplace(img, std::vector<double>{}).second) unique.push_back(img);
      }
    }
    const int d = spec_.encoder.latent_dim;
    constexpr std::size_t kChunk = 128;
    for (std::size_t s = 0; s < unique.size(); s += kChunk) {
      const std::size_t e = std::min(unique.size(), s + kChunk);
      std::vector<const std::uint8_t*> px;
      for (std::size_t k = s; k < e; ++k) px.push_back(unique[k]->data());
      const Tensor phi = encoder_(images(px));
      for (std::size_t k = s; k < e; ++k) {
        const double* row = phi.data() + (k - s) * d;
        out[unique[k]].assign(row, row + d);
      }
    }
    return out;
  }

  // Parameters outside the loss graph (e.g. the unused ICM inverse head
  // when beta = 1) get a zero gradient instead of failing the step.
  void fill_missing_grads() {
    for (const auto& p : optimizer_.params()) {
      nn::Tensor t = p.tensor;
      if (!t.has_grad()) t.grad().assign(t.size(), 0.0);
    }
  }

  void shuffle(std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng_.below(i)]);
  }

  AgentSpec spec_;
  Phase phase_;
  Rng rng_;
  nn::Encoder encoder_;
  nn::Linear policy_;
  nn::Linear value_;
  std::optional<Icm> icm_;
  std::optional<Rnd> rnd_;
  std::optional<Curl> curl_;
  nn::Adam optimizer_;
  RunningStd int_std_;
  EpisodicCounter counter_;
};

}  // namespace rollbox::agents

#endif  // ROLLBOX_AGENTS_AGENT_HPP_
