#ifndef ROLLBOX_AGENTS_SPEC_HPP_
#define ROLLBOX_AGENTS_SPEC_HPP_

#include <array>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "rollbox/core/error.hpp"
#include "rollbox/nn/layers.hpp"

namespace rollbox::agents {

enum class Model { none, icm, rnd, curl };
enum class Exploration { extrinsic, forward_error, state_prediction_error, ride, random };
enum class Phase { exploration, finetune };

inline constexpr std::string_view to_string(Model m) {
  switch (m) {
    case Model::none: return "none";
    case Model::icm: return "icm";
    case Model::rnd: return "rnd";
    case Model::curl: return "curl";
  }
  return "?";
}

inline constexpr std::string_view to_string(Exploration e) {
  switch (e) {
    case Exploration::extrinsic: return "extrinsic";
    case Exploration::forward_error: return "forward_error";
    case Exploration::state_prediction_error: return "state_prediction_error";
    case Exploration::ride: return "ride";
    case Exploration::random: return "random";
  }
  return "?";
}

inline Model model_from_string(std::string_view s) {
  for (Model m : {Model::none, Model::icm, Model::rnd, Model::curl}) {
    if (to_string(m) == s) return m;
  }
  throw UsageError("unknown model '" + std::string(s) + "'");
}

inline Exploration exploration_from_string(std::string_view s) {
  for (Exploration e : {Exploration::extrinsic, Exploration::forward_error, Exploration::state_prediction_error,
                        Exploration::ride, Exploration::random}) {
    if (to_string(e) == s) return e;
  }
  throw UsageError("unknown exploration '" + std::string(s) + "'");
}

struct Hyperparams {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 256;
  int rollout = 2048;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double eta = 1.0;   // intrinsic scale
  double beta = 0.2;  // ICM forward weight; inverse gets 1 - beta
  double tau = 0.995; // momentum-encoder retention, see modules.hpp
  int crop = 64;
  double lr = 1e-3;
  double max_grad_norm = 0.5;
  bool ride_count_norm = false;
  int ride_count_period = 512;
  int model_hidden = 256;
  int rnd_out = 64;
  int num_envs = 8;  // parallel environments during fine-tuning

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct AgentSpec {
  std::string name = "ppo";
  Model model = Model::none;
  Exploration exploration = Exploration::extrinsic;
  bool share_encoder = true;
  nn::EncoderSpec encoder;
  Hyperparams hp;

  friend bool operator==(const AgentSpec&, const AgentSpec&) = default;

  // Pairs allowed by the model summary table, plus plain PPO.
  void validate() const {
    using E = Exploration;
    bool ok = false;
    switch (model) {
      case Model::none: ok = exploration == E::extrinsic; break;
      case Model::icm: ok = exploration == E::forward_error || exploration == E::ride; break;
      case Model::rnd: ok = exploration == E::state_prediction_error || exploration == E::ride; break;
      case Model::curl: ok = exploration == E::ride || exploration == E::random; break;
    }
    if (!ok) {
      throw UsageError("invalid agent combination model=" + std::string(to_string(model)) +
                       " exploration=" + std::string(to_string(exploration)));
    }
    if (!share_encoder) throw UsageError("share_encoder must be true");
    encoder.validate();
    const Hyperparams& h = hp;
    if (!(h.gamma >= 0 && h.gamma <= 1) || !(h.gae_lambda >= 0 && h.gae_lambda <= 1)) throw UsageError("gamma and lambda must be in [0,1]");
    if (!(h.clip > 0)) throw UsageError("clip must be > 0");
    if (h.epochs < 1 || h.minibatch < 1 || h.rollout < 1 || h.num_envs < 1) throw UsageError("epochs, minibatch, rollout and num_envs must be >= 1");
    if (!(h.beta >= 0 && h.beta <= 1)) throw UsageError("beta must be in [0,1]");
    if (!(h.tau >= 0 && h.tau <= 1)) throw UsageError("tau must be in [0,1]");
    if (h.crop < 1 || h.crop > encoder.input_size) throw UsageError("crop must be within the observation size");
    if (!(h.lr > 0)) throw UsageError("lr must be > 0");
    if (h.ride_count_period < 1 || h.model_hidden < 1 || h.rnd_out < 1) throw UsageError("sizes must be >= 1");
  }

  bool trains_policy() const { return exploration != Exploration::random; }
};

// Named agents of the model summary table.
inline const std::array<std::string_view, 7>& preset_names() {
  static const std::array<std::string_view, 7> names{"ppo", "icm", "rnd", "icm_ride", "rnd_ride", "curl_ride", "curl_random"};
  return names;
}

inline AgentSpec preset(std::string_view name) {
  AgentSpec s;
  s.name = std::string(name);
  using E = Exploration;
  if (name == "ppo") {
    s.model = Model::none, s.exploration = E::extrinsic;
  } else if (name == "icm") {
    s.model = Model::icm, s.exploration = E::forward_error;
  } else if (name == "rnd") {
    s.model = Model::rnd, s.exploration = E::state_prediction_error;
  } else if (name == "icm_ride") {
    s.model = Model::icm, s.exploration = E::ride;
  } else if (name == "rnd_ride") {
    s.model = Model::rnd, s.exploration = E::ride;
  } else if (name == "curl_ride") {
    s.model = Model::curl, s.exploration = E::ride;
  } else if (name == "curl_random") {
    s.model = Model::curl, s.exploration = E::random;
  } else {
    throw UsageError("unknown agent '" + std::string(name) + "'");
  }
  return s;
}

inline nlohmann::json to_json(const Hyperparams& h) {
  return {{"gamma", h.gamma},         {"gae_lambda", h.gae_lambda},
          {"clip", h.clip},           {"epochs", h.epochs},
          {"minibatch", h.minibatch}, {"rollout", h.rollout},
          {"entropy_coef", h.entropy_coef}, {"value_coef", h.value_coef},
          {"eta", h.eta},             {"beta", h.beta},
          {"tau", h.tau},             {"crop", h.crop},
          {"lr", h.lr},               {"max_grad_norm", h.max_grad_norm},
          {"ride_count_norm", h.ride_count_norm}, {"ride_count_period", h.ride_count_period},
          {"model_hidden", h.model_hidden}, {"rnd_out", h.rnd_out},
          {"num_envs", h.num_envs}};
}

inline Hyperparams hyperparams_from_json(const nlohmann::json& j, Hyperparams h = {}) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("gamma", h.gamma);
  get("gae_lambda", h.gae_lambda);
  get("clip", h.clip);
  get("epochs", h.epochs);
  get("minibatch", h.minibatch);
  get("rollout", h.rollout);
  get("entropy_coef", h.entropy_coef);
  get("value_coef", h.value_coef);
  get("eta", h.eta);
  get("beta", h.beta);
  get("tau", h.tau);
  get("crop", h.crop);
  get("lr", h.lr);
  get("max_grad_norm", h.max_grad_norm);
  get("ride_count_norm", h.ride_count_norm);
  get("ride_count_period", h.ride_count_period);
  get("model_hidden", h.model_hidden);
  get("rnd_out", h.rnd_out);
  get("num_envs", h.num_envs);
  return h;
}

inline nlohmann::json to_json(const AgentSpec& s) {
  return {{"name", s.name},
          {"model", std::string(to_string(s.model))},
          {"exploration", std::string(to_string(s.exploration))},
          {"share_encoder", s.share_encoder},
          {"encoder", nn::to_json(s.encoder)},
          {"hyperparams", to_json(s.hp)}};
}

// Accepts either {"preset": "curl_ride", ...overrides} or a full spec.
inline AgentSpec agent_spec_from_json(const nlohmann::json& j) {
  AgentSpec s;
  try {
    if (j.contains("preset")) s = preset(j["preset"].get<std::string>());
    if (j.contains("name")) s.name = j["name"].get<std::string>();
    if (j.contains("model")) s.model = model_from_string(j["model"].get<std::string>());
    if (j.contains("exploration")) s.exploration = exploration_from_string(j["exploration"].get<std::string>());
    if (j.contains("share_encoder")) s.share_encoder = j["share_encoder"].get<bool>();
    if (j.contains("encoder")) s.encoder = nn::encoder_spec_from_json(j["encoder"]);
    if (j.contains("hyperparams")) s.hp = hyperparams_from_json(j["hyperparams"], s.hp);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed agent spec: ") + e.what());
  }
  s.validate();
  return s;
}

// Checkpoints are keyed by the encoder layout; heads are task-specific.
inline std::string descriptor(const AgentSpec& s) { return s.encoder.descriptor(); }

}  // namespace rollbox::agents

#endif  // ROLLBOX_AGENTS_SPEC_HPP_
