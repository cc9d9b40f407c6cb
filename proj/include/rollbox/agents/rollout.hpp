#ifndef ROLLBOX_AGENTS_ROLLOUT_HPP_
#define ROLLBOX_AGENTS_ROLLOUT_HPP_

#include <functional>
#include <vector>

#include "rollbox/agents/agent.hpp"
#include "rollbox/env/environment.hpp"

namespace rollbox::agents {

struct EnvSlot {
  env::Environment env;
  Image obs;
  int env_id = 0;
};

// Called after every environment step; may reset the slot (and must set
// slot.obs to the observation the next action will see).
using StepHook = std::function<void(EnvSlot&, Transition&, const env::StepResult&)>;

// Steps every slot `steps` times with the agent's policy. Transitions are
// laid out slot by slot; each slot's last transition is cut and carries the
// bootstrap value of its next observation.
inline std::vector<Transition> collect_rollout(const Agent& agent, std::vector<EnvSlot>& slots, int steps, Rng& rng,
                                               const StepHook& hook = {}) {
  std::vector<std::vector<Transition>> per(slots.size());
  for (int t = 0; t < steps; ++t) {
    std::vector<const std::uint8_t*> px;
    for (const auto& s : slots) px.push_back(s.obs->data());
    const ActResult a = agent.act(px, rng);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      EnvSlot& s = slots[k];
      env::StepResult r = s.env.step(env::Action::checked(a.actions[k]));
      Transition tr;
      tr.obs = s.obs;
      tr.action = a.actions[k];
      tr.log_prob = a.log_probs[k];
      tr.value = a.values[k];
      tr.reward_ext = r.reward;
      tr.done = r.done;
      tr.next_obs = share(std::move(r.observation.pixels));
      tr.env_id = s.env_id;
      s.obs = tr.next_obs;
      if (hook) hook(s, tr, r);
      per[k].push_back(std::move(tr));
    }
  }
  std::vector<const std::uint8_t*> tails;
  for (const auto& seg : per) {
    if (!seg.empty() && !seg.back().done) tails.push_back(seg.back().next_obs->data());
  }
  const std::vector<double> tail_values = tails.empty() ? std::vector<double>{} : agent.value_of(tails);
  std::vector<Transition> out;
  std::size_t ti = 0;
  for (auto& seg : per) {
    if (seg.empty()) continue;
    if (!seg.back().done) {
      seg.back().cut = true;
      seg.back().next_value = tail_values[ti++];
    }
    for (auto& tr : seg) out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace rollbox::agents

#endif  // ROLLBOX_AGENTS_ROLLOUT_HPP_
