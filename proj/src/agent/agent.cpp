#include "elastic/agent.hpp"
#include "elastic/errors.hpp"

#include <cmath>

namespace elastic::agent {

Agent::Agent(AgentConfig config, Rng& init_rng) : config_(std::move(config)) {
  const bool elastic = config_.algo != Algo::SacFixed;
  const std::size_t k = elastic ? 4 : 3;
  DenseNet actor = DenseNet::mlp(config_.obs_dim, config_.actor_hidden, 2 * k, config_.hidden_activation, init_rng,
                                 config_.final_layer_bound);
  policy_ = PolicyHead(std::move(actor), config_.range, elastic, config_.fixed_duration);

  const std::size_t critic_in = config_.obs_dim + kCriticActionDim;
  critics_.q1 = DenseNet::mlp(critic_in, config_.critic_hidden, 1, config_.hidden_activation, init_rng,
                              config_.final_layer_bound);
  critics_.q2 = DenseNet::mlp(critic_in, config_.critic_hidden, 1, config_.hidden_activation, init_rng,
                              config_.final_layer_bound);
  critics_.q1_target = critics_.q1;
  critics_.q2_target = critics_.q2;

  if (!(config_.init_temperature > 0.0)) throw ConfigError("init_temperature must be > 0");
  temp_.log_temp = std::log(config_.init_temperature);
  temp_.target_entropy = -static_cast<double>(k);

  reward_ = RewardParams::make(config_.alpha_m, config_.alpha_max, config_.psi);
  reward_.trend_delta = config_.trend_delta;

  auto sched = [&](double rate) {
    gradnet::Schedule s;
    s.kind = config_.schedule;
    s.base_rate = rate;
    s.k_decay = config_.k_decay;
    return s;
  };
  actor_opt_ = gradnet::OptimState(policy_.actor().parameter_count(), sched(config_.actor_lr));
  q1_opt_ = gradnet::OptimState(critics_.q1.parameter_count(), sched(config_.critic_lr));
  q2_opt_ = gradnet::OptimState(critics_.q2.parameter_count(), sched(config_.critic_lr));
  temp_opt_ = gradnet::OptimState(1, sched(config_.temp_lr));
}

ActionSample Agent::act(std::span<const double> obs, Rng& rng, bool deterministic) const {
  return deterministic ? policy_.deterministic(obs) : policy_.sample(obs, rng);
}

ActionSample Agent::random_action(Rng& rng) const {
  ActionSample s;
  for (auto& c : s.controls) c = rng.uniform(-1.0, 1.0);
  s.duration = policy_.elastic() ? rng.uniform(config_.range.d_min, config_.range.d_max) : config_.fixed_duration;
  return s;
}

double Agent::training_reward(double task_reward, double duration) const {
  switch (config_.algo) {
    case Algo::Moseac: return shape_reward(task_reward, duration, reward_, config_.range);
    case Algo::Seac: return seac_shape_reward(task_reward, duration, config_.eps_pen, config_.tau_pen);
    case Algo::SacFixed: return task_reward;
  }
  return task_reward;
}

Batch Agent::make_batch(std::span<const Transition* const> transitions) const {
  const auto n = static_cast<Eigen::Index>(transitions.size());
  if (n == 0) throw ContractViolation("make_batch: empty batch");
  const auto d = static_cast<Eigen::Index>(config_.obs_dim);
  Batch b;
  b.obs.resize(n, d);
  b.next_obs.resize(n, d);
  b.actions.resize(n, static_cast<Eigen::Index>(kCriticActionDim));
  b.rewards.resize(n, 1);
  b.terminal.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = *transitions[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(t.obs.size()) != d || static_cast<Eigen::Index>(t.next_obs.size()) != d)
      throw ContractViolation("make_batch: observation width mismatch");
    for (Eigen::Index j = 0; j < d; ++j) {
      b.obs(i, j) = t.obs[static_cast<std::size_t>(j)];
      b.next_obs(i, j) = t.next_obs[static_cast<std::size_t>(j)];
    }
    const auto enc = policy_.encode(t.controls, t.duration);
    for (Eigen::Index j = 0; j < 4; ++j) b.actions(i, j) = enc[static_cast<std::size_t>(j)];
    b.rewards(i, 0) = config_.literal_reward_storage ? t.shaped_reward : training_reward(t.task_reward, t.duration);
    b.terminal(i, 0) = t.terminal ? 1.0 : 0.0;
  }
  return b;
}

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw TrainingDiverged(std::string(what) + " is not finite");
}

}  // namespace

UpdateStats Agent::update(const Batch& batch, Rng& rng) {
  UpdateStats stats;
  {
    Tape tape;
    Var loss = critic_loss(tape, critics_, policy_, batch, temp_, config_.gamma, rng);
    stats.critic_loss = tape.value(loss)(0, 0);
    require_finite(stats.critic_loss, "critic loss");
    tape.backward(loss);
    const auto g1 = tape.param_grad(critics_.q1);
    const auto g2 = tape.param_grad(critics_.q2);
    gradnet::opt_step(q1_opt_, critics_.q1.weights(), g1);
    gradnet::opt_step(q2_opt_, critics_.q2.weights(), g2);
  }
  Matrix log_probs;
  {
    Tape tape;
    auto a = actor_loss(tape, policy_, critics_, batch, temp_, rng);
    stats.actor_loss = tape.value(a.loss)(0, 0);
    require_finite(stats.actor_loss, "actor loss");
    tape.backward(a.loss);
    const auto g = tape.param_grad(policy_.actor());
    stats.actor_grad_norm = gradnet::l2_norm(g);
    gradnet::opt_step(actor_opt_, policy_.actor().weights(), g);
    log_probs = tape.value(a.log_prob);
  }
  {
    Tape tape;
    Var leaf;
    Var loss = temperature_loss(tape, temp_, log_probs, &leaf);
    stats.temperature_loss = tape.value(loss)(0, 0);
    tape.backward(loss);
    const double g = tape.grad(leaf)(0, 0);
    gradnet::opt_step(temp_opt_, std::span<double>(&temp_.log_temp, 1), std::span<const double>(&g, 1));
  }
  gradnet::soft_update(critics_.q1_target, critics_.q1, config_.tau_soft);
  gradnet::soft_update(critics_.q2_target, critics_.q2, config_.tau_soft);
  last_grad_norm_ = stats.actor_grad_norm;
  ++updates_;
  return stats;
}

void Agent::adapt(double window_avg_reward) {
  if (config_.algo != Algo::Moseac) return;
  reward_ = adapt_alpha(reward_, window_avg_reward);
}

double Agent::q_min(std::span<const double> obs, const std::array<double, 3>& controls, double duration) const {
  std::vector<double> x(obs.begin(), obs.end());
  const auto enc = policy_.encode(controls, duration);
  x.insert(x.end(), enc.begin(), enc.end());
  return std::min(critics_.q1.forward(x)[0], critics_.q2.forward(x)[0]);
}

bool operator==(const Agent& a, const Agent& b) {
  return a.policy_.actor() == b.policy_.actor() && a.critics_.q1 == b.critics_.q1 && a.critics_.q2 == b.critics_.q2 &&
         a.critics_.q1_target == b.critics_.q1_target && a.critics_.q2_target == b.critics_.q2_target &&
         a.temp_.log_temp == b.temp_.log_temp && a.reward_.alpha_m == b.reward_.alpha_m &&
         a.reward_.prev_avg_reward == b.reward_.prev_avg_reward && a.actor_opt_.m == b.actor_opt_.m &&
         a.actor_opt_.v == b.actor_opt_.v && a.actor_opt_.step == b.actor_opt_.step;
}

}  // namespace elastic::agent
