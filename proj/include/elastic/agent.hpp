#pragma once

// Elastic actor-critic decision core: reward shaping with an adaptive,
// capped magnitude scale, a squashed-Gaussian policy that emits controls
// together with their duration, twin critics and entropy temperature.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elastic/envsim.hpp"
#include "elastic/gradnet.hpp"
#include "elastic/rng.hpp"

namespace elastic::agent {

using gradnet::DenseNet;
using gradnet::Matrix;
using gradnet::Tape;
using gradnet::Var;

enum class Algo { Moseac, Seac, SacFixed };

std::string to_string(Algo a);
Algo algo_from_string(const std::string& s);

struct DurationRange {
  double d_min = 1.0 / 30.0;
  double d_max = 1.0 / 5.0;

  double normalize(double d) const { return (d - d_min) / (d_max - d_min); }
};

// ---------------------------------------------------------------------------
// Reward shaping

/// Per-step penalty 0.2 * (1 - sigmoid(alpha_m - 1)); lies in (0, 0.2) and
/// decreases as alpha_m grows.
double alpha_eps_of(double alpha_m);

struct RewardParams {
  double alpha_m = 1.0;
  double alpha_max = 5.0;
  double psi = 0.02;
  double alpha_eps = alpha_eps_of(1.0);
  std::optional<double> prev_avg_reward;
  double trend_delta = 1e-6;

  static RewardParams make(double alpha_m, double alpha_max, double psi);
};

/// Time factor D_min / D: 1 at the fastest rate, D_min/D_max at the slowest.
double r_tau(double duration, const DurationRange& range);

/// alpha_m * R_t * R_tau(D) - alpha_eps.
double shape_reward(double task_reward, double duration, const RewardParams& params, const DurationRange& range);

/// Linear baseline R_t - eps_pen - tau_pen * D.
double seac_shape_reward(double task_reward, double duration, double eps_pen, double tau_pen);

/// True when the window average fell below the previous one by more than
/// the trend delta.
bool reward_declining(const RewardParams& params, double current_avg_reward);

/// Grows alpha_m by psi (capped at alpha_max) when the reward trend is
/// declining, then records the current average as the new reference.
RewardParams adapt_alpha(RewardParams params, double current_avg_reward);

// ---------------------------------------------------------------------------
// Policy

struct ActionSample {
  std::array<double, 3> controls{};
  double duration = 0.0;
  double log_prob = 0.0;

  envsim::ElasticAction to_env() const { return {controls[0], controls[1], controls[2], duration}; }
};

/// log density of y = lo + (hi - lo) * (tanh(u) + 1) / 2 with u ~ N(mean, exp(log_std)^2),
/// evaluated at the pre-squash value u.
double squashed_log_density_at(double u, double mean, double log_std, double lo, double hi);

class PolicyHead {
 public:
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;

  PolicyHead() = default;
  PolicyHead(DenseNet actor, DurationRange range, bool elastic, double fixed_duration);

  /// 4 when the duration is part of the action, 3 for fixed-rate control.
  std::size_t action_dim() const { return elastic_ ? 4 : 3; }
  bool elastic() const { return elastic_; }
  const DurationRange& range() const { return range_; }
  double fixed_duration() const { return fixed_duration_; }

  DenseNet& actor() { return actor_; }
  const DenseNet& actor() const { return actor_; }

  /// Gaussian parameters (mean, clamped log-std) for one observation.
  std::pair<std::vector<double>, std::vector<double>> distribution(std::span<const double> obs) const;

  ActionSample sample(std::span<const double> obs, Rng& rng) const;
  ActionSample deterministic(std::span<const double> obs) const;
  /// Squash pre-activations `u` (length action_dim) given the distribution.
  ActionSample squash(std::span<const double> u, std::span<const double> mean, std::span<const double> log_std) const;

  struct TapeSample {
    Var critic_action;  // B x 4: controls then normalized duration
    Var log_prob;       // B x 1
  };
  /// Reparameterized batch sample; `noise` is B x action_dim standard normals.
  TapeSample sample(Tape& tape, Var obs, const Matrix& noise, bool trainable) const;

  /// Critic-side encoding of an executed action.
  std::array<double, 4> encode(const std::array<double, 3>& controls, double duration) const;

 private:
  DenseNet actor_;
  DurationRange range_;
  bool elastic_ = true;
  double fixed_duration_ = 1.0 / 20.0;
};

// ---------------------------------------------------------------------------
// Critics, temperature, transitions

inline constexpr std::size_t kCriticActionDim = 4;

struct CriticPair {
  DenseNet q1;
  DenseNet q2;
  DenseNet q1_target;
  DenseNet q2_target;
};

struct EntropyTemp {
  double log_temp = 0.0;
  double target_entropy = -4.0;

  double temperature() const;
};

/// One decision step. Rewards are kept raw; `shaped_reward` is only filled
/// in literal storage mode.
struct Transition {
  std::vector<double> obs;
  std::array<double, 3> controls{};
  double duration = 0.0;
  double task_reward = 0.0;
  double shaped_reward = 0.0;
  std::vector<double> next_obs;
  bool terminal = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Batch {
  Matrix obs;
  Matrix actions;  // critic encoding
  Matrix rewards;  // B x 1, already shaped
  Matrix next_obs;
  Matrix terminal;  // B x 1 of 0/1
  std::size_t size() const { return static_cast<std::size_t>(obs.rows()); }
};

struct AgentConfig {
  Algo algo = Algo::Moseac;
  std::size_t obs_dim = envsim::kObservationDim;
  std::vector<std::size_t> actor_hidden{256, 256};
  std::vector<std::size_t> critic_hidden{256, 256};
  gradnet::Activation hidden_activation = gradnet::Activation::Tanh;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double temp_lr = 3e-4;
  gradnet::Schedule::Kind schedule = gradnet::Schedule::Kind::Constant;
  double k_decay = 1e5;
  double gamma = 0.99;
  double tau_soft = 0.005;
  double init_temperature = 1e-3;
  double alpha_m = 1.0;
  double alpha_max = 5.0;
  double psi = 0.02;
  double trend_delta = 1e-6;
  double eps_pen = 0.1;
  double tau_pen = 0.5;
  DurationRange range;
  double fixed_duration = 1.0 / 20.0;
  bool literal_reward_storage = false;
  double final_layer_bound = 1e-3;
};

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_loss = 0.0;
  double actor_grad_norm = 0.0;
};

// Loss builders. Each records on `tape` and returns a 1x1 handle.
Var critic_loss(Tape& tape, const CriticPair& critics, const PolicyHead& policy, const Batch& batch,
                const EntropyTemp& temp, double gamma, Rng& rng, bool trainable = true);
struct ActorLoss {
  Var loss;
  Var log_prob;
};
ActorLoss actor_loss(Tape& tape, const PolicyHead& policy, const CriticPair& critics, const Batch& batch,
                     const EntropyTemp& temp, Rng& rng);
/// Returns the loss; the log-temperature leaf is written to `log_temp_leaf`.
Var temperature_loss(Tape& tape, const EntropyTemp& temp, const Matrix& log_probs, Var* log_temp_leaf = nullptr);

// ---------------------------------------------------------------------------

class Agent {
 public:
  Agent() = default;
  Agent(AgentConfig config, Rng& init_rng);

  const AgentConfig& config() const { return config_; }
  Algo algo() const { return config_.algo; }

  ActionSample act(std::span<const double> obs, Rng& rng, bool deterministic) const;
  /// Uniformly random action for warmup exploration.
  ActionSample random_action(Rng& rng) const;

  /// Reward the critic is trained on for a raw (R_t, D) pair under the
  /// current reward parameters.
  double training_reward(double task_reward, double duration) const;

  Batch make_batch(std::span<const Transition* const> transitions) const;

  /// One critic, actor and temperature step followed by a soft target update.
  UpdateStats update(const Batch& batch, Rng& rng);

  /// Applies adapt_alpha for the moseac variant; no-op for baselines.
  void adapt(double window_avg_reward);

  double q_min(std::span<const double> obs, const std::array<double, 3>& controls, double duration) const;

  PolicyHead& policy() { return policy_; }
  const PolicyHead& policy() const { return policy_; }
  CriticPair& critics() { return critics_; }
  const CriticPair& critics() const { return critics_; }
  EntropyTemp& temp() { return temp_; }
  const EntropyTemp& temp() const { return temp_; }
  RewardParams& reward_params() { return reward_; }
  const RewardParams& reward_params() const { return reward_; }
  double last_actor_grad_norm() const { return last_grad_norm_; }
  std::size_t updates() const { return updates_; }

  void save(const std::string& dir, const std::string& config_hash) const;
  static Agent load(const std::string& dir);

  friend bool operator==(const Agent& a, const Agent& b);

 private:
  AgentConfig config_;
  PolicyHead policy_;
  CriticPair critics_;
  EntropyTemp temp_;
  RewardParams reward_;
  gradnet::OptimState actor_opt_;
  gradnet::OptimState q1_opt_;
  gradnet::OptimState q2_opt_;
  gradnet::OptimState temp_opt_;
  double last_grad_norm_ = 0.0;
  std::size_t updates_ = 0;
};

}  // namespace elastic::agent
