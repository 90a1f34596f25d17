#pragma once

// Episode-indexed training loop: rollouts into a replay buffer, update
// blocks gated by warmup and interval, reward-scale adaptation at block
// boundaries, a Lyapunov monitor and resumable checkpoints.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "elastic/agent.hpp"
#include "elastic/envsim.hpp"
#include "elastic/rng.hpp"

namespace elastic::trainer {

using agent::Transition;

struct TrainConfig {
  std::size_t t_max = 1000;  // episodes
  std::size_t k_init = 10;   // warmup episodes with uniform random actions
  std::size_t k_update = 1;
  std::size_t updates_per_block = 64;
  std::size_t batch_size = 256;
  std::size_t buffer_capacity = 200000;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 100;
  std::size_t lyapunov_probes = 16;
  std::size_t qstar_refresh_every = 50;
  std::size_t qstar_rollouts = 1;
  agent::AgentConfig agent;
  envsim::CarParams car;
  std::string outdir;  // empty: keep everything in memory
  std::string config_hash = "none";

  /// Throws ConfigError when an invariant is broken.
  void validate() const;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// Logical index: 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;
  /// Distinct transitions, uniformly chosen.
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

  void save(std::ostream& os) const;
  static ReplayBuffer load(std::istream& is);

  friend bool operator==(const ReplayBuffer&, const ReplayBuffer&) = default;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;  // next slot to overwrite once full
  std::vector<Transition> data_;
};

/// Running sum of shaped rewards since the last update block.
struct RewardWindow {
  double sum = 0.0;
  std::size_t steps = 0;

  void add(double r) {
    sum += r;
    ++steps;
  }
  double average() const { return steps ? sum / static_cast<double>(steps) : 0.0; }
  void reset() { *this = {}; }
};

struct ProbeEntry {
  envsim::Environment::Snapshot state;
  std::vector<double> obs;
  std::array<double, 3> controls{};
  double duration = 0.0;
  double qstar = 0.0;
};

/// Fixed set of (s, a, D) probes with reference values Q*.
class LyapunovProbe {
 public:
  LyapunovProbe() = default;
  explicit LyapunovProbe(std::vector<ProbeEntry> entries) : entries_(std::move(entries)) {}

  /// Collects `m` probes from uniformly random rollouts seeded by `seed`.
  static LyapunovProbe collect(envsim::Environment env, const agent::Agent& agent, std::size_t m,
                               std::uint64_t seed);

  bool initialized() const { return !entries_.empty(); }
  bool has_qstar() const { return has_qstar_; }
  const std::vector<ProbeEntry>& entries() const { return entries_; }
  void set_qstar(std::size_t i, double q) { entries_.at(i).qstar = q; }
  void mark_refreshed() { has_qstar_ = true; }

  void save(std::ostream& os) const;
  static LyapunovProbe load(std::istream& is);

 private:
  std::vector<ProbeEntry> entries_;
  bool has_qstar_ = false;
};

struct LyapunovValue {
  double total = 0.0;
  double alpha_term = 0.0;
  double qerr_term = 0.0;
};

/// 0.5 * alpha_m^2 + sum over probes of (Q(s,a,D) - Q*(s,a,D))^2, Q being
/// the smaller twin critic.
LyapunovValue lyapunov_value(const LyapunovProbe& probe, const agent::Agent& agent,
                             const agent::RewardParams& params);

/// Monte-Carlo reference values: apply the probe action, then follow the
/// deterministic policy to the end of the episode, discounting the shaped
/// reward per decision.
void refresh_qstar(LyapunovProbe& probe, const agent::Agent& agent, envsim::Environment& env,
                   std::size_t n_rollouts);

/// L2 norm of the latest actor gradient.
double grad_norm_diag(const agent::Agent& agent);

struct EpisodeMetrics {
  std::size_t episode = 0;
  std::size_t steps = 0;
  double sim_time = 0.0;
  double return_shaped = 0.0;
  double return_task = 0.0;
  double alpha_m = 0.0;
  double alpha_eps = 0.0;
  double temperature = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double grad_norm = 0.0;
  double v_lyap = 0.0;
  double v_alpha = 0.0;
  double v_qerr = 0.0;
  envsim::Status status = envsim::Status::Running;
  std::size_t updates = 0;  // gradient steps performed after this episode
};

std::string metrics_header();
std::string format_metrics_row(const EpisodeMetrics& m);
/// Parses a metrics CSV written by the trainer; `status` and `updates` are
/// not part of the file and come back defaulted.
std::vector<EpisodeMetrics> read_metrics_csv(const std::string& path);

class Trainer {
 public:
  Trainer(TrainConfig config, envsim::TrackSpec track);

  /// Continues a run from a directory written by save_checkpoint. `config`
  /// supplies the loop settings (t_max, outdir); network and reward state
  /// come from the checkpoint.
  static Trainer resume(const std::string& checkpoint_dir, TrainConfig config, envsim::TrackSpec track);

  /// Runs episodes until `t_max` are complete (or `until`, when smaller).
  void run(std::optional<std::size_t> until = std::nullopt);
  EpisodeMetrics run_episode();

  void save_checkpoint(const std::string& dir) const;

  std::size_t episodes_done() const { return episodes_done_; }
  std::size_t gradient_updates() const { return agent_.updates(); }
  const std::vector<EpisodeMetrics>& metrics() const { return metrics_; }
  const agent::Agent& agent() const { return agent_; }
  agent::Agent& agent() { return agent_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const RewardWindow& window() const { return window_; }
  const LyapunovProbe& probe() const { return probe_; }
  const TrainConfig& config() const { return config_; }
  /// Episodes after which an update block ran.
  const std::vector<std::size_t>& update_episodes() const { return update_episodes_; }

  /// Called after every episode, after logging.
  std::function<void(const EpisodeMetrics&)> on_episode;

  static std::uint64_t episode_seed(std::uint64_t seed, std::size_t episode);
  bool update_due(std::size_t episode) const;

 private:
  void initialize();
  void write_row(const EpisodeMetrics& m);
  void dump_divergence(const std::string& what, const agent::Batch* batch) const;
  void run_update_block(EpisodeMetrics& m);

  TrainConfig config_;
  envsim::TrackSpec track_;
  envsim::Environment env_;
  agent::Agent agent_;
  ReplayBuffer buffer_;
  RewardWindow window_;
  LyapunovProbe probe_;
  Rng explore_rng_;
  Rng update_rng_;
  std::size_t episodes_done_ = 0;
  bool initialized_ = false;
  std::vector<EpisodeMetrics> metrics_;
  std::vector<std::size_t> update_episodes_;
  agent::UpdateStats last_stats_;
};

/// Convenience wrapper: trains to completion and writes final artifacts.
struct TrainResult {
  agent::Agent agent;
  std::vector<EpisodeMetrics> metrics;
};
TrainResult run_training(const TrainConfig& config, const envsim::TrackSpec& track);

}  // namespace elastic::trainer
