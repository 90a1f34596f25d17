#include "elastic/errors.hpp"
#include "elastic/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace elastic::trainer {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (t_max == 0) throw ConfigError("t_max must be >= 1");
  if (k_init < 1) throw ConfigError("k_init must be >= 1");
  if (k_update < 1) throw ConfigError("k_update must be >= 1");
  if (updates_per_block < 1) throw ConfigError("updates_per_block must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (batch_size > buffer_capacity) throw ConfigError("batch_size must not exceed buffer_capacity");
  if (lyapunov_probes < 1) throw ConfigError("lyapunov_probes must be >= 1");
  if (qstar_refresh_every < 1) throw ConfigError("qstar_refresh_every must be >= 1");
  if (qstar_rollouts < 1) throw ConfigError("qstar_rollouts must be >= 1");
  if (!(car.d_min > 0.0) || !(car.d_max > car.d_min)) throw ConfigError("need 0 < d_min < d_max");
  if (car.k_length < 1) throw ConfigError("k_length must be >= 1");
  if (!(agent.gamma >= 0.0 && agent.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(agent.tau_soft > 0.0 && agent.tau_soft <= 1.0)) throw ConfigError("tau_soft must lie in (0, 1]");
  if (!(agent.alpha_m >= 0.0 && agent.alpha_m <= agent.alpha_max)) throw ConfigError("need 0 <= alpha_m <= alpha_max");
  if (!(agent.psi > 0.0)) throw ConfigError("psi must be > 0");
  if (agent.algo == agent::Algo::SacFixed && (agent.fixed_duration < car.d_min || agent.fixed_duration > car.d_max))
    throw ConfigError("fixed_duration must lie in [d_min, d_max]");
}

// ---------------------------------------------------------------------------
// Metrics log

std::string metrics_header() {
  return "episode,steps,sim_time,return_shaped,return_task,alpha_m,alpha_eps,temperature,critic_loss,actor_loss,"
         "grad_norm,V_lyap,V_alpha_term,V_qerr_term";
}

std::string format_metrics_row(const EpisodeMetrics& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << m.episode << "," << m.steps << "," << m.sim_time << "," << m.return_shaped << "," << m.return_task << ","
     << m.alpha_m << "," << m.alpha_eps << "," << m.temperature << "," << m.critic_loss << "," << m.actor_loss << ","
     << m.grad_norm << "," << m.v_lyap << "," << m.v_alpha << "," << m.v_qerr;
  return os.str();
}

std::vector<EpisodeMetrics> read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open metrics log '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != metrics_header())
    throw FormatError("metrics log '" + path + "': unexpected header");
  std::vector<EpisodeMetrics> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    EpisodeMetrics m;
    ls >> m.episode >> m.steps >> m.sim_time >> m.return_shaped >> m.return_task >> m.alpha_m >> m.alpha_eps >>
        m.temperature >> m.critic_loss >> m.actor_loss >> m.grad_norm >> m.v_lyap >> m.v_alpha >> m.v_qerr;
    if (!ls) throw FormatError("metrics log '" + path + "': malformed row at line " + std::to_string(lineno));
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

TrainConfig synced(TrainConfig c) {
  c.agent.range = {c.car.d_min, c.car.d_max};
  return c;
}

agent::Agent make_agent(const TrainConfig& c) {
  Rng init(splitmix64(c.seed ^ 0x1217a9e5ULL));
  return agent::Agent(c.agent, init);
}

constexpr std::uint64_t kProbeSalt = 0x70be5eedULL;

}  // namespace

Trainer::Trainer(TrainConfig config, envsim::TrackSpec track)
    : config_(synced(std::move(config))),
      track_(std::move(track)),
      env_(track_, config_.car),
      buffer_(config_.buffer_capacity),
      explore_rng_(splitmix64(config_.seed ^ 0xe8b1a3ULL)),
      update_rng_(splitmix64(config_.seed ^ 0x5c3d77ULL)) {
  config_.validate();
  track_.validate();
  agent_ = make_agent(config_);
}

std::uint64_t Trainer::episode_seed(std::uint64_t seed, std::size_t episode) {
  return splitmix64(splitmix64(seed) + episode);
}

bool Trainer::update_due(std::size_t episode) const {
  return episode >= config_.k_init && (episode - config_.k_init) % config_.k_update == 0;
}

void Trainer::initialize() {
  probe_ = LyapunovProbe::collect(envsim::Environment(track_, config_.car), agent_, config_.lyapunov_probes,
                                  splitmix64(config_.seed ^ kProbeSalt));
  envsim::Environment probe_env(track_, config_.car);
  refresh_qstar(probe_, agent_, probe_env, config_.qstar_rollouts);
  if (!config_.outdir.empty()) {
    fs::create_directories(config_.outdir);
    std::ofstream os(fs::path(config_.outdir) / "metrics.csv", std::ios::trunc);
    if (!os) throw ConfigError("cannot write metrics log into '" + config_.outdir + "'");
    os << metrics_header() << "\n";
  }
  initialized_ = true;
}

void Trainer::write_row(const EpisodeMetrics& m) {
  if (config_.outdir.empty()) return;
  std::ofstream os(fs::path(config_.outdir) / "metrics.csv", std::ios::app);
  os << format_metrics_row(m) << "\n";
}

void Trainer::dump_divergence(const std::string& what, const agent::Batch* batch) const {
  if (config_.outdir.empty()) return;
  fs::create_directories(config_.outdir);
  std::ofstream os(fs::path(config_.outdir) / "divergence_dump.txt");
  os << std::setprecision(17);
  os << "error " << what << "\n";
  os << "episode " << episodes_done_ << "\n";
  os << "gradient_updates " << agent_.updates() << "\n";
  os << "alpha_m " << agent_.reward_params().alpha_m << "\n";
  os << "alpha_eps " << agent_.reward_params().alpha_eps << "\n";
  os << "temperature " << agent_.temp().temperature() << "\n";
  os << "last_critic_loss " << last_stats_.critic_loss << "\n";
  os << "last_actor_loss " << last_stats_.actor_loss << "\n";
  os << "last_actor_grad_norm " << last_stats_.actor_grad_norm << "\n";
  if (batch) {
    os << "batch " << batch->size() << " rows: obs | actions | reward | next_obs | terminal\n";
    const Eigen::IOFormat row(Eigen::FullPrecision, Eigen::DontAlignCols, " ", " ");
    for (Eigen::Index i = 0; i < batch->obs.rows(); ++i) {
      os << batch->obs.row(i).format(row) << " | " << batch->actions.row(i).format(row) << " | "
         << batch->rewards(i, 0) << " | " << batch->next_obs.row(i).format(row) << " | " << batch->terminal(i, 0)
         << "\n";
    }
  }
}

void Trainer::run_update_block(EpisodeMetrics& m) {
  double critic_sum = 0.0;
  double actor_sum = 0.0;
  for (std::size_t u = 0; u < config_.updates_per_block; ++u) {
    const auto picks = buffer_.sample(config_.batch_size, update_rng_);
    const agent::Batch batch = agent_.make_batch(picks);
    try {
      last_stats_ = agent_.update(batch, update_rng_);
    } catch (const TrainingDiverged& e) {
      dump_divergence(e.what(), &batch);
      throw;
    }
    critic_sum += last_stats_.critic_loss;
    actor_sum += last_stats_.actor_loss;
  }
  const auto n = static_cast<double>(config_.updates_per_block);
  m.critic_loss = critic_sum / n;
  m.actor_loss = actor_sum / n;
  m.updates = config_.updates_per_block;
  agent_.adapt(window_.average());
  window_.reset();
  update_episodes_.push_back(episodes_done_);
}

EpisodeMetrics Trainer::run_episode() {
  if (!initialized_) initialize();
  if (episodes_done_ >= config_.t_max) throw ContractViolation("run_episode: t_max episodes already complete");

  const bool warmup = episodes_done_ < config_.k_init;
  EpisodeMetrics m;
  auto res = env_.reset(episode_seed(config_.seed, episodes_done_));
  while (!envsim::is_done(res.done)) {
    const auto a = warmup ? agent_.random_action(explore_rng_) : agent_.act(res.observation, explore_rng_, false);
    auto next = env_.step(a.to_env());
    Transition t;
    t.controls = a.controls;
    t.duration = next.elapsed;
    t.task_reward = next.task_reward;
    const double shaped = agent_.training_reward(next.task_reward, next.elapsed);
    if (agent_.config().literal_reward_storage) t.shaped_reward = shaped;
    t.terminal = envsim::is_done(next.done);
    t.obs = std::move(res.observation);
    t.next_obs = next.observation;
    buffer_.push(std::move(t));

    window_.add(shaped);
    m.return_shaped += shaped;
    m.return_task += next.task_reward;
    m.sim_time += next.elapsed;
    ++m.steps;
    res = std::move(next);
  }
  m.status = res.done;
  ++episodes_done_;
  m.episode = episodes_done_;

  if (update_due(episodes_done_) && buffer_.size() >= config_.batch_size) run_update_block(m);

  try {
    if (episodes_done_ % config_.qstar_refresh_every == 0) {
      envsim::Environment probe_env(track_, config_.car);
      refresh_qstar(probe_, agent_, probe_env, config_.qstar_rollouts);
    }
    const auto v = lyapunov_value(probe_, agent_, agent_.reward_params());
    m.v_lyap = v.total;
    m.v_alpha = v.alpha_term;
    m.v_qerr = v.qerr_term;
    if (!std::isfinite(v.total)) throw TrainingDiverged("Lyapunov value is not finite");
  } catch (const TrainingDiverged& e) {
    dump_divergence(e.what(), nullptr);
    throw;
  }
  m.alpha_m = agent_.reward_params().alpha_m;
  m.alpha_eps = agent_.reward_params().alpha_eps;
  m.temperature = agent_.temp().temperature();
  m.grad_norm = grad_norm_diag(agent_);

  metrics_.push_back(m);
  write_row(m);
  if (!config_.outdir.empty() && config_.checkpoint_every > 0 && episodes_done_ % config_.checkpoint_every == 0)
    save_checkpoint((fs::path(config_.outdir) / ("ckpt_" + std::to_string(episodes_done_))).string());
  if (on_episode) on_episode(m);
  return m;
}

void Trainer::run(std::optional<std::size_t> until) {
  const std::size_t stop = std::min(config_.t_max, until.value_or(config_.t_max));
  while (episodes_done_ < stop) run_episode();
}

TrainResult run_training(const TrainConfig& config, const envsim::TrackSpec& track) {
  Trainer t(config, track);
  t.run();
  if (!config.outdir.empty()) t.agent().save((fs::path(config.outdir) / "final").string(), config.config_hash);
  return {t.agent(), t.metrics()};
}

}  // namespace elastic::trainer
