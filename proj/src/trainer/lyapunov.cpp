#include "elastic/errors.hpp"
#include "elastic/trainer.hpp"

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace elastic::trainer {

LyapunovProbe LyapunovProbe::collect(envsim::Environment env, const agent::Agent& agent, std::size_t m,
                                     std::uint64_t seed) {
  constexpr std::size_t kStride = 3;
  Rng rng(seed);
  std::vector<ProbeEntry> entries;
  std::size_t step_index = 0;
  while (entries.size() < m) {
    env.reset(rng.next());
    while (!envsim::is_done(env.status()) && entries.size() < m) {
      const auto snap = env.snapshot();
      const auto a = agent.random_action(rng);
      if (step_index++ % kStride == 0) {
        ProbeEntry e;
        e.state = snap;
        e.obs = env.observe();
        e.controls = a.controls;
        e.duration = env.snapped_duration(a.duration);
        entries.push_back(std::move(e));
      }
      env.step(a.to_env());
    }
  }
  return LyapunovProbe(std::move(entries));
}

LyapunovValue lyapunov_value(const LyapunovProbe& probe, const agent::Agent& agent,
                             const agent::RewardParams& params) {
  if (!probe.initialized() || !probe.has_qstar())
    throw ContractViolation("lyapunov_value: probe set not initialized");
  LyapunovValue v;
  v.alpha_term = 0.5 * params.alpha_m * params.alpha_m;
  for (const auto& e : probe.entries()) {
    const double err = agent.q_min(e.obs, e.controls, e.duration) - e.qstar;
    v.qerr_term += err * err;
  }
  v.total = v.alpha_term + v.qerr_term;
  return v;
}

void refresh_qstar(LyapunovProbe& probe, const agent::Agent& agent, envsim::Environment& env,
                   std::size_t n_rollouts) {
  if (!probe.initialized()) throw ContractViolation("refresh_qstar: probe set not initialized");
  if (n_rollouts == 0) throw ContractViolation("refresh_qstar: n_rollouts must be >= 1");
  const double gamma = agent.config().gamma;
  for (std::size_t i = 0; i < probe.entries().size(); ++i) {
    const ProbeEntry& e = probe.entries()[i];
    double total = 0.0;
    for (std::size_t r = 0; r < n_rollouts; ++r) {
      env.restore(e.state);
      auto res = env.step({e.controls[0], e.controls[1], e.controls[2], e.duration});
      double ret = agent.training_reward(res.task_reward, res.elapsed);
      double discount = gamma;
      while (!envsim::is_done(res.done)) {
        const auto a = agent.policy().deterministic(res.observation);
        res = env.step(a.to_env());
        ret += discount * agent.training_reward(res.task_reward, res.elapsed);
        discount *= gamma;
      }
      total += ret;
    }
    probe.set_qstar(i, total / static_cast<double>(n_rollouts));
  }
  probe.mark_refreshed();
}

double grad_norm_diag(const agent::Agent& agent) { return agent.last_actor_grad_norm(); }

void LyapunovProbe::save(std::ostream& os) const {
  os << std::setprecision(17);
  os << "probe " << entries_.size() << " " << (has_qstar_ ? 1 : 0) << "\n";
  for (const auto& e : entries_) {
    const auto& c = e.state.car;
    os << c.x << " " << c.y << " " << c.heading << " " << c.speed << " " << c.last_passed_index << " "
       << c.step_count << " " << c.segment << " " << c.lateral << " " << static_cast<int>(e.state.status);
    for (const auto& h : e.state.history) os << " " << h.gas << " " << h.brake << " " << h.steer << " " << h.duration;
    os << " " << e.obs.size();
    for (double o : e.obs) os << " " << o;
    os << " " << e.controls[0] << " " << e.controls[1] << " " << e.controls[2] << " " << e.duration << " " << e.qstar
       << "\n";
  }
}

LyapunovProbe LyapunovProbe::load(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("probe file empty");
  std::istringstream hs(line);
  std::string tag;
  std::size_t n = 0;
  int has = 0;
  if (!(hs >> tag >> n >> has) || tag != "probe") throw FormatError("probe file: malformed header");
  std::vector<ProbeEntry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw FormatError("probe file truncated");
    std::istringstream ls(line);
    ProbeEntry e;
    auto& c = e.state.car;
    int status = 0;
    std::size_t dim = 0;
    ls >> c.x >> c.y >> c.heading >> c.speed >> c.last_passed_index >> c.step_count >> c.segment >> c.lateral >> status;
    for (auto& h : e.state.history) ls >> h.gas >> h.brake >> h.steer >> h.duration;
    ls >> dim;
    e.obs.resize(dim);
    for (double& o : e.obs) ls >> o;
    ls >> e.controls[0] >> e.controls[1] >> e.controls[2] >> e.duration >> e.qstar;
    if (!ls) throw FormatError("probe file: malformed entry " + std::to_string(i));
    e.state.status = static_cast<envsim::Status>(status);
    entries.push_back(std::move(e));
  }
  LyapunovProbe p(std::move(entries));
  p.has_qstar_ = has != 0;
  return p;
}

}  // namespace elastic::trainer
