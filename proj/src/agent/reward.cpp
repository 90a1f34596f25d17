#include "elastic/agent.hpp"
#include "elastic/errors.hpp"

#include <algorithm>
#include <cmath>

namespace elastic::agent {

std::string to_string(Algo a) {
  switch (a) {
    case Algo::Moseac: return "moseac";
    case Algo::Seac: return "seac";
    case Algo::SacFixed: return "sac_fixed";
  }
  return "moseac";
}

Algo algo_from_string(const std::string& s) {
  if (s == "moseac") return Algo::Moseac;
  if (s == "seac") return Algo::Seac;
  if (s == "sac_fixed") return Algo::SacFixed;
  throw ConfigError("unknown algo '" + s + "' (expected moseac, seac or sac_fixed)");
}

double alpha_eps_of(double alpha_m) { return 0.2 * (1.0 - 1.0 / (1.0 + std::exp(-alpha_m + 1.0))); }

RewardParams RewardParams::make(double alpha_m, double alpha_max, double psi) {
  if (!(alpha_max > 0.0) || !(psi > 0.0) || alpha_m < 0.0 || alpha_m > alpha_max)
    throw ConfigError("reward params need 0 <= alpha_m <= alpha_max, alpha_max > 0, psi > 0");
  RewardParams p;
  p.alpha_m = alpha_m;
  p.alpha_max = alpha_max;
  p.psi = psi;
  p.alpha_eps = alpha_eps_of(alpha_m);
  return p;
}

double r_tau(double duration, const DurationRange& range) { return range.d_min / duration; }

double shape_reward(double task_reward, double duration, const RewardParams& params, const DurationRange& range) {
  return params.alpha_m * task_reward * r_tau(duration, range) - params.alpha_eps;
}

double seac_shape_reward(double task_reward, double duration, double eps_pen, double tau_pen) {
  return task_reward - eps_pen - tau_pen * duration;
}

bool reward_declining(const RewardParams& params, double current_avg_reward) {
  return params.prev_avg_reward.has_value() && current_avg_reward < *params.prev_avg_reward - params.trend_delta;
}

RewardParams adapt_alpha(RewardParams params, double current_avg_reward) {
  if (!std::isfinite(current_avg_reward)) throw ContractViolation("adapt_alpha: non-finite average reward");
  if (reward_declining(params, current_avg_reward)) {
    params.alpha_m = std::min(params.alpha_m + params.psi, params.alpha_max);
    params.alpha_eps = alpha_eps_of(params.alpha_m);
  }
  params.prev_avg_reward = current_avg_reward;
  return params;
}

}  // namespace elastic::agent
