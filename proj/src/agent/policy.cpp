#include "elastic/agent.hpp"
#include "elastic/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace elastic::agent {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh_sq(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

}  // namespace

double squashed_log_density_at(double u, double mean, double log_std, double lo, double hi) {
  const double z = (u - mean) / std::exp(log_std);
  const double log_normal = -0.5 * z * z - log_std - kHalfLog2Pi;
  return log_normal - log_one_minus_tanh_sq(u) - std::log((hi - lo) / 2.0);
}

PolicyHead::PolicyHead(DenseNet actor, DurationRange range, bool elastic, double fixed_duration)
    : actor_(std::move(actor)), range_(range), elastic_(elastic), fixed_duration_(fixed_duration) {
  if (actor_.output_dim() != 2 * action_dim())
    throw ContractViolation("PolicyHead: actor must output mean and log-std for " + std::to_string(action_dim()) +
                            " dimensions");
}

std::pair<std::vector<double>, std::vector<double>> PolicyHead::distribution(std::span<const double> obs) const {
  const gradnet::Vector out = actor_.forward(obs);
  const std::size_t k = action_dim();
  std::vector<double> mean(k);
  std::vector<double> log_std(k);
  for (std::size_t j = 0; j < k; ++j) {
    mean[j] = out[static_cast<Eigen::Index>(j)];
    log_std[j] = std::clamp(out[static_cast<Eigen::Index>(k + j)], kLogStdMin, kLogStdMax);
  }
  return {mean, log_std};
}

ActionSample PolicyHead::squash(std::span<const double> u, std::span<const double> mean,
                                std::span<const double> log_std) const {
  ActionSample s;
  for (std::size_t j = 0; j < 3; ++j) {
    s.controls[j] = std::tanh(u[j]);
    s.log_prob += squashed_log_density_at(u[j], mean[j], log_std[j], -1.0, 1.0);
  }
  if (elastic_) {
    const double d = range_.d_min + (range_.d_max - range_.d_min) * (std::tanh(u[3]) + 1.0) / 2.0;
    s.duration = std::clamp(d, range_.d_min, range_.d_max);  // rounding guard only
    s.log_prob += squashed_log_density_at(u[3], mean[3], log_std[3], range_.d_min, range_.d_max);
  } else {
    s.duration = fixed_duration_;
  }
  return s;
}

ActionSample PolicyHead::sample(std::span<const double> obs, Rng& rng) const {
  auto [mean, log_std] = distribution(obs);
  std::vector<double> u(mean.size());
  for (std::size_t j = 0; j < u.size(); ++j) u[j] = mean[j] + std::exp(log_std[j]) * rng.normal();
  return squash(u, mean, log_std);
}

ActionSample PolicyHead::deterministic(std::span<const double> obs) const {
  auto [mean, log_std] = distribution(obs);
  return squash(mean, mean, log_std);
}

std::array<double, 4> PolicyHead::encode(const std::array<double, 3>& controls, double duration) const {
  return {controls[0], controls[1], controls[2], range_.normalize(duration)};
}

PolicyHead::TapeSample PolicyHead::sample(Tape& tape, Var obs, const Matrix& noise, bool trainable) const {
  const std::size_t k = action_dim();
  const Eigen::Index rows = tape.value(obs).rows();
  if (noise.rows() != rows || static_cast<std::size_t>(noise.cols()) != k)
    throw ContractViolation("PolicyHead::sample: noise must be batch x action_dim");

  Var out = actor_.forward(tape, obs, trainable);
  Var mean = tape.slice_cols(out, 0, k);
  Var log_std = tape.clamp(tape.slice_cols(out, k, k), kLogStdMin, kLogStdMax);
  Var eps = tape.constant(noise);
  Var u = tape.add(mean, tape.mul(tape.exp(log_std), eps));

  // log N(u) = sum(-eps^2/2 - log_std - log(2 pi)/2); eps is fixed noise.
  Matrix base = (-0.5 * noise.array().square() - kHalfLog2Pi).rowwise().sum().matrix();
  Var log_normal = tape.sub(tape.constant(base), tape.sum_cols(log_std));
  // sum log(1 - tanh(u)^2) = sum 2 (ln2 - u - softplus(-2u))
  Var log_jac = tape.scale(
      tape.add_scalar(tape.neg(tape.add(u, tape.softplus(tape.scale(u, -2.0)))), std::numbers::ln2), 2.0);
  Var log_prob = tape.sub(log_normal, tape.sum_cols(log_jac));
  if (elastic_) log_prob = tape.add_scalar(log_prob, -std::log((range_.d_max - range_.d_min) / 2.0));

  Var squashed = tape.tanh(u);
  Var action;
  if (elastic_) {
    Var controls = tape.slice_cols(squashed, 0, 3);
    Var dur = tape.scale(tape.add_scalar(tape.slice_cols(squashed, 3, 1), 1.0), 0.5);
    action = tape.concat_cols(controls, dur);
  } else {
    Var dur = tape.constant(Matrix::Constant(rows, 1, range_.normalize(fixed_duration_)));
    action = tape.concat_cols(squashed, dur);
  }
  return {action, log_prob};
}

double EntropyTemp::temperature() const { return std::exp(log_temp); }

Var critic_loss(Tape& tape, const CriticPair& critics, const PolicyHead& policy, const Batch& batch,
                const EntropyTemp& temp, double gamma, Rng& rng, bool trainable) {
  const std::size_t n = batch.size();
  if (n == 0) throw ContractViolation("critic_loss: empty batch");

  // Bellman targets, recorded on a scratch tape that is never differentiated.
  Matrix noise(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(policy.action_dim()));
  for (Eigen::Index i = 0; i < noise.rows(); ++i)
    for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(i, j) = rng.normal();
  Tape scratch;
  Var next_obs = scratch.constant(batch.next_obs);
  auto next = policy.sample(scratch, next_obs, noise, false);
  Var xn = scratch.concat_cols(next_obs, next.critic_action);
  const Matrix& x_next = scratch.value(xn);
  const Matrix q1n = critics.q1_target.forward_batch(x_next);
  const Matrix q2n = critics.q2_target.forward_batch(x_next);
  const Matrix soft_v = q1n.array().min(q2n.array()).matrix() - temp.temperature() * scratch.value(next.log_prob);
  const Matrix y = batch.rewards + (gamma * (1.0 - batch.terminal.array()) * soft_v.array()).matrix();

  Matrix x(static_cast<Eigen::Index>(n), batch.obs.cols() + batch.actions.cols());
  x << batch.obs, batch.actions;
  Var xin = tape.constant(std::move(x));
  Var target = tape.constant(y);
  Var l1 = tape.mean(tape.square(tape.sub(critics.q1.forward(tape, xin, trainable), target)));
  Var l2 = tape.mean(tape.square(tape.sub(critics.q2.forward(tape, xin, trainable), target)));
  return tape.scale(tape.add(l1, l2), 0.5);
}

ActorLoss actor_loss(Tape& tape, const PolicyHead& policy, const CriticPair& critics, const Batch& batch,
                     const EntropyTemp& temp, Rng& rng) {
  const std::size_t n = batch.size();
  if (n == 0) throw ContractViolation("actor_loss: empty batch");
  Matrix noise(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(policy.action_dim()));
  for (Eigen::Index i = 0; i < noise.rows(); ++i)
    for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(i, j) = rng.normal();
  Var obs = tape.constant(batch.obs);
  auto s = policy.sample(tape, obs, noise, true);
  Var x = tape.concat_cols(obs, s.critic_action);
  Var q = tape.min(critics.q1.forward(tape, x, false), critics.q2.forward(tape, x, false));
  Var loss = tape.mean(tape.sub(tape.scale(s.log_prob, temp.temperature()), q));
  return {loss, s.log_prob};
}

Var temperature_loss(Tape& tape, const EntropyTemp& temp, const Matrix& log_probs, Var* log_temp_leaf) {
  if (log_probs.size() == 0) throw ContractViolation("temperature_loss: no log-probabilities");
  Var lt = tape.scalar(temp.log_temp, true);
  if (log_temp_leaf) *log_temp_leaf = lt;
  Var gap = tape.constant((log_probs.array() + temp.target_entropy).matrix());
  return tape.mean(tape.neg(tape.mul(tape.exp(lt), gap)));
}

}  // namespace elastic::agent
