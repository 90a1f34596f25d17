#include "elastic/cli.hpp"
#include "elastic/errors.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace elastic::cli {

namespace {

using gradnet::DenseNet;
using gradnet::Matrix;

double squared_error(const DenseNet& net, const Matrix& x, const Matrix& y) {
  return (net.forward_batch(x) - y).array().square().mean();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

SuiteResult gradient_suite(std::size_t nets, std::uint64_t seed) {
  SuiteResult r{"gradient", true, ""};
  double worst = 0.0;
  for (std::size_t k = 0; k < nets; ++k) {
    Rng rng(seed + k);
    const std::size_t in = 1 + rng.index(6);
    const std::size_t out = 1 + rng.index(3);
    std::vector<std::size_t> hidden(1 + rng.index(2));
    for (auto& h : hidden) h = 2 + rng.index(12);
    const auto act = rng.index(2) == 0 ? gradnet::Activation::Tanh : gradnet::Activation::Relu;
    DenseNet net = DenseNet::mlp(in, hidden, out, act, rng);
    Matrix x(3, static_cast<Eigen::Index>(in));
    Matrix y(3, static_cast<Eigen::Index>(out));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2.0, 2.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(-1.0, 1.0);

    gradnet::Tape tape;
    auto loss = tape.mean(tape.square(tape.sub(net.forward(tape, tape.constant(x), true), tape.constant(y))));
    tape.backward(loss);
    const auto g = tape.param_grad(net);

    constexpr double h = 1e-5;
    auto w = net.weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w[i];
      w[i] = keep + h;
      const double up = squared_error(net, x, y);
      w[i] = keep - h;
      const double down = squared_error(net, x, y);
      w[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::fabs(g[i] - fd) / std::max({std::fabs(g[i]), std::fabs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  r.passed = worst < 1e-4;
  r.detail = "max relative error " + fmt(worst) + " over " + std::to_string(nets) + " networks";
  return r;
}

SuiteResult environment_suite(std::size_t sequences, std::uint64_t seed) {
  SuiteResult r{"environment", true, ""};
  const auto track = envsim::make_stadium_track();
  envsim::CarParams car;
  car.start_jitter = 0.5;
  car.start_heading_jitter = 0.05;
  for (std::size_t k = 0; k < sequences && r.passed; ++k) {
    Rng actions(seed + k);
    envsim::Environment a(track, car);
    envsim::Environment b(track, car);
    auto ra = a.reset(seed + k);
    auto rb = b.reset(seed + k);
    while (!envsim::is_done(ra.done)) {
      const envsim::ElasticAction act{actions.uniform(-1, 1), actions.uniform(-1, 1), actions.uniform(-1, 1),
                                      actions.uniform(car.d_min, car.d_max)};
      ra = a.step(act);
      rb = b.step(act);
      if (ra.observation != rb.observation || !(a.state() == b.state()) || ra.task_reward != rb.task_reward) {
        r.passed = false;
        r.detail = "replay diverged for sequence " + std::to_string(k);
      }
    }
  }
  if (!r.passed) return r;

  // One 8-substep decision against two 4-substep decisions.
  const double dt = track.inner_dt;
  for (std::size_t k = 0; k < sequences; ++k) {
    Rng actions(seed + 1000 + k);
    envsim::Environment one(track, car);
    envsim::Environment two(track, car);
    one.reset(seed + k);
    two.reset(seed + k);
    const double gas = actions.uniform(0, 1);
    const double steer = actions.uniform(-0.3, 0.3);
    one.step({gas, 0.0, steer, 8 * dt});
    two.step({gas, 0.0, steer, 4 * dt});
    if (!envsim::is_done(two.status())) two.step({gas, 0.0, steer, 4 * dt});
    const auto& s1 = one.state();
    const auto& s2 = two.state();
    const double gap = std::max({std::fabs(s1.x - s2.x), std::fabs(s1.y - s2.y), std::fabs(s1.heading - s2.heading),
                                 std::fabs(s1.speed - s2.speed)});
    if (!(gap <= 1e-12)) {
      r.passed = false;
      r.detail = "substep composition gap " + fmt(gap) + " for sequence " + std::to_string(k);
      return r;
    }
  }
  r.detail = std::to_string(sequences) + " replays bit-identical, substep composition exact";
  return r;
}

SuiteResult reward_suite() {
  SuiteResult r{"reward", true, "spot checks hold"};
  auto check = [&](bool ok, const std::string& what) {
    if (r.passed && !ok) {
      r.passed = false;
      r.detail = what;
    }
  };
  const agent::DurationRange range;
  check(agent::alpha_eps_of(1.0) == 0.1, "alpha_eps(1) != 0.1");
  check(std::fabs(agent::alpha_eps_of(0.0) - 0.2 * (1.0 - 1.0 / (1.0 + std::exp(1.0)))) < 1e-15,
        "alpha_eps(0) mismatch");
  const auto p = agent::RewardParams::make(1.0, 5.0, 0.02);
  check(agent::shape_reward(0.0, 0.1, p, range) == -0.1, "shape_reward(0, D) != -alpha_eps");
  check(std::fabs(agent::shape_reward(1.0, range.d_min, p, range) - 0.9) < 1e-15, "shape_reward(1, D_min) != 0.9");
  check(std::fabs(agent::shape_reward(1.0, range.d_max, p, range) - (1.0 / 6.0 - 0.1)) < 1e-12,
        "shape_reward(1, D_max) != 1/6 - 0.1");
  check(std::fabs(agent::seac_shape_reward(1.0, 1.0 / 30.0, 0.1, 0.5) - (0.9 - 0.5 / 30.0)) < 1e-15,
        "seac_shape_reward mismatch");

  auto q = agent::RewardParams::make(1.0, 5.0, 0.05);
  q.prev_avg_reward = 5.0;
  q = agent::adapt_alpha(q, 4.0);
  check(std::fabs(q.alpha_m - 1.05) < 1e-15, "declining trend did not add psi");
  check(q.alpha_eps == agent::alpha_eps_of(q.alpha_m), "alpha_eps not recomputed");
  auto capped = agent::RewardParams::make(5.0, 5.0, 0.05);
  capped.prev_avg_reward = 5.0;
  check(agent::adapt_alpha(capped, 4.0).alpha_m == 5.0, "alpha_m exceeded alpha_max");
  auto up = agent::RewardParams::make(1.0, 5.0, 0.05);
  up.prev_avg_reward = 4.0;
  check(agent::adapt_alpha(up, 4.5).alpha_m == 1.0, "improving trend changed alpha_m");
  return r;
}

SuiteResult checkpoint_suite(bool corrupt_magic) {
  SuiteResult r{"checkpoint", true, "network round-trip exact"};
  Rng rng(3);
  const std::vector<std::size_t> hidden{8, 8};
  const DenseNet net = DenseNet::mlp(5, hidden, 2, gradnet::Activation::Tanh, rng);
  std::stringstream ss;
  gradnet::save_net(ss, net);
  std::string bytes = ss.str();
  if (corrupt_magic) bytes[0] = static_cast<char>(bytes[0] ^ 0x20);
  try {
    std::istringstream is(bytes);
    const DenseNet back = gradnet::load_net(is);
    if (!(back == net)) {
      r.passed = false;
      r.detail = "reloaded network differs";
    }
  } catch (const FormatError& e) {
    r.passed = false;
    r.detail = e.what();
  }
  return r;
}

bool run_selfcheck(std::ostream& os) {
  bool all = true;
  for (const auto& res : {gradient_suite(), environment_suite(), reward_suite(), checkpoint_suite()}) {
    os << (res.passed ? "PASS " : "FAIL ") << res.name << ": " << res.detail << "\n";
    all = all && res.passed;
  }
  return all;
}

}  // namespace elastic::cli
