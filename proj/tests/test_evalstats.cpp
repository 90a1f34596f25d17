#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "elastic/errors.hpp"
#include "elastic/evalstats.hpp"

using namespace elastic;
using namespace elastic::evalstats;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("elastic_test_evalstats_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double binomial(int n, int k) { return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)); }

// I_x(a, b) for integer a, b as a binomial tail.
double beta_integer_oracle(int a, int b, double x) {
  const int n = a + b - 1;
  double s = 0.0;
  for (int j = a; j <= n; ++j) s += binomial(n, j) * std::pow(x, j) * std::pow(1.0 - x, n - j);
  return s;
}

// Closed-form two-tailed Student t tails for small df.
double t_tail_oracle(double t, int df) {
  const double a = std::fabs(t);
  switch (df) {
    case 1: return 1.0 - 2.0 * std::atan(a) / std::numbers::pi;
    case 2: return 1.0 - a / std::sqrt(2.0 + a * a);
    case 3: {
      const double u = a / std::sqrt(3.0);
      return 1.0 - 2.0 / std::numbers::pi * (std::atan(u) + u / (1.0 + u * u));
    }
    case 4: return 1.0 - a * (6.0 + a * a) / std::pow(4.0 + a * a, 1.5);
  }
  return NAN;
}

agent::Agent random_agent(agent::Algo algo, std::uint64_t seed) {
  agent::AgentConfig c;
  c.algo = algo;
  c.actor_hidden = {16};
  c.critic_hidden = {16};
  c.final_layer_bound = 1.0;
  Rng rng(seed);
  return agent::Agent(c, rng);
}

}  // namespace

TEST_CASE("descriptives: examples") {
  const std::vector<double> ones{1, 1, 1, 1};
  const auto d1 = descriptives(ones);
  CHECK(d1.n == 4);
  CHECK(d1.mean == 1.0);
  CHECK(d1.sd == 0.0);
  CHECK(d1.se == 0.0);
  CHECK(d1.cov == 0.0);

  const std::vector<double> abc{1, 2, 3};
  const auto d = descriptives(abc);
  CHECK(d.mean == 2.0);
  CHECK(d.sd == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.se == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-15));
  CHECK(d.se == doctest::Approx(0.5774).epsilon(1e-4));
  CHECK(d.cov == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(descriptives(std::vector<double>{1.0}), ContractViolation);
  CHECK_THROWS_AS(descriptives(std::vector<double>{-1.0, 1.0}), ContractViolation);
}

TEST_CASE("descriptives: N 30, SD 3.652 rounds to SE 0.667 and COV 0.005") {
  // N 30, SD 3.652 gives SE 0.667 and COV 0.005 at mean 690.800.
  const double se = 3.652 / std::sqrt(30.0);
  CHECK(se == doctest::Approx(0.6668).epsilon(1e-4));
  CHECK(std::round(se * 1000.0) / 1000.0 == 0.667);
  CHECK(std::round(3.652 / 690.800 * 1000.0) / 1000.0 == 0.005);
  // A 30-sample set built to have exactly that mean and SD.
  std::vector<double> xs(30);
  const double half = 3.652 * std::sqrt(29.0 / 30.0);
  for (std::size_t i = 0; i < 30; ++i) xs[i] = 690.800 + (i % 2 ? half : -half);
  const auto d = descriptives(xs);
  CHECK(d.mean == doctest::Approx(690.800).epsilon(1e-12));
  CHECK(d.sd == doctest::Approx(3.652).epsilon(1e-12));
  CHECK(d.se == doctest::Approx(0.6668).epsilon(1e-4));
  CHECK(std::fabs(d.se * std::sqrt(30.0) - d.sd) <= 1e-12);
}

TEST_CASE("descriptives: scale equivariance and SE identity") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs(2 + rng.index(50));
    for (auto& x : xs) x = rng.uniform(1.0, 10.0);
    const double c = rng.uniform(0.1, 100.0);
    std::vector<double> ys = xs;
    for (auto& y : ys) y *= c;
    const auto dx = descriptives(xs);
    const auto dy = descriptives(ys);
    CHECK(dy.mean == doctest::Approx(c * dx.mean).epsilon(1e-12));
    CHECK(dy.sd == doctest::Approx(c * dx.sd).epsilon(1e-10));
    CHECK(dy.cov == doctest::Approx(dx.cov).epsilon(1e-10));
    CHECK(std::fabs(dx.se * std::sqrt(static_cast<double>(xs.size())) - dx.sd) <= 1e-12);
  }
}

TEST_CASE("descriptives: generator parameters recovered within 3 SE") {
  Rng rng(5);
  for (const auto& [mu, sigma] : {std::pair{100.0, 5.0}, std::pair{43.4, 0.24}, std::pair{-7.0, 2.0}}) {
    std::vector<double> xs(400);
    for (auto& x : xs) x = mu + sigma * rng.normal();
    const auto d = descriptives(xs);
    CHECK(std::fabs(d.mean - mu) <= 3.0 * d.se);
    // Standard error of the sample SD under normality.
    CHECK(std::fabs(d.sd - sigma) <= 3.0 * sigma / std::sqrt(2.0 * 399.0));
  }
}

TEST_CASE("incomplete beta: closed forms") {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const double x = rng.uniform();
    CHECK(incomplete_beta(1, 1, x) == doctest::Approx(x).epsilon(1e-12));
    const int a = 1 + static_cast<int>(rng.index(12));
    const int b = 1 + static_cast<int>(rng.index(12));
    CHECK(std::fabs(incomplete_beta(a, b, x) - beta_integer_oracle(a, b, x)) <= 1e-10);
    CHECK(std::fabs(incomplete_beta(a, 1, x) - std::pow(x, a)) <= 1e-12);
    CHECK(std::fabs(incomplete_beta(1, b, x) - (1.0 - std::pow(1.0 - x, b))) <= 1e-12);
    const double ha = 0.5 + rng.index(30);
    const double hb = 0.5 + rng.index(3);
    CHECK(std::fabs(incomplete_beta(ha, hb, x) + incomplete_beta(hb, ha, 1.0 - x) - 1.0) <= 1e-10);
  }
  CHECK(incomplete_beta(2.5, 0.5, 0.0) == 0.0);
  CHECK(incomplete_beta(2.5, 0.5, 1.0) == 1.0);
  CHECK_THROWS_AS(incomplete_beta(0.0, 1.0, 0.5), ContractViolation);
  CHECK_THROWS_AS(incomplete_beta(1.0, 1.0, 1.5), ContractViolation);
}

TEST_CASE("student t: closed forms and table values") {
  Rng rng(7);
  for (int trial = 0; trial < 400; ++trial) {
    const double t = rng.uniform(-30.0, 30.0);
    const int df = 1 + static_cast<int>(rng.index(4));
    CHECK(std::fabs(student_t_two_tailed(t, df) - t_tail_oracle(t, df)) <= 1e-10);
  }
  // Two-tailed critical values from standard tables.
  CHECK(student_t_two_tailed(2.045, 29) == doctest::Approx(0.05).epsilon(2e-2));
  CHECK(student_t_two_tailed(2.756, 29) == doctest::Approx(0.01).epsilon(2e-2));
  CHECK(student_t_two_tailed(2.228, 10) == doctest::Approx(0.05).epsilon(2e-2));
  CHECK(student_t_two_tailed(3.182, 3) == doctest::Approx(0.05).epsilon(2e-2));
  CHECK(student_t_two_tailed(1.960, 1e6) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(student_t_two_tailed(0.0, 5) == 1.0);
  const double p = student_t_two_tailed(-64.85, 29);
  CHECK(p >= 0.0);
  CHECK(p < 1e-30);
}

TEST_CASE("paired t-test: examples") {
  const std::vector<double> a{2, 3, 4, 6};
  const std::vector<double> b{1, 2, 3, 4};
  const auto r = paired_t_test(a, b);
  CHECK(r.t == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(r.df == 3);
  CHECK(std::fabs(r.p - 0.0154) <= 1e-3);
  CHECK(std::fabs(r.p - t_tail_oracle(5.0, 3)) <= 1e-10);

  const auto s = paired_t_test(b, a);
  CHECK(s.t == -r.t);
  CHECK(s.p == r.p);

  const std::vector<double> base{10, 20, 30, 40};
  const std::vector<double> noisy{11, 19, 32, 38};
  const auto z = paired_t_test(noisy, base);
  CHECK(z.t == 0.0);
  CHECK(z.p == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(paired_t_test(a, std::vector<double>{1, 2, 3}), ContractViolation);
  CHECK_THROWS_AS(paired_t_test(std::vector<double>{1}, std::vector<double>{2}), ContractViolation);
  try {
    paired_t_test(std::vector<double>{11, 12, 13}, std::vector<double>{1, 2, 3});
    FAIL("expected a degenerate test");
  } catch (const DegenerateTTest& e) {
    CHECK(e.mean_difference() == 10.0);
    CHECK(e.n() == 3);
  }
}

TEST_CASE("paired t-test: invariants") {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.index(40);
    std::vector<double> a(n);
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(0, 10);
      b[i] = rng.uniform(0, 10);
    }
    const auto r = paired_t_test(a, b);
    CHECK(r.p >= 0.0);
    CHECK(r.p <= 1.0);
    CHECK(r.df == n - 1);
    double md = 0.0;
    for (std::size_t i = 0; i < n; ++i) md += a[i] - b[i];
    CHECK((r.t > 0) == (md > 0));

    const double c = rng.uniform(-50, 50);
    std::vector<double> a2 = a;
    std::vector<double> b2 = b;
    for (auto& x : a2) x += c;
    for (auto& x : b2) x += c;
    const auto r2 = paired_t_test(a2, b2);
    CHECK(r2.t == doctest::Approx(r.t).epsilon(1e-8));
    CHECK(r2.p == doctest::Approx(r.p).epsilon(1e-8));
  }
  double prev = 1.0;
  for (int i = 1; i <= 200; ++i) {
    const double p = student_t_two_tailed(0.05 * i, 12);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("evaluate: fixed-rate baseline runs at 20 Hz") {
  const auto a = random_agent(agent::Algo::SacFixed, 1);
  envsim::CarParams car;
  EvalOptions opt;
  opt.episodes = 6;
  const auto recs = evaluate(a, envsim::make_stadium_track(), car, opt);
  REQUIRE(recs.size() == 6);
  for (const auto& r : recs) {
    CHECK(r.mean_rate_hz == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(r.time_seconds == doctest::Approx(0.05 * r.energy_steps).epsilon(1e-12));
  }
}

TEST_CASE("evaluate: determinism, worker independence and accounting") {
  const auto a = random_agent(agent::Algo::Moseac, 2);
  const auto track = envsim::make_stadium_track();
  envsim::CarParams car;
  car.start_jitter = 0.5;
  car.start_heading_jitter = 0.05;
  car.k_length = 200;
  EvalOptions opt;
  opt.episodes = 9;
  opt.seed = 40;
  const auto r1 = evaluate(a, track, car, opt);
  const auto r2 = evaluate(a, track, car, opt);
  opt.workers = 4;
  const auto r3 = evaluate(a, track, car, opt);
  CHECK(r1 == r2);
  CHECK(r1 == r3);

  for (std::size_t i = 0; i < r1.size(); ++i) {
    const auto& r = r1[i];
    CHECK(r.episode == i);
    CHECK(r.energy_steps * car.d_min <= r.time_seconds + 1e-9);
    CHECK(r.time_seconds <= r.energy_steps * car.d_max + 1e-9);
    CHECK(r.energy_steps <= car.k_length);
    CHECK(r.mean_rate_hz == doctest::Approx(r.energy_steps / r.time_seconds).epsilon(1e-15));
    // Replay the episode by hand.
    envsim::Environment env(track, car);
    auto res = env.reset(40 + i);
    std::size_t steps = 0;
    double time = 0.0;
    while (!envsim::is_done(res.done)) {
      res = env.step(a.policy().deterministic(res.observation).to_env());
      ++steps;
      time += env.snapped_duration(env.history()[0].duration);
    }
    CHECK(steps == r.energy_steps);
    CHECK(time == doctest::Approx(r.time_seconds).epsilon(1e-12));
    CHECK(r.success == (res.done == envsim::Status::Success));
  }

  EvalOptions stochastic = opt;
  stochastic.deterministic = false;
  CHECK(evaluate(a, track, car, stochastic) != r1);
  EvalOptions none = opt;
  none.episodes = 0;
  CHECK_THROWS_AS(evaluate(a, track, car, none), ContractViolation);
}

TEST_CASE("eval CSV round trip and diagnostics") {
  const fs::path dir = scratch_dir("csv");
  std::vector<EvalRecord> recs;
  for (std::size_t i = 0; i < 5; ++i)
    recs.push_back({i, i % 2 == 0, 100 + i, (100 + i) / 17.0, 17.0 + 1e-13 * static_cast<double>(i)});
  write_eval_csv((dir / "e.csv").string(), recs);
  CHECK(read_eval_csv((dir / "e.csv").string()) == recs);
  {
    std::ifstream is(dir / "e.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header == "episode,success,energy_steps,time_seconds,mean_rate_hz");
    CHECK(eval_header() == header);
  }
  {
    std::ofstream os(dir / "bad.csv");
    os << eval_header() << "\n0,1,10,0.5,20\n1,1,ten,0.5,20\n";
  }
  try {
    read_eval_csv((dir / "bad.csv").string());
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("bad.csv:3:") != std::string::npos);
  }
  {
    std::ofstream os(dir / "short.csv");
    os << eval_header() << "\n0,1,10\n";
  }
  CHECK_THROWS_AS(read_eval_csv((dir / "short.csv").string()), FormatError);
  {
    std::ofstream os(dir / "hdr.csv");
    os << "episode,energy\n";
  }
  CHECK_THROWS_AS(read_eval_csv((dir / "hdr.csv").string()), FormatError);
  CHECK_THROWS_AS(read_eval_csv((dir / "missing.csv").string()), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("load_agent: agent and trainer checkpoint layouts") {
  const fs::path dir = scratch_dir("load");
  const auto a = random_agent(agent::Algo::Moseac, 3);
  a.save((dir / "plain").string(), "h");
  a.save((dir / "ckpt" / "agent").string(), "h");
  CHECK(load_agent((dir / "plain").string()) == a);
  CHECK(load_agent((dir / "ckpt").string()) == a);
  CHECK_THROWS_AS(load_agent((dir / "nothing").string()), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("compare: self comparison, degenerate gap and layout") {
  std::vector<EvalRecord> a;
  Rng rng(9);
  for (std::size_t i = 0; i < 30; ++i) {
    const std::size_t steps = 180 + rng.index(20);
    a.push_back({i, true, steps, steps * 0.05, 20.0});
  }
  const auto self = compare(a, a, "x", "y");
  REQUIRE(self.metrics.size() == 2);
  for (const auto& m : self.metrics) {
    CHECK(m.degenerate);
    CHECK(m.test.t == 0.0);
    CHECK(m.test.p == 1.0);
    CHECK(m.a.mean == m.b.mean);
    CHECK(m.a.sd == m.b.sd);
  }

  std::vector<EvalRecord> b = a;
  for (auto& r : b) {
    r.energy_steps += 10;
    r.time_seconds += 0.5;
  }
  const auto gap = compare(a, b, "fast", "slow");
  CHECK(gap.metrics[0].metric == "energy");
  CHECK(gap.metrics[1].metric == "time");
  CHECK(gap.metrics[0].degenerate);
  CHECK(gap.metrics[0].mean_difference == -10.0);
  CHECK(std::isinf(gap.metrics[0].test.t));
  CHECK(gap.metrics[0].test.t < 0.0);
  CHECK(gap.metrics[0].test.p == 0.0);
  CHECK(gap.summary().find("fast lower") != std::string::npos);
  CHECK(gap.summary().find("normality tests are not performed") != std::string::npos);

  std::vector<EvalRecord> c = a;
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i].energy_steps += 5 + i % 3;
    c[i].time_seconds -= 0.1 * static_cast<double>(i % 4);
  }
  const auto mixed = compare(a, c, "a", "c");
  CHECK(!mixed.metrics[0].degenerate);
  std::vector<double> ea;
  std::vector<double> ec;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ea.push_back(static_cast<double>(a[i].energy_steps));
    ec.push_back(static_cast<double>(c[i].energy_steps));
  }
  CHECK(mixed.metrics[0].test.t == paired_t_test(ea, ec).t);
  CHECK(mixed.summary().find("a lower") != std::string::npos);
  CHECK(mixed.summary().find("a higher") != std::string::npos);

  const std::string csv = mixed.csv();
  std::istringstream is(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  REQUIRE(lines.size() == 9);
  CHECK(lines[0] == "method,metric,N,mean,sd,se,cov");
  CHECK(lines[1].rfind("a,energy,30,", 0) == 0);
  CHECK(lines[2].rfind("c,energy,30,", 0) == 0);
  CHECK(lines[3].rfind("a,time,30,", 0) == 0);
  CHECK(lines[5].empty());
  CHECK(lines[6] == "metric,t,df,p");
  CHECK(lines[7].rfind("energy,", 0) == 0);
  CHECK(lines[8].rfind("time,", 0) == 0);

  std::vector<EvalRecord> shorter(a.begin(), a.begin() + 29);
  CHECK_THROWS_AS(compare(a, shorter, "a", "b"), ContractViolation);
}
