#pragma once

// Post-training evaluation: per-episode energy (decision count) and time
// (simulated seconds), descriptive statistics and paired t-tests.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "elastic/agent.hpp"
#include "elastic/envsim.hpp"

namespace elastic::evalstats {

struct EvalRecord {
  std::size_t episode = 0;
  bool success = false;
  std::size_t energy_steps = 0;
  double time_seconds = 0.0;
  double mean_rate_hz = 0.0;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct Descriptives {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  double cov = 0.0;
};

/// Sample statistics (SD with N - 1). Throws ContractViolation for N < 2
/// and when the coefficient of variation is undefined (mean == 0).
Descriptives descriptives(std::span<const double> samples);

struct PairedTResult {
  double t = 0.0;
  std::size_t df = 0;
  double p = 1.0;
};

/// Raised when every paired difference is identical, so t is infinite
/// (or undefined when the common difference is zero).
class DegenerateTTest : public std::runtime_error {
 public:
  DegenerateTTest(double mean_difference, std::size_t n);
  double mean_difference() const { return mean_difference_; }
  std::size_t n() const { return n_; }

 private:
  double mean_difference_;
  std::size_t n_;
};

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
double student_t_two_tailed(double t, double df);

PairedTResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct EvalOptions {
  std::size_t episodes = 30;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool deterministic = true;
};

/// Runs `episodes` independent episodes; episode i is reset with seed + i.
/// Results are independent of the worker count.
std::vector<EvalRecord> evaluate(const agent::Agent& agent, const envsim::TrackSpec& track,
                                 const envsim::CarParams& car, const EvalOptions& options);

/// Loads an agent from either an agent directory or a trainer checkpoint
/// holding one under `agent/`.
agent::Agent load_agent(const std::string& path);

std::string eval_header();
void write_eval_csv(const std::string& path, std::span<const EvalRecord> records);
/// Throws FormatError naming the offending line.
std::vector<EvalRecord> read_eval_csv(const std::string& path);

struct MetricComparison {
  std::string metric;
  Descriptives a;
  Descriptives b;
  bool degenerate = false;
  double mean_difference = 0.0;  // mean(a - b)
  PairedTResult test;
};

struct ComparisonReport {
  std::string name_a;
  std::string name_b;
  std::vector<MetricComparison> metrics;  // energy, then time

  std::string csv() const;
  std::string summary() const;
};

/// Pairs records by position (episode seed index). Throws ContractViolation
/// on unequal counts.
ComparisonReport compare(std::span<const EvalRecord> a, std::span<const EvalRecord> b, const std::string& name_a,
                         const std::string& name_b);

}  // namespace elastic::evalstats
