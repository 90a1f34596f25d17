#include "elastic/errors.hpp"
#include "elastic/evalstats.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace elastic::evalstats {

ComparisonReport compare(std::span<const EvalRecord> a, std::span<const EvalRecord> b, const std::string& name_a,
                         const std::string& name_b) {
  if (a.size() != b.size())
    throw ContractViolation("compare: pairing needs equal record counts, got " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
  ComparisonReport report{name_a, name_b, {}};
  auto add = [&](const std::string& metric, auto get) {
    std::vector<double> xa;
    std::vector<double> xb;
    for (const auto& r : a) xa.push_back(get(r));
    for (const auto& r : b) xb.push_back(get(r));
    MetricComparison m;
    m.metric = metric;
    m.a = descriptives(xa);
    m.b = descriptives(xb);
    m.test.df = xa.size() - 1;
    try {
      m.test = paired_t_test(xa, xb);
      m.mean_difference = m.a.mean - m.b.mean;
    } catch (const DegenerateTTest& e) {
      m.degenerate = true;
      m.mean_difference = e.mean_difference();
      if (e.mean_difference() == 0.0) {
        m.test.t = 0.0;
        m.test.p = 1.0;
      } else {
        m.test.t = std::copysign(std::numeric_limits<double>::infinity(), e.mean_difference());
        m.test.p = 0.0;
      }
    }
    report.metrics.push_back(m);
  };
  add("energy", [](const EvalRecord& r) { return static_cast<double>(r.energy_steps); });
  add("time", [](const EvalRecord& r) { return r.time_seconds; });
  return report;
}

std::string ComparisonReport::csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "method,metric,N,mean,sd,se,cov\n";
  for (const auto& m : metrics) {
    for (const auto* side : {&m.a, &m.b}) {
      os << (side == &m.a ? name_a : name_b) << "," << m.metric << "," << side->n << "," << side->mean << ","
         << side->sd << "," << side->se << "," << side->cov << "\n";
    }
  }
  os << "\nmetric,t,df,p\n";
  for (const auto& m : metrics) os << m.metric << "," << m.test.t << "," << m.test.df << "," << m.test.p << "\n";
  return os.str();
}

std::string ComparisonReport::summary() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  for (const auto& m : metrics) {
    const char* unit = m.metric == "energy" ? "steps" : "s";
    os << m.metric << ": " << name_a << " " << m.a.mean << " +/- " << m.a.sd << " " << unit << ", " << name_b << " "
       << m.b.mean << " +/- " << m.b.sd << " " << unit << " (N=" << m.a.n << ")\n";
    os << "  mean difference " << name_a << " - " << name_b << " = " << m.mean_difference << " " << unit << " ("
       << (m.mean_difference < 0.0 ? name_a + " lower" : m.mean_difference > 0.0 ? name_a + " higher" : "equal")
       << ")\n";
    if (m.degenerate) {
      os << "  paired t-test degenerate: all differences identical\n";
    } else {
      os << "  paired t-test t=" << m.test.t << " df=" << m.test.df << " p=" << std::setprecision(6) << m.test.p
         << std::setprecision(3) << "\n";
    }
  }
  os << "normality tests are not performed\n";
  return os.str();
}

}  // namespace elastic::evalstats
