#include "elastic/errors.hpp"
#include "elastic/evalstats.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace elastic::evalstats {

namespace fs = std::filesystem;

namespace {

EvalRecord run_one(const agent::Agent& agent, envsim::Environment& env, std::size_t index, std::uint64_t seed,
                   bool deterministic) {
  Rng rng(seed);
  EvalRecord r;
  r.episode = index;
  auto res = env.reset(seed);
  while (!envsim::is_done(res.done)) {
    const auto a = agent.act(res.observation, rng, deterministic);
    res = env.step(a.to_env());
    ++r.energy_steps;
    r.time_seconds += res.elapsed;
  }
  r.success = res.done == envsim::Status::Success;
  r.mean_rate_hz = static_cast<double>(r.energy_steps) / r.time_seconds;
  return r;
}

}  // namespace

std::vector<EvalRecord> evaluate(const agent::Agent& agent, const envsim::TrackSpec& track,
                                 const envsim::CarParams& car, const EvalOptions& options) {
  if (options.episodes == 0) throw ContractViolation("evaluate: episodes must be >= 1");
  std::vector<EvalRecord> out(options.episodes);
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, options.episodes);
  auto work = [&](std::size_t w) {
    envsim::Environment env(track, car);
    for (std::size_t i = w; i < options.episodes; i += workers)
      out[i] = run_one(agent, env, i, options.seed + i, options.deterministic);
  };
  if (workers == 1) {
    work(0);
    return out;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  pool.clear();
  return out;
}

agent::Agent load_agent(const std::string& path) {
  const fs::path p(path);
  if (fs::exists(p / "agent.txt")) return agent::Agent::load(path);
  if (fs::exists(p / "agent" / "agent.txt")) return agent::Agent::load((p / "agent").string());
  throw FormatError("'" + path + "' holds neither an agent checkpoint nor a trainer checkpoint");
}

std::string eval_header() { return "episode,success,energy_steps,time_seconds,mean_rate_hz"; }

void write_eval_csv(const std::string& path, std::span<const EvalRecord> records) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write '" + path + "'");
  os << std::setprecision(17);
  os << eval_header() << "\n";
  for (const auto& r : records)
    os << r.episode << "," << (r.success ? 1 : 0) << "," << r.energy_steps << "," << r.time_seconds << ","
       << r.mean_rate_hz << "\n";
}

std::vector<EvalRecord> read_eval_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != eval_header())
    throw FormatError(path + ":1: expected header '" + eval_header() + "'");
  std::vector<EvalRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    if (fields.size() != 5) throw FormatError(where + "expected 5 fields, got " + std::to_string(fields.size()));
    EvalRecord r;
    try {
      std::size_t used = 0;
      auto whole = [&](const std::string& s) {
        if (used != s.size()) throw std::invalid_argument(s);
      };
      r.episode = std::stoul(fields[0], &used);
      whole(fields[0]);
      const auto succ = std::stoul(fields[1], &used);
      whole(fields[1]);
      if (succ > 1) throw std::invalid_argument(fields[1]);
      r.success = succ == 1;
      r.energy_steps = std::stoul(fields[2], &used);
      whole(fields[2]);
      r.time_seconds = std::stod(fields[3], &used);
      whole(fields[3]);
      r.mean_rate_hz = std::stod(fields[4], &used);
      whole(fields[4]);
    } catch (const std::logic_error&) {
      throw FormatError(where + "malformed value in '" + line + "'");
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace elastic::evalstats
