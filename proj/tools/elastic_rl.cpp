// elastic_rl: train, evaluate and compare elastic-step agents.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "elastic/cli.hpp"
#include "elastic/errors.hpp"
#include "elastic/evalstats.hpp"
#include "elastic/trainer.hpp"

namespace fs = std::filesystem;
using namespace elastic;

namespace {

struct CommonFlags {
  std::string config;
  std::string algo;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes;
  bool literal = false;
};

cli::RunConfig resolve(const CommonFlags& f) {
  cli::RunConfig cfg;
  if (!f.config.empty()) cli::apply_config_file(cfg, f.config);
  if (!f.algo.empty()) cli::set_key(cfg, "algo", f.algo);
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.literal) cfg.train.agent.literal_reward_storage = true;
  return cfg;
}

int cmd_train(const CommonFlags& f, const std::string& out, const std::string& ckpt) {
  cli::RunConfig cfg = resolve(f);
  if (f.episodes) cfg.train.t_max = *f.episodes;
  const auto track = cli::load_run_track(cfg);
  cfg.train.outdir = out;
  cfg.train.config_hash = cfg.hash();
  cfg.train.validate();
  fs::create_directories(out);
  {
    std::ofstream os(fs::path(out) / "resolved_config");
    os << cfg.resolved();
  }
  if (ckpt.empty()) {
    trainer::run_training(cfg.train, track);
  } else {
    auto t = trainer::Trainer::resume(ckpt, cfg.train, track);
    t.run();
    t.agent().save((fs::path(out) / "final").string(), cfg.train.config_hash);
  }
  std::cout << "training complete: " << (fs::path(out) / "final").string() << "\n";
  return cli::kExitOk;
}

int cmd_eval(const CommonFlags& f, const std::string& ckpt, const std::string& out, std::size_t workers,
             bool stochastic) {
  cli::RunConfig cfg = resolve(f);
  const auto track = cli::load_run_track(cfg);
  const agent::Agent a = evalstats::load_agent(ckpt);
  envsim::CarParams car = cfg.train.car;
  car.d_min = a.config().range.d_min;
  car.d_max = a.config().range.d_max;
  evalstats::EvalOptions opt;
  opt.episodes = f.episodes.value_or(cfg.eval_episodes);
  opt.seed = f.seed.value_or(0);
  opt.workers = workers;
  opt.deterministic = !stochastic;
  const auto records = evalstats::evaluate(a, track, car, opt);
  evalstats::write_eval_csv(out, records);
  std::size_t ok = 0;
  for (const auto& r : records) ok += r.success ? 1 : 0;
  std::cout << records.size() << " episodes, " << ok << " successful, written to " << out << "\n";
  return cli::kExitOk;
}

std::string eval_csv_path(const std::string& p) {
  return fs::is_directory(p) ? (fs::path(p) / "eval.csv").string() : p;
}

std::string method_name(const std::string& p) {
  const fs::path path(p);
  if (fs::is_directory(path)) return path.filename().empty() ? path.parent_path().filename().string()
                                                             : path.filename().string();
  const auto parent = path.parent_path().filename().string();
  return parent.empty() ? path.stem().string() : parent;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& out) {
  const auto ra = evalstats::read_eval_csv(eval_csv_path(a));
  const auto rb = evalstats::read_eval_csv(eval_csv_path(b));
  std::string na = method_name(a);
  std::string nb = method_name(b);
  if (na == nb) {
    na += "_a";
    nb += "_b";
  }
  const auto report = evalstats::compare(ra, rb, na, nb);
  if (!out.empty()) {
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw ConfigError("cannot write '" + out + "'");
    os << report.csv();
  }
  std::cout << report.summary();
  return cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elastic time-step actor-critic toolkit"};
  app.require_subcommand(1);

  CommonFlags common;
  std::string out;
  std::string ckpt;
  std::size_t workers = 1;
  bool stochastic = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "key = value config file");
    sub->add_option("--algo", common.algo, "moseac | seac | sac_fixed");
    sub->add_option("--seed", common.seed, "seed");
    sub->add_option("--episodes", common.episodes, "episode count");
  };

  auto* train = app.add_subcommand("train", "train an agent");
  add_common(train);
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--ckpt", ckpt, "trainer checkpoint to resume from");
  train->add_flag("--literal-reward-storage", common.literal, "store rewards shaped at collection time");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--ckpt", ckpt, "agent or trainer checkpoint directory")->required();
  eval->add_option("--out", out, "output CSV")->required();
  eval->add_option("--workers", workers, "parallel evaluation workers")->check(CLI::PositiveNumber);
  eval->add_flag("--stochastic", stochastic, "sample actions instead of using the mean");

  std::vector<std::string> inputs;
  auto* compare = app.add_subcommand("compare", "compare two evaluation CSVs");
  compare->add_option("inputs", inputs, "two eval CSVs or directories holding eval.csv")->required()->expected(2);
  compare->add_option("--out", out, "comparison CSV");

  auto* selfcheck = app.add_subcommand("selfcheck", "run built-in correctness suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  try {
    if (*train) return cmd_train(common, out, ckpt);
    if (*eval) return cmd_eval(common, ckpt, out, workers, stochastic);
    if (*compare) return cmd_compare(inputs[0], inputs[1], out);
    if (*selfcheck) return cli::run_selfcheck(std::cout) ? cli::kExitOk : cli::kExitFailure;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return cli::kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitFailure;
  }
  return cli::kExitUsage;
}
