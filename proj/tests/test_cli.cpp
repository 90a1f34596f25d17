#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "elastic/cli.hpp"
#include "elastic/errors.hpp"
#include "elastic/evalstats.hpp"
#include "elastic/trainer.hpp"

namespace fs = std::filesystem;
using namespace elastic;

namespace {

struct Output {
  int code = -1;
  std::string text;
};

Output run(const std::string& args) {
  const std::string cmd = std::string(ELASTIC_RL_BINARY) + " " + args + " 2>&1";
  Output out;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) out.text.append(buf.data(), n);
  const int status = pclose(p);
  out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

std::string fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("elastic_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kTiny =
    "actor_hidden = 8,8\n"
    "critic_hidden = 8,8\n"
    "batch_size = 16\n"
    "updates_per_block = 2\n"
    "k_init = 2\n"
    "k_length = 40\n"
    "checkpoint_every = 0\n"
    "lyapunov_probes = 2\n"
    "qstar_refresh_every = 2\n";

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.cfg";
  spit(p, slurp(fs::path(ELASTIC_CONFIG_DIR) / "base.cfg") + kTiny);
  return p;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("config text: comments, blanks and whitespace") {
  cli::RunConfig cfg;
  std::istringstream is(
      "# leading comment\n"
      "\n"
      "   seed =  42   # trailing comment\n"
      "algo=seac\n"
      "actor_hidden = 32, 16\n"
      "gamma = 0.5\n"
      "literal_reward_storage = true\n");
  cli::apply_config(cfg, is, "t.cfg");
  CHECK(cfg.train.seed == 42);
  CHECK(cfg.train.agent.algo == agent::Algo::Seac);
  CHECK(cfg.train.agent.actor_hidden == std::vector<std::size_t>{32, 16});
  CHECK(cfg.train.agent.gamma == 0.5);
  CHECK(cfg.train.agent.literal_reward_storage);
}

TEST_CASE("config text: errors carry source, line and key") {
  cli::RunConfig cfg;
  {
    std::istringstream is("seed = 3\n\nnot_a_key = 1\n");
    CHECK_THROWS_WITH_AS(cli::apply_config(cfg, is, "t.cfg"), doctest::Contains("t.cfg:3:"), ConfigError);
  }
  {
    std::istringstream is("seed = 3\nnot_a_key = 1\n");
    try {
      cli::apply_config(cfg, is, "t.cfg");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("not_a_key") != std::string::npos);
    }
  }
  {
    std::istringstream is("gamma = fast\n");
    CHECK_THROWS_WITH_AS(cli::apply_config(cfg, is, "t.cfg"), doctest::Contains("gamma"), ConfigError);
  }
  {
    std::istringstream is("seed 3\n");
    CHECK_THROWS_WITH_AS(cli::apply_config(cfg, is, "t.cfg"), doctest::Contains("t.cfg:1:"), ConfigError);
  }
  CHECK_THROWS_WITH_AS(cli::apply_config_file(cfg, "/nonexistent/x.cfg"), doctest::Contains("/nonexistent/x.cfg"),
                       ConfigError);
}

TEST_CASE("set_key rejects bad values naming the key") {
  cli::RunConfig cfg;
  CHECK_THROWS_WITH_AS(cli::set_key(cfg, "batch_size", "-4"), doctest::Contains("batch_size"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::set_key(cfg, "batch_size", "4.5"), doctest::Contains("batch_size"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::set_key(cfg, "algo", "ppo"), doctest::Contains("algo"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::set_key(cfg, "actor_hidden", "8,0"), doctest::Contains("actor_hidden"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::set_key(cfg, "literal_reward_storage", "maybe"),
                       doctest::Contains("literal_reward_storage"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::set_key(cfg, "lr_schedule", "cosine"), doctest::Contains("lr_schedule"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::set_key(cfg, "no_such_key", "1"), doctest::Contains("no_such_key"), ConfigError);
}

TEST_CASE("resolved listing covers every key once and round-trips") {
  const auto& keys = cli::config_keys();
  std::set<std::string> names;
  for (const auto& k : keys) {
    CHECK_FALSE(k.doc.empty());
    names.insert(k.name);
  }
  CHECK(names.size() == keys.size());

  cli::RunConfig cfg;
  cli::set_key(cfg, "seed", "17");
  cli::set_key(cfg, "gamma", "0.123456789");
  cli::set_key(cfg, "critic_hidden", "5,6,7");
  cli::set_key(cfg, "track", "/tmp/some.track");
  const auto lines = lines_of(cfg.resolved());
  REQUIRE(lines.size() == keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) CHECK(lines[i].rfind(keys[i].name + " = ", 0) == 0);

  cli::RunConfig back;
  std::istringstream is(cfg.resolved());
  cli::apply_config(back, is);
  CHECK(back.resolved() == cfg.resolved());
  CHECK(back.train.seed == 17);
  CHECK(back.track_path == "/tmp/some.track");
}

TEST_CASE("base.cfg lists every key at its default") {
  const std::string text = slurp(fs::path(ELASTIC_CONFIG_DIR) / "base.cfg");
  std::set<std::string> listed;
  for (const auto& line : lines_of(text)) {
    if (line.empty() || line[0] == '#') continue;
    listed.insert(line.substr(0, line.find(' ')));
  }
  for (const auto& k : cli::config_keys()) CHECK_MESSAGE(listed.count(k.name) == 1, k.name);

  cli::RunConfig defaults;
  cli::RunConfig loaded;
  cli::apply_config_file(loaded, (fs::path(ELASTIC_CONFIG_DIR) / "base.cfg").string());
  CHECK(loaded.resolved() == defaults.resolved());
}

TEST_CASE("shipped acceptance configs parse and validate") {
  cli::RunConfig cfg;
  cli::apply_config_file(cfg, (fs::path(ELASTIC_CONFIG_DIR) / "acceptance.cfg").string());
  cli::apply_config_file(cfg, (fs::path(ELASTIC_CONFIG_DIR) / "acceptance_moseac.cfg").string());
  CHECK(cfg.train.agent.actor_hidden == std::vector<std::size_t>{64, 64});
  CHECK(cfg.train.agent.alpha_m == 6.0);
  CHECK_NOTHROW(cfg.train.validate());
}

TEST_CASE("config hash is FNV-1a of the resolved listing") {
  cli::RunConfig a;
  cli::RunConfig b;
  CHECK(a.hash().size() == 16);
  CHECK(a.hash() == fnv1a(a.resolved()));
  CHECK(a.hash() == b.hash());
  cli::set_key(b, "seed", "2");
  CHECK(a.hash() != b.hash());
  CHECK(b.hash() == fnv1a(b.resolved()));
}

TEST_CASE("load_run_track: shipped default and missing file") {
  cli::RunConfig cfg;
  const auto track = cli::load_run_track(cfg);
  CHECK(track.waypoints.size() == 21);
  cfg.track_path = "/nonexistent/oval.track";
  CHECK_THROWS_WITH_AS(cli::load_run_track(cfg), doctest::Contains("/nonexistent/oval.track"), ConfigError);
}

TEST_CASE("self-check suites") {
  SUBCASE("all pass on a fresh build") {
    CHECK(cli::gradient_suite().passed);
    CHECK(cli::environment_suite().passed);
    CHECK(cli::reward_suite().passed);
    CHECK(cli::checkpoint_suite().passed);
    std::ostringstream os;
    CHECK(cli::run_selfcheck(os));
    const auto lines = lines_of(os.str());
    CHECK(lines.size() == 4);
    for (const auto& l : lines) CHECK(l.rfind("PASS ", 0) == 0);
  }
  SUBCASE("corrupted magic fails the checkpoint suite") {
    const auto r = cli::checkpoint_suite(true);
    CHECK_FALSE(r.passed);
    CHECK(r.detail.find(gradnet::kCheckpointMagic) != std::string::npos);
  }
  SUBCASE("gradient probe reports max relative error below 1e-4") {
    const auto r = cli::gradient_suite(20, 1);
    const std::string prefix = "max relative error ";
    REQUIRE(r.detail.rfind(prefix, 0) == 0);
    const double worst = std::stod(r.detail.substr(prefix.size()));
    CHECK(worst < 1e-4);
    CHECK(worst >= 0.0);
  }
}

TEST_CASE("binary: usage errors") {
  CHECK(run("").code == cli::kExitUsage);
  CHECK(run("train").code == cli::kExitUsage);
  CHECK(run("frobnicate").code == cli::kExitUsage);
  CHECK(run("--help").code == cli::kExitOk);
}

TEST_CASE("binary: invalid config and missing track are usage errors") {
  const fs::path dir = scratch("usage");
  spit(dir / "bad.cfg", "seed = 1\nbatch_sise = 64\n");
  auto r = run("train --config " + quoted(dir / "bad.cfg") + " --out " + quoted(dir / "o1"));
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.text.find("batch_sise") != std::string::npos);
  CHECK(r.text.find("bad.cfg:2:") != std::string::npos);

  spit(dir / "track.cfg", "track = /nonexistent/oval.track\n");
  r = run("train --config " + quoted(dir / "track.cfg") + " --out " + quoted(dir / "o2"));
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.text.find("/nonexistent/oval.track") != std::string::npos);

  r = run("train --algo ppo --out " + quoted(dir / "o3"));
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.text.find("algo") != std::string::npos);
}

TEST_CASE("binary: train, eval and compare end to end") {
  const fs::path dir = scratch("e2e");
  const fs::path cfg = tiny_config(dir);
  const fs::path m1 = dir / "m1";

  auto r = run("train --config " + quoted(cfg) + " --algo moseac --seed 1 --episodes 6 --out " + quoted(m1));
  REQUIRE_MESSAGE(r.code == cli::kExitOk, r.text);
  CHECK(fs::exists(m1 / "metrics.csv"));
  CHECK(fs::exists(m1 / "final" / "agent.txt"));
  REQUIRE(fs::exists(m1 / "resolved_config"));

  cli::RunConfig expected;
  cli::apply_config_file(expected, cfg.string());
  cli::set_key(expected, "algo", "moseac");
  cli::set_key(expected, "t_max", "6");
  CHECK(slurp(m1 / "resolved_config") == expected.resolved());
  CHECK(lines_of(slurp(m1 / "metrics.csv")).size() == 7);

  SUBCASE("training is reproducible") {
    const fs::path m1b = dir / "m1b";
    r = run("train --config " + quoted(cfg) + " --algo moseac --seed 1 --episodes 6 --out " + quoted(m1b));
    REQUIRE(r.code == cli::kExitOk);
    CHECK(slurp(m1b / "metrics.csv") == slurp(m1 / "metrics.csv"));
  }

  SUBCASE("eval writes one row per episode and is byte-stable") {
    r = run("eval --ckpt " + quoted(m1 / "final") + " --episodes 30 --seed 9 --out " + quoted(dir / "e30.csv"));
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.text);
    CHECK(lines_of(slurp(dir / "e30.csv")).size() == 31);
    CHECK(evalstats::read_eval_csv((dir / "e30.csv").string()).size() == 30);

    r = run("eval --ckpt " + quoted(m1 / "final") + " --episodes 30 --seed 9 --workers 3 --out " +
            quoted(dir / "e30b.csv"));
    REQUIRE(r.code == cli::kExitOk);
    CHECK(slurp(dir / "e30b.csv") == slurp(dir / "e30.csv"));

    r = run("eval --ckpt " + quoted(m1 / "final") + " --episodes 1 --seed 9 --out " + quoted(dir / "e1.csv"));
    REQUIRE(r.code == cli::kExitOk);
    CHECK(evalstats::read_eval_csv((dir / "e1.csv").string()).size() == 1);
  }

  SUBCASE("eval default episode count comes from the config") {
    r = run("eval --ckpt " + quoted(m1 / "final") + " --out " + quoted(dir / "edef.csv"));
    REQUIRE(r.code == cli::kExitOk);
    CHECK(evalstats::read_eval_csv((dir / "edef.csv").string()).size() == 30);
  }

  SUBCASE("eval rejects a checkpoint with a foreign magic string") {
    const fs::path bad = dir / "bad_final";
    fs::copy(m1 / "final", bad, fs::copy_options::recursive);
    std::string text = slurp(bad / "actor.ckpt");
    const std::string magic = gradnet::kCheckpointMagic;
    const auto at = text.find(magic);
    REQUIRE(at != std::string::npos);
    text.replace(at, magic.size(), "ELASTIC-CKPT-0");
    spit(bad / "actor.ckpt", text);
    r = run("eval --ckpt " + quoted(bad) + " --episodes 1 --out " + quoted(dir / "ebad.csv"));
    CHECK(r.code != cli::kExitOk);
    CHECK(r.text.find(magic) != std::string::npos);
  }

  SUBCASE("compare against itself is degenerate") {
    r = run("eval --ckpt " + quoted(m1 / "final") + " --episodes 5 --out " + quoted(m1 / "eval.csv"));
    REQUIRE(r.code == cli::kExitOk);
    r = run("compare " + quoted(m1) + " " + quoted(m1) + " --out " + quoted(dir / "cmp.csv"));
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.text);
    CHECK(r.text.find("degenerate") != std::string::npos);
    CHECK(r.text.find("(equal)") != std::string::npos);
    CHECK(fs::exists(dir / "cmp.csv"));
  }

  SUBCASE("compare reports malformed CSV lines and unequal counts") {
    r = run("eval --ckpt " + quoted(m1 / "final") + " --episodes 3 --out " + quoted(dir / "e3.csv"));
    REQUIRE(r.code == cli::kExitOk);
    auto rows = lines_of(slurp(dir / "e3.csv"));
    rows[2] = "1,1,abc,2.0,5.0";
    std::string broken;
    for (const auto& l : rows) broken += l + "\n";
    spit(dir / "broken.csv", broken);
    r = run("compare " + quoted(dir / "e3.csv") + " " + quoted(dir / "broken.csv"));
    CHECK(r.code != cli::kExitOk);
    CHECK(r.text.find("broken.csv:3:") != std::string::npos);

    r = run("eval --ckpt " + quoted(m1 / "final") + " --episodes 4 --out " + quoted(dir / "e4.csv"));
    REQUIRE(r.code == cli::kExitOk);
    r = run("compare " + quoted(dir / "e3.csv") + " " + quoted(dir / "e4.csv"));
    CHECK(r.code != cli::kExitOk);
    CHECK(r.text.find("equal record counts") != std::string::npos);
  }
}

TEST_CASE("binary: sac_fixed keeps a constant control period") {
  const fs::path dir = scratch("fixed");
  const fs::path cfg = tiny_config(dir);
  auto r = run("train --config " + quoted(cfg) + " --algo sac_fixed --seed 2 --episodes 4 --out " + quoted(dir / "f"));
  REQUIRE_MESSAGE(r.code == cli::kExitOk, r.text);
  const auto rows = trainer::read_metrics_csv((dir / "f" / "metrics.csv").string());
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) CHECK(row.sim_time == doctest::Approx(0.05 * row.steps).epsilon(1e-12));

  r = run("eval --ckpt " + quoted(dir / "f" / "final") + " --episodes 3 --out " + quoted(dir / "fe.csv"));
  REQUIRE(r.code == cli::kExitOk);
  for (const auto& rec : evalstats::read_eval_csv((dir / "fe.csv").string()))
    CHECK(rec.time_seconds == doctest::Approx(0.05 * rec.energy_steps).epsilon(1e-12));
}

TEST_CASE("binary: selfcheck") {
  const auto r = run("selfcheck");
  CHECK(r.code == cli::kExitOk);
  CHECK(lines_of(r.text).size() == 4);
  CHECK(r.text.find("FAIL") == std::string::npos);
}

TEST_CASE("binary: resume from a trainer checkpoint") {
  const fs::path dir = scratch("resume");
  fs::path cfg = tiny_config(dir);
  spit(cfg, slurp(cfg) + "checkpoint_every = 3\n");
  auto r = run("train --config " + quoted(cfg) + " --seed 4 --episodes 6 --out " + quoted(dir / "full"));
  REQUIRE_MESSAGE(r.code == cli::kExitOk, r.text);
  REQUIRE(fs::exists(dir / "full" / "ckpt_3"));
  r = run("train --config " + quoted(cfg) + " --seed 4 --episodes 6 --ckpt " + quoted(dir / "full" / "ckpt_3") +
          " --out " + quoted(dir / "resumed"));
  REQUIRE_MESSAGE(r.code == cli::kExitOk, r.text);
  CHECK(slurp(dir / "resumed" / "metrics.csv") == slurp(dir / "full" / "metrics.csv"));
  CHECK(slurp(dir / "resumed" / "final" / "actor.ckpt") == slurp(dir / "full" / "final" / "actor.ckpt"));

  r = run("eval --ckpt " + quoted(dir / "full" / "ckpt_3") + " --episodes 2 --out " + quoted(dir / "ck.csv"));
  CHECK(r.code == cli::kExitOk);
}
