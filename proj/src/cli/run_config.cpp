#include "elastic/cli.hpp"
#include "elastic/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace elastic::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::size_t n = to_size(key, trim(item));
    if (n == 0) throw ConfigError("key '" + key + "': layer widths must be >= 1");
    out.push_back(n);
  }
  return out;
}

std::string fmt(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

std::string fmt(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define ELASTIC_SIZE(name, member, doc)                                             \
  Field {                                                                           \
    {name, doc}, [](const RunConfig& c) { return std::to_string(c.member); },       \
        [](RunConfig& c, const std::string& v) { c.member = to_size(name, v); }     \
  }
#define ELASTIC_REAL(name, member, doc)                                             \
  Field {                                                                           \
    {name, doc}, [](const RunConfig& c) { return fmt(c.member); },                  \
        [](RunConfig& c, const std::string& v) { c.member = to_double(name, v); }   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{{"track", "track file; empty selects the shipped stadium track"},
            [](const RunConfig& c) { return c.track_path; },
            [](RunConfig& c, const std::string& v) { c.track_path = v; }},
      Field{{"algo", "moseac | seac | sac_fixed"},
            [](const RunConfig& c) { return agent::to_string(c.train.agent.algo); },
            [](RunConfig& c, const std::string& v) {
              try {
                c.train.agent.algo = agent::algo_from_string(v);
              } catch (const std::exception&) {
                throw ConfigError("key 'algo': expected moseac, seac or sac_fixed, got '" + v + "'");
              }
            }},
      Field{{"seed", "master seed for initialization, exploration and updates"},
            [](const RunConfig& c) { return std::to_string(c.train.seed); },
            [](RunConfig& c, const std::string& v) { c.train.seed = to_size("seed", v); }},
      ELASTIC_SIZE("t_max", train.t_max, "training episodes"),
      ELASTIC_SIZE("k_length", train.car.k_length, "decision steps per episode before timeout"),
      ELASTIC_SIZE("k_init", train.k_init, "warmup episodes with uniform random actions"),
      ELASTIC_SIZE("k_update", train.k_update, "episodes between update blocks"),
      ELASTIC_SIZE("updates_per_block", train.updates_per_block, "gradient steps per update block"),
      ELASTIC_SIZE("batch_size", train.batch_size, "transitions per gradient step"),
      ELASTIC_SIZE("buffer_capacity", train.buffer_capacity, "replay buffer capacity"),
      ELASTIC_SIZE("checkpoint_every", train.checkpoint_every, "episodes between checkpoints; 0 disables"),
      ELASTIC_SIZE("lyapunov_probes", train.lyapunov_probes, "probe transitions for the Lyapunov monitor"),
      ELASTIC_SIZE("qstar_refresh_every", train.qstar_refresh_every, "episodes between reference value refreshes"),
      ELASTIC_SIZE("qstar_rollouts", train.qstar_rollouts, "rollouts per probe per refresh"),
      Field{{"actor_hidden", "comma-separated hidden widths of the actor"},
            [](const RunConfig& c) { return fmt(c.train.agent.actor_hidden); },
            [](RunConfig& c, const std::string& v) { c.train.agent.actor_hidden = to_sizes("actor_hidden", v); }},
      Field{{"critic_hidden", "comma-separated hidden widths of each critic"},
            [](const RunConfig& c) { return fmt(c.train.agent.critic_hidden); },
            [](RunConfig& c, const std::string& v) { c.train.agent.critic_hidden = to_sizes("critic_hidden", v); }},
      Field{{"hidden_activation", "tanh | relu"},
            [](const RunConfig& c) { return gradnet::to_string(c.train.agent.hidden_activation); },
            [](RunConfig& c, const std::string& v) {
              if (v != "tanh" && v != "relu")
                throw ConfigError("key 'hidden_activation': expected tanh or relu, got '" + v + "'");
              c.train.agent.hidden_activation = gradnet::activation_from_string(v);
            }},
      ELASTIC_REAL("actor_lr", train.agent.actor_lr, "actor base learning rate"),
      ELASTIC_REAL("critic_lr", train.agent.critic_lr, "critic base learning rate"),
      ELASTIC_REAL("temp_lr", train.agent.temp_lr, "entropy temperature learning rate"),
      Field{{"lr_schedule", "constant | diminishing (base / (1 + k / k_decay))"},
            [](const RunConfig& c) {
              return std::string(c.train.agent.schedule == gradnet::Schedule::Kind::Constant ? "constant"
                                                                                            : "diminishing");
            },
            [](RunConfig& c, const std::string& v) {
              if (v == "constant")
                c.train.agent.schedule = gradnet::Schedule::Kind::Constant;
              else if (v == "diminishing")
                c.train.agent.schedule = gradnet::Schedule::Kind::Diminishing;
              else
                throw ConfigError("key 'lr_schedule': expected constant or diminishing, got '" + v + "'");
            }},
      ELASTIC_REAL("k_decay", train.agent.k_decay, "decay horizon of the diminishing schedule"),
      ELASTIC_REAL("gamma", train.agent.gamma, "discount per decision step"),
      ELASTIC_REAL("tau_soft", train.agent.tau_soft, "target network averaging rate"),
      ELASTIC_REAL("init_temperature", train.agent.init_temperature, "initial entropy temperature"),
      ELASTIC_REAL("alpha_m", train.agent.alpha_m, "initial reward magnitude scale"),
      ELASTIC_REAL("alpha_max", train.agent.alpha_max, "cap on the reward magnitude scale"),
      ELASTIC_REAL("psi", train.agent.psi, "increment of the reward magnitude scale"),
      ELASTIC_REAL("trend_delta", train.agent.trend_delta, "decline threshold of the reward trend test"),
      ELASTIC_REAL("eps_pen", train.agent.eps_pen, "per-step penalty of the seac reward"),
      ELASTIC_REAL("tau_pen", train.agent.tau_pen, "per-second penalty of the seac reward"),
      ELASTIC_REAL("fixed_duration", train.agent.fixed_duration, "control period of sac_fixed in seconds"),
      Field{{"literal_reward_storage", "store rewards shaped at collection time instead of reshaping"},
            [](const RunConfig& c) { return std::string(c.train.agent.literal_reward_storage ? "true" : "false"); },
            [](RunConfig& c, const std::string& v) {
              c.train.agent.literal_reward_storage = to_bool("literal_reward_storage", v);
            }},
      ELASTIC_REAL("final_layer_bound", train.agent.final_layer_bound, "init bound of the output layer of actor and critics"),
      ELASTIC_REAL("a_max", train.car.a_max, "full-gas acceleration, m/s^2"),
      ELASTIC_REAL("b_max", train.car.b_max, "full-brake deceleration, m/s^2"),
      ELASTIC_REAL("c_drag", train.car.c_drag, "linear drag, 1/s"),
      ELASTIC_REAL("v_max", train.car.v_max, "speed limit, m/s"),
      ELASTIC_REAL("wheelbase", train.car.wheelbase, "wheelbase, m"),
      ELASTIC_REAL("steer_max", train.car.steer_max, "steering angle at full lock, rad"),
      ELASTIC_REAL("d_min", train.car.d_min, "shortest control period, s"),
      ELASTIC_REAL("d_max", train.car.d_max, "longest control period, s"),
      ELASTIC_REAL("start_jitter", train.car.start_jitter, "seeded lateral start offset bound, m"),
      ELASTIC_REAL("start_heading_jitter", train.car.start_heading_jitter, "seeded start heading offset bound, rad"),
      ELASTIC_SIZE("eval_episodes", eval_episodes, "episodes per evaluation"),
  };
  return table;
}

#undef ELASTIC_SIZE
#undef ELASTIC_REAL

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key.name == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config(RunConfig& cfg, std::istream& is, const std::string& name) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  apply_config(cfg, is, path);
}

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& f : fields()) out += f.key.name + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : resolved()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

envsim::TrackSpec load_run_track(const RunConfig& cfg) {
  const std::string path = cfg.track_path.empty() ? envsim::default_track_path() : cfg.track_path;
  return envsim::load_track(path);
}

}  // namespace elastic::cli
