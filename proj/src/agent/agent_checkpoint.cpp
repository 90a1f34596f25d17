#include "elastic/agent.hpp"
#include "elastic/errors.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace elastic::agent {

namespace fs = std::filesystem;

namespace {

constexpr const char* kAgentMagic = "ELASTIC-AGENT-1";

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s.empty() ? "-" : s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  if (s == "-") return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  return out;
}

class Header {
 public:
  explicit Header(const std::string& path) : path_(path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open agent header '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != kAgentMagic)
      throw FormatError("agent header '" + path + "': bad magic, expected '" + kAgentMagic + "'");
    while (std::getline(is, line)) {
      const auto sp = line.find(' ');
      if (sp == std::string::npos) continue;
      values_[line.substr(0, sp)] = line.substr(sp + 1);
    }
  }
  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw FormatError("agent header '" + path_ + "': missing key '" + key + "'");
    return it->second;
  }
  double num(const std::string& key) const { return std::stod(str(key)); }
  std::size_t size(const std::string& key) const { return std::stoul(str(key)); }

 private:
  std::string path_;
  std::map<std::string, std::string> values_;
};

}  // namespace

void Agent::save(const std::string& dir, const std::string& config_hash) const {
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "agent.txt");
    if (!os) throw ConfigError("cannot write agent checkpoint into '" + dir + "'");
    os << std::setprecision(17);
    os << kAgentMagic << "\n";
    os << "net_format " << gradnet::kCheckpointMagic << "\n";
    os << "config_hash " << config_hash << "\n";
    os << "algo " << to_string(config_.algo) << "\n";
    os << "obs_dim " << config_.obs_dim << "\n";
    os << "actor_hidden " << join(config_.actor_hidden) << "\n";
    os << "critic_hidden " << join(config_.critic_hidden) << "\n";
    os << "hidden_activation " << gradnet::to_string(config_.hidden_activation) << "\n";
    os << "actor_lr " << config_.actor_lr << "\n";
    os << "critic_lr " << config_.critic_lr << "\n";
    os << "temp_lr " << config_.temp_lr << "\n";
    os << "schedule " << (config_.schedule == gradnet::Schedule::Kind::Constant ? "constant" : "diminishing") << "\n";
    os << "k_decay " << config_.k_decay << "\n";
    os << "gamma " << config_.gamma << "\n";
    os << "tau_soft " << config_.tau_soft << "\n";
    os << "init_temperature " << config_.init_temperature << "\n";
    os << "eps_pen " << config_.eps_pen << "\n";
    os << "tau_pen " << config_.tau_pen << "\n";
    os << "d_min " << config_.range.d_min << "\n";
    os << "d_max " << config_.range.d_max << "\n";
    os << "fixed_duration " << config_.fixed_duration << "\n";
    os << "literal_reward_storage " << (config_.literal_reward_storage ? 1 : 0) << "\n";
    os << "final_layer_bound " << config_.final_layer_bound << "\n";
    os << "alpha_m " << reward_.alpha_m << "\n";
    os << "alpha_max " << reward_.alpha_max << "\n";
    os << "psi " << reward_.psi << "\n";
    os << "alpha_eps " << reward_.alpha_eps << "\n";
    os << "trend_delta " << reward_.trend_delta << "\n";
    os << "prev_avg_reward ";
    if (reward_.prev_avg_reward)
      os << *reward_.prev_avg_reward << "\n";
    else
      os << "unset\n";
    os << "log_temp " << temp_.log_temp << "\n";
    os << "target_entropy " << temp_.target_entropy << "\n";
    os << "updates " << updates_ << "\n";
    os << "last_grad_norm " << last_grad_norm_ << "\n";
  }
  gradnet::save_net((fs::path(dir) / "actor.ckpt").string(), policy_.actor());
  gradnet::save_net((fs::path(dir) / "q1.ckpt").string(), critics_.q1);
  gradnet::save_net((fs::path(dir) / "q2.ckpt").string(), critics_.q2);
  gradnet::save_net((fs::path(dir) / "q1_target.ckpt").string(), critics_.q1_target);
  gradnet::save_net((fs::path(dir) / "q2_target.ckpt").string(), critics_.q2_target);
  std::ofstream os(fs::path(dir) / "optim.bin", std::ios::binary);
  gradnet::save_optim(os, actor_opt_);
  gradnet::save_optim(os, q1_opt_);
  gradnet::save_optim(os, q2_opt_);
  gradnet::save_optim(os, temp_opt_);
}

Agent Agent::load(const std::string& dir) {
  if (!fs::is_directory(dir)) throw FormatError("agent checkpoint '" + dir + "' is not a directory");
  const Header h((fs::path(dir) / "agent.txt").string());
  if (h.str("net_format") != gradnet::kCheckpointMagic)
    throw FormatError("agent checkpoint '" + dir + "': network format '" + h.str("net_format") + "', expected '" +
                      gradnet::kCheckpointMagic + "'");
  Agent a;
  AgentConfig& c = a.config_;
  c.algo = algo_from_string(h.str("algo"));
  c.obs_dim = h.size("obs_dim");
  c.actor_hidden = split_sizes(h.str("actor_hidden"));
  c.critic_hidden = split_sizes(h.str("critic_hidden"));
  c.hidden_activation = gradnet::activation_from_string(h.str("hidden_activation"));
  c.actor_lr = h.num("actor_lr");
  c.critic_lr = h.num("critic_lr");
  c.temp_lr = h.num("temp_lr");
  c.schedule = h.str("schedule") == "constant" ? gradnet::Schedule::Kind::Constant : gradnet::Schedule::Kind::Diminishing;
  c.k_decay = h.num("k_decay");
  c.gamma = h.num("gamma");
  c.tau_soft = h.num("tau_soft");
  c.init_temperature = h.num("init_temperature");
  c.eps_pen = h.num("eps_pen");
  c.tau_pen = h.num("tau_pen");
  c.range.d_min = h.num("d_min");
  c.range.d_max = h.num("d_max");
  c.fixed_duration = h.num("fixed_duration");
  c.literal_reward_storage = h.size("literal_reward_storage") != 0;
  c.final_layer_bound = h.num("final_layer_bound");

  a.reward_.alpha_m = h.num("alpha_m");
  a.reward_.alpha_max = h.num("alpha_max");
  a.reward_.psi = h.num("psi");
  a.reward_.alpha_eps = h.num("alpha_eps");
  a.reward_.trend_delta = h.num("trend_delta");
  if (h.str("prev_avg_reward") != "unset") a.reward_.prev_avg_reward = h.num("prev_avg_reward");
  c.alpha_m = a.reward_.alpha_m;
  c.alpha_max = a.reward_.alpha_max;
  c.psi = a.reward_.psi;
  c.trend_delta = a.reward_.trend_delta;
  a.temp_.log_temp = h.num("log_temp");
  a.temp_.target_entropy = h.num("target_entropy");
  a.updates_ = h.size("updates");
  a.last_grad_norm_ = h.num("last_grad_norm");

  const bool elastic = c.algo != Algo::SacFixed;
  a.policy_ = PolicyHead(gradnet::load_net((fs::path(dir) / "actor.ckpt").string()), c.range, elastic,
                         c.fixed_duration);
  a.critics_.q1 = gradnet::load_net((fs::path(dir) / "q1.ckpt").string());
  a.critics_.q2 = gradnet::load_net((fs::path(dir) / "q2.ckpt").string());
  a.critics_.q1_target = gradnet::load_net((fs::path(dir) / "q1_target.ckpt").string());
  a.critics_.q2_target = gradnet::load_net((fs::path(dir) / "q2_target.ckpt").string());
  if (a.policy_.actor().input_dim() != c.obs_dim || a.critics_.q1.input_dim() != c.obs_dim + kCriticActionDim)
    throw FormatError("agent checkpoint '" + dir + "': network shapes disagree with header");

  std::ifstream os(fs::path(dir) / "optim.bin", std::ios::binary);
  if (!os) throw FormatError("agent checkpoint '" + dir + "': missing optim.bin");
  a.actor_opt_ = gradnet::load_optim(os);
  a.q1_opt_ = gradnet::load_optim(os);
  a.q2_opt_ = gradnet::load_optim(os);
  a.temp_opt_ = gradnet::load_optim(os);
  return a;
}

}  // namespace elastic::agent
