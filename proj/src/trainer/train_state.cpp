#include "elastic/errors.hpp"
#include "elastic/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace elastic::trainer {

namespace fs = std::filesystem;

namespace {

constexpr const char* kStateMagic = "ELASTIC-TRAINER-1";

}  // namespace

void Trainer::save_checkpoint(const std::string& dir) const {
  const fs::path root(dir);
  fs::create_directories(root);
  agent_.save((root / "agent").string(), config_.config_hash);
  {
    std::ofstream os(root / "trainer.txt");
    if (!os) throw ConfigError("cannot write trainer state into '" + dir + "'");
    os << std::setprecision(17);
    os << kStateMagic << "\n";
    os << "config_hash " << config_.config_hash << "\n";
    os << "episodes_done " << episodes_done_ << "\n";
    os << "window_sum " << window_.sum << "\n";
    os << "window_steps " << window_.steps << "\n";
    os << "update_episodes " << update_episodes_.size();
    for (auto e : update_episodes_) os << " " << e;
    os << "\n";
    os << "explore_rng " << explore_rng_.serialize() << "\n";
    os << "update_rng " << update_rng_.serialize() << "\n";
  }
  {
    std::ofstream os(root / "probe.txt");
    probe_.save(os);
  }
  {
    std::ofstream os(root / "replay.bin", std::ios::binary);
    buffer_.save(os);
  }
  std::ofstream os(root / "metrics.csv");
  os << metrics_header() << "\n";
  for (const auto& m : metrics_) os << format_metrics_row(m) << "\n";
}

Trainer Trainer::resume(const std::string& checkpoint_dir, TrainConfig config, envsim::TrackSpec track) {
  const fs::path root(checkpoint_dir);
  if (!fs::is_directory(root)) throw FormatError("trainer checkpoint '" + checkpoint_dir + "' is not a directory");
  Trainer t(std::move(config), std::move(track));
  t.agent_ = agent::Agent::load((root / "agent").string());
  // Loop settings come from the caller; agent settings from the checkpoint.
  t.config_.agent = t.agent_.config();

  std::ifstream is(root / "trainer.txt");
  std::string line;
  if (!std::getline(is, line) || line != kStateMagic)
    throw FormatError("trainer checkpoint '" + checkpoint_dir + "': bad magic, expected '" + kStateMagic + "'");
  auto value_of = [&](const std::string& key) {
    if (!std::getline(is, line) || line.rfind(key + " ", 0) != 0)
      throw FormatError("trainer checkpoint '" + checkpoint_dir + "': expected key '" + key + "'");
    return line.substr(key.size() + 1);
  };
  value_of("config_hash");
  t.episodes_done_ = std::stoul(value_of("episodes_done"));
  t.window_.sum = std::stod(value_of("window_sum"));
  t.window_.steps = std::stoul(value_of("window_steps"));
  {
    std::istringstream ls(value_of("update_episodes"));
    std::size_t n = 0;
    ls >> n;
    t.update_episodes_.resize(n);
    for (auto& e : t.update_episodes_) ls >> e;
    if (!ls) throw FormatError("trainer checkpoint '" + checkpoint_dir + "': malformed update_episodes");
  }
  t.explore_rng_.deserialize(value_of("explore_rng"));
  t.update_rng_.deserialize(value_of("update_rng"));

  std::ifstream ps(root / "probe.txt");
  t.probe_ = LyapunovProbe::load(ps);
  std::ifstream rs(root / "replay.bin", std::ios::binary);
  if (!rs) throw FormatError("trainer checkpoint '" + checkpoint_dir + "': missing replay.bin");
  t.buffer_ = ReplayBuffer::load(rs);
  t.metrics_ = read_metrics_csv((root / "metrics.csv").string());
  if (t.metrics_.size() != t.episodes_done_)
    throw FormatError("trainer checkpoint '" + checkpoint_dir + "': metrics rows disagree with episode count");

  if (!t.config_.outdir.empty()) {
    fs::create_directories(t.config_.outdir);
    fs::copy_file(root / "metrics.csv", fs::path(t.config_.outdir) / "metrics.csv",
                  fs::copy_options::overwrite_existing);
  }
  t.initialized_ = true;
  return t;
}

}  // namespace elastic::trainer
