#include "elastic/errors.hpp"
#include "elastic/trainer.hpp"

#include <istream>
#include <ostream>

namespace elastic::trainer {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
    return;
  }
  data_[cursor_] = std::move(t);
  cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw ContractViolation("ReplayBuffer::at out of range");
  return data_.size() < capacity_ ? data_[i] : data_[(cursor_ + i) % capacity_];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  if (batch == 0 || batch > data_.size())
    throw ContractViolation("ReplayBuffer::sample: batch " + std::to_string(batch) + " with " +
                            std::to_string(data_.size()) + " stored transitions");
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t i : rng.sample_without_replacement(data_.size(), batch)) out.push_back(&data_[i]);
  return out;
}

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("replay buffer file truncated");
  return v;
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_vec(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1u << 20)) throw FormatError("replay buffer file: implausible vector length");
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw FormatError("replay buffer file truncated");
  return v;
}

}  // namespace

void ReplayBuffer::save(std::ostream& os) const {
  os << "ELASTIC-REPLAY-1\n";
  put<std::uint64_t>(os, capacity_);
  put<std::uint64_t>(os, cursor_);
  put<std::uint64_t>(os, data_.size());
  for (const auto& t : data_) {
    put_vec(os, t.obs);
    for (double c : t.controls) put(os, c);
    put(os, t.duration);
    put(os, t.task_reward);
    put(os, t.shaped_reward);
    put_vec(os, t.next_obs);
    put<std::uint8_t>(os, t.terminal ? 1 : 0);
  }
}

ReplayBuffer ReplayBuffer::load(std::istream& is) {
  std::string magic;
  if (!std::getline(is, magic) || magic != "ELASTIC-REPLAY-1") throw FormatError("replay buffer file: bad magic");
  ReplayBuffer b(get<std::uint64_t>(is));
  b.cursor_ = get<std::uint64_t>(is);
  const auto n = get<std::uint64_t>(is);
  if (n > b.capacity_) throw FormatError("replay buffer file: more transitions than capacity");
  b.data_.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Transition t;
    t.obs = get_vec(is);
    for (double& c : t.controls) c = get<double>(is);
    t.duration = get<double>(is);
    t.task_reward = get<double>(is);
    t.shaped_reward = get<double>(is);
    t.next_obs = get_vec(is);
    t.terminal = get<std::uint8_t>(is) != 0;
    b.data_.push_back(std::move(t));
  }
  return b;
}

}  // namespace elastic::trainer
