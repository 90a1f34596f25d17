#include "elastic/errors.hpp"
#include "elastic/gradnet.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace elastic::gradnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void write_doubles(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& is, std::span<double> v, const char* what) {
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!is) throw FormatError(std::string("checkpoint truncated while reading ") + what);
}

std::string read_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(std::string("checkpoint ended before ") + what);
  return line;
}

}  // namespace

// Layout:
//   ELASTIC-CKPT-1
//   layers <n>
//   <fan_in> <fan_out> <activation>      (n lines)
//   weights <count>
//   <count raw doubles, layer order, each layer row-major W then bias>
void save_net(std::ostream& os, const DenseNet& net) {
  os << kCheckpointMagic << "\n";
  os << "layers " << net.layers().size() << "\n";
  for (const auto& l : net.layers()) os << l.fan_in << " " << l.fan_out << " " << to_string(l.activation) << "\n";
  os << "weights " << net.parameter_count() << "\n";
  write_doubles(os, net.weights());
}

DenseNet load_net(std::istream& is) {
  const std::string magic = read_line(is, "magic string");
  if (magic != kCheckpointMagic)
    throw FormatError("bad checkpoint magic '" + magic.substr(0, 32) + "', expected '" + kCheckpointMagic + "'");
  std::istringstream hdr(read_line(is, "layer count"));
  std::string key;
  std::size_t n = 0;
  if (!(hdr >> key >> n) || key != "layers" || n == 0) throw FormatError("checkpoint: malformed 'layers' line");
  std::vector<LayerShape> shapes;
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream ls(read_line(is, "layer shape"));
    LayerShape s;
    std::string act;
    if (!(ls >> s.fan_in >> s.fan_out >> act)) throw FormatError("checkpoint: malformed layer line " + std::to_string(i));
    s.activation = activation_from_string(act);
    shapes.push_back(s);
  }
  std::istringstream ws(read_line(is, "weight count"));
  std::size_t count = 0;
  if (!(ws >> key >> count) || key != "weights") throw FormatError("checkpoint: malformed 'weights' line");
  DenseNet net;
  try {
    net = DenseNet(std::move(shapes));
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("checkpoint: inconsistent layer shapes: ") + e.what());
  }
  if (count != net.parameter_count())
    throw FormatError("checkpoint: weight count " + std::to_string(count) + " does not match layer shapes (" +
                      std::to_string(net.parameter_count()) + ")");
  read_doubles(is, net.weights(), "weights");
  return net;
}

void save_net(const std::string& path, const DenseNet& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint '" + path + "'");
  save_net(os, net);
}

DenseNet load_net(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint '" + path + "'");
  return load_net(is);
}

void save_optim(std::ostream& os, const OptimState& s) {
  os << "optim " << s.m.size() << " " << s.step << " "
     << (s.schedule.kind == Schedule::Kind::Constant ? "constant" : "diminishing") << "\n";
  const double scalars[] = {s.schedule.base_rate, s.schedule.k_decay, s.beta1, s.beta2, s.eps};
  write_doubles(os, scalars);
  write_doubles(os, s.m);
  write_doubles(os, s.v);
}

OptimState load_optim(std::istream& is) {
  std::istringstream hdr(read_line(is, "optimizer header"));
  std::string key;
  std::string kind;
  std::size_t n = 0;
  std::uint64_t step = 0;
  if (!(hdr >> key >> n >> step >> kind) || key != "optim") throw FormatError("checkpoint: malformed optimizer header");
  OptimState s(n);
  s.step = step;
  s.schedule.kind = kind == "constant" ? Schedule::Kind::Constant : Schedule::Kind::Diminishing;
  double scalars[5];
  read_doubles(is, scalars, "optimizer scalars");
  s.schedule.base_rate = scalars[0];
  s.schedule.k_decay = scalars[1];
  s.beta1 = scalars[2];
  s.beta2 = scalars[3];
  s.eps = scalars[4];
  read_doubles(is, s.m, "optimizer first moments");
  read_doubles(is, s.v, "optimizer second moments");
  return s;
}

}  // namespace elastic::gradnet
