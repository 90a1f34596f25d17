#include "elastic/envsim.hpp"
#include "elastic/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace elastic::envsim {

void TrackSpec::validate() const {
  if (waypoints.size() < 2) throw ConfigError("track needs at least 2 waypoints, got " + std::to_string(waypoints.size()));
  for (std::size_t i = 1; i < waypoints.size(); ++i)
    if (waypoints[i] == waypoints[i - 1])
      throw ConfigError("track waypoints " + std::to_string(i - 1) + " and " + std::to_string(i) + " coincide");
  if (!(corridor_half_width > 0.0)) throw ConfigError("track corridor_half_width must be > 0");
  if (!(inner_dt > 0.0)) throw ConfigError("track inner_dt must be > 0");
}

void TrackSpec::set_default_start() {
  if (waypoints.size() < 2) return;
  const Point& a = waypoints[0];
  const Point& b = waypoints[1];
  start_pose = {a.x, a.y, std::atan2(b.y - a.y, b.x - a.x)};
}

TrackSpec parse_track(std::istream& is, const std::string& name) {
  TrackSpec t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    if (!have_header) {
      std::string tag;
      if (!(ls >> tag >> t.corridor_half_width >> t.inner_dt) || tag != "track-v1")
        throw ConfigError(name + ":" + std::to_string(lineno) +
                          ": expected header 'track-v1 <corridor_half_width> <inner_dt>'");
      have_header = true;
      continue;
    }
    Point p;
    std::string extra;
    if (!(ls >> p.x >> p.y) || (ls >> extra))
      throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 'x y'");
    t.waypoints.push_back(p);
  }
  if (!have_header) throw ConfigError(name + ": empty track file");
  t.validate();
  t.set_default_start();
  return t;
}

TrackSpec load_track(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open track file '" + path + "'");
  return parse_track(is, path);
}

void write_track(std::ostream& os, const TrackSpec& track) {
  os << std::setprecision(17);
  os << "track-v1 " << track.corridor_half_width << " " << track.inner_dt << "\n";
  for (const auto& p : track.waypoints) os << p.x << " " << p.y << "\n";
}

TrackSpec make_stadium_track(double straight, double radius, std::size_t n, double corridor_half_width,
                             double inner_dt) {
  const double pi = std::numbers::pi;
  const double perimeter = 2.0 * straight + 2.0 * pi * radius;
  const double half = straight / 2.0;
  auto at = [&](double s) -> Point {
    if (s < straight) return {-half + s, -radius};
    s -= straight;
    if (s < pi * radius) {
      const double phi = -pi / 2.0 + s / radius;
      return {half + radius * std::cos(phi), radius * std::sin(phi)};
    }
    s -= pi * radius;
    if (s < straight) return {half - s, radius};
    s -= straight;
    const double phi = pi / 2.0 + s / radius;
    return {-half + radius * std::cos(phi), radius * std::sin(phi)};
  };
  TrackSpec t;
  t.corridor_half_width = corridor_half_width;
  t.inner_dt = inner_dt;
  for (std::size_t k = 0; k < n; ++k) t.waypoints.push_back(at(perimeter * static_cast<double>(k) / static_cast<double>(n)));
  t.waypoints.push_back(t.waypoints.front());
  t.validate();
  t.set_default_start();
  return t;
}

std::string default_track_path() { return std::string(ELASTIC_DATA_DIR) + "/stadium.track"; }

}  // namespace elastic::envsim
