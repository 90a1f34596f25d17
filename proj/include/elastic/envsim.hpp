#pragma once

// Variable time-step environment: a kinematic car following a waypoint
// polyline inside a corridor. Each decision carries its own duration, which
// is snapped to the physics substep grid.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "elastic/rng.hpp"

namespace elastic::envsim {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

/// Ordered waypoints plus corridor. Waypoint 0 is the start; passing the
/// last one completes the course. A closed course repeats its first point
/// at the end.
struct TrackSpec {
  std::vector<Point> waypoints;
  double corridor_half_width = 6.0;
  double inner_dt = 1.0 / 120.0;
  Pose start_pose;

  /// Throws ConfigError on fewer than two waypoints, repeated consecutive
  /// waypoints or non-positive widths/substeps.
  void validate() const;
  /// Start at the first waypoint, heading toward the second.
  void set_default_start();
};

TrackSpec parse_track(std::istream& is, const std::string& name = "<stream>");
TrackSpec load_track(const std::string& path);
void write_track(std::ostream& os, const TrackSpec& track);

/// Two straights joined by two half circles, counter-clockwise, sampled at
/// `n` evenly spaced arc-length points and closed back onto the start.
TrackSpec make_stadium_track(double straight = 60.0, double radius = 15.0, std::size_t n = 20,
                             double corridor_half_width = 6.0, double inner_dt = 1.0 / 120.0);

/// Path to the stadium track shipped with the sources.
std::string default_track_path();

struct CarParams {
  double a_max = 8.0;
  double b_max = 12.0;
  double c_drag = 0.12;
  double v_max = 40.0;
  double wheelbase = 2.5;
  double steer_max = 0.5;
  double d_min = 1.0 / 30.0;
  double d_max = 1.0 / 5.0;
  std::size_t k_length = 600;
  // Seeded start perturbation: lateral offset in meters and heading offset
  // in radians, each uniform in [-j, j].
  double start_jitter = 0.0;
  double start_heading_jitter = 0.0;
};

struct CarState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  std::size_t last_passed_index = 0;
  std::size_t step_count = 0;
  std::size_t segment = 0;  // polyline segment the car is tracked on
  double lateral = 0.0;     // signed distance to the path, left positive

  friend bool operator==(const CarState&, const CarState&) = default;
};

struct ElasticAction {
  double gas = 0.0;
  double brake = 0.0;
  double steer = 0.0;
  double duration = 0.0;

  friend bool operator==(const ElasticAction&, const ElasticAction&) = default;
};

enum class Status { Running, Success, OffTrack, Timeout };

const char* to_string(Status s);
inline bool is_done(Status s) { return s != Status::Running; }

inline constexpr std::size_t kObservationDim = 23;
inline constexpr std::size_t kLookahead = 5;

struct StepResult {
  std::vector<double> observation;
  double task_reward = 0.0;
  double elapsed = 0.0;
  Status done = Status::Running;
};

class Environment {
 public:
  struct Snapshot {
    CarState car;
    std::array<ElasticAction, 2> history{};
    Status status = Status::Running;
  };

  explicit Environment(TrackSpec track, CarParams params = {});

  StepResult reset(std::uint64_t seed);
  StepResult step(const ElasticAction& action);
  std::vector<double> observe() const;

  /// Clamps to [d_min, d_max] then rounds to the substep grid (>= 1 substep).
  std::size_t substeps_for(double duration) const;
  double snapped_duration(double duration) const;

  Snapshot snapshot() const { return {car_, history_, status_}; }
  void restore(const Snapshot& s);

  const CarState& state() const { return car_; }
  const std::array<ElasticAction, 2>& history() const { return history_; }
  Status status() const { return status_; }
  const TrackSpec& track() const { return track_; }
  const CarParams& params() const { return params_; }
  /// Number of waypoints that can be passed (all but the start).
  std::size_t passable_waypoints() const { return track_.waypoints.size() - 1; }
  double arc_length_of(std::size_t waypoint) const { return arc_.at(waypoint); }
  std::size_t clamp_warnings() const { return clamp_warnings_; }

 private:
  struct Projection {
    std::size_t segment = 0;
    double arc = 0.0;
    double lateral = 0.0;
  };

  Projection project(double x, double y, std::size_t hint) const;
  void integrate_substep(double gas, double brake, double steer);
  void update_progress();

  TrackSpec track_;
  CarParams params_;
  std::vector<double> arc_;  // cumulative arc length at each waypoint
  CarState car_;
  std::array<ElasticAction, 2> history_{};  // [0] most recent
  Status status_ = Status::Running;
  std::size_t clamp_warnings_ = 0;
};

}  // namespace elastic::envsim
