#include "elastic/envsim.hpp"
#include "elastic/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace elastic::envsim {

const char* to_string(Status s) {
  switch (s) {
    case Status::Running: return "running";
    case Status::Success: return "success";
    case Status::OffTrack: return "off_track";
    case Status::Timeout: return "timeout";
  }
  return "running";
}

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

Environment::Environment(TrackSpec track, CarParams params) : track_(std::move(track)), params_(params) {
  track_.validate();
  if (!(params_.d_min > 0.0 && params_.d_min < params_.d_max)) throw ConfigError("need 0 < d_min < d_max");
  if (params_.k_length == 0) throw ConfigError("k_length must be >= 1");
  arc_.assign(track_.waypoints.size(), 0.0);
  for (std::size_t i = 1; i < track_.waypoints.size(); ++i) {
    const Point& a = track_.waypoints[i - 1];
    const Point& b = track_.waypoints[i];
    arc_[i] = arc_[i - 1] + std::hypot(b.x - a.x, b.y - a.y);
  }
  status_ = Status::Timeout;  // must reset() before stepping
}

Environment::Projection Environment::project(double x, double y, std::size_t hint) const {
  const std::size_t nseg = track_.waypoints.size() - 1;
  const std::size_t lo = hint == 0 ? 0 : hint - 1;
  const std::size_t hi = std::min(nseg - 1, hint + 2);
  Projection best;
  double best_dist = INFINITY;
  for (std::size_t i = lo; i <= hi; ++i) {
    const Point& a = track_.waypoints[i];
    const Point& b = track_.waypoints[i + 1];
    const double ex = b.x - a.x;
    const double ey = b.y - a.y;
    const double px = x - a.x;
    const double py = y - a.y;
    const double len2 = ex * ex + ey * ey;
    const double t = std::clamp((px * ex + py * ey) / len2, 0.0, 1.0);
    const double dx = px - t * ex;
    const double dy = py - t * ey;
    const double dist = std::hypot(dx, dy);
    if (dist < best_dist) {
      best_dist = dist;
      const double cross = ex * py - ey * px;
      best.segment = i;
      best.arc = arc_[i] + t * (arc_[i + 1] - arc_[i]);
      best.lateral = cross > 0.0 ? dist : (cross < 0.0 ? -dist : 0.0);
    }
  }
  return best;
}

void Environment::update_progress() {
  const Projection p = project(car_.x, car_.y, car_.segment);
  car_.segment = p.segment;
  car_.lateral = p.lateral;
  while (car_.last_passed_index + 1 < arc_.size() && p.arc >= arc_[car_.last_passed_index + 1])
    ++car_.last_passed_index;
}

void Environment::integrate_substep(double gas, double brake, double steer) {
  const double dt = track_.inner_dt;
  const double v = car_.speed;
  const double accel = params_.a_max * std::max(gas, 0.0) - params_.b_max * std::max(brake, 0.0) - params_.c_drag * v;
  const double yaw_rate = (v / params_.wheelbase) * std::tan(steer * params_.steer_max);
  car_.x += dt * v * std::cos(car_.heading);
  car_.y += dt * v * std::sin(car_.heading);
  car_.heading += dt * yaw_rate;
  car_.speed = std::clamp(v + dt * accel, 0.0, params_.v_max);
}

StepResult Environment::reset(std::uint64_t seed) {
  Rng rng(seed);
  const double lat = rng.uniform(-1.0, 1.0) * params_.start_jitter;
  const double dh = rng.uniform(-1.0, 1.0) * params_.start_heading_jitter;
  const Pose& s = track_.start_pose;
  // Lateral offset is applied along the left normal of the first segment.
  const Point& a = track_.waypoints[0];
  const Point& b = track_.waypoints[1];
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const double nx = -(b.y - a.y) / len;
  const double ny = (b.x - a.x) / len;
  car_ = CarState{};
  car_.x = s.x + lat * nx;
  car_.y = s.y + lat * ny;
  car_.heading = s.heading + dh;
  history_ = {};
  status_ = Status::Running;
  update_progress();
  StepResult r;
  r.observation = observe();
  return r;
}

std::size_t Environment::substeps_for(double duration) const {
  const double d = std::clamp(duration, params_.d_min, params_.d_max);
  const long long n = std::llround(d / track_.inner_dt);
  return static_cast<std::size_t>(std::max<long long>(1, n));
}

double Environment::snapped_duration(double duration) const {
  return static_cast<double>(substeps_for(duration)) * track_.inner_dt;
}

StepResult Environment::step(const ElasticAction& action) {
  if (is_done(status_))
    throw ContractViolation(std::string("Environment::step after episode end (status ") + to_string(status_) + ")");
  constexpr double kSlack = 1e-9;
  if (action.duration < params_.d_min - kSlack || action.duration > params_.d_max + kSlack) {
    if (clamp_warnings_++ < 3)
      std::clog << "warning: action duration " << action.duration << " s outside [" << params_.d_min << ", "
                << params_.d_max << "], clamped\n";
  }
  const std::size_t n = substeps_for(action.duration);
  const double gas = clamp_unit(action.gas);
  const double brake = clamp_unit(action.brake);
  const double steer = clamp_unit(action.steer);
  const std::size_t passed_before = car_.last_passed_index;
  const std::size_t final_index = arc_.size() - 1;

  Status outcome = Status::Running;
  for (std::size_t k = 0; k < n && outcome == Status::Running; ++k) {
    integrate_substep(gas, brake, steer);
    update_progress();
    if (car_.last_passed_index == final_index)
      outcome = Status::Success;
    else if (std::abs(car_.lateral) > track_.corridor_half_width)
      outcome = Status::OffTrack;
  }
  ++car_.step_count;
  if (outcome == Status::Running && car_.step_count >= params_.k_length) outcome = Status::Timeout;
  status_ = outcome;

  history_[1] = history_[0];
  history_[0] = {gas, brake, steer, static_cast<double>(n) * track_.inner_dt};

  StepResult r;
  r.task_reward = static_cast<double>(car_.last_passed_index - passed_before) / 100.0;
  r.elapsed = static_cast<double>(n) * track_.inner_dt;
  r.done = status_;
  r.observation = observe();
  return r;
}

void Environment::restore(const Snapshot& s) {
  car_ = s.car;
  history_ = s.history;
  status_ = s.status;
}

std::vector<double> Environment::observe() const {
  std::vector<double> obs;
  obs.reserve(kObservationDim);
  const double c = std::cos(car_.heading);
  const double s = std::sin(car_.heading);
  const std::size_t last = track_.waypoints.size() - 1;

  obs.push_back(clamp_unit(car_.speed / params_.v_max));

  const Point& next = track_.waypoints[std::min(car_.last_passed_index + 1, last)];
  const double dx = next.x - car_.x;
  const double dy = next.y - car_.y;
  const double dist = std::hypot(dx, dy);
  if (dist > 0.0) {
    obs.push_back(clamp_unit((c * dy - s * dx) / dist));
    obs.push_back(clamp_unit((c * dx + s * dy) / dist));
  } else {
    obs.push_back(0.0);
    obs.push_back(1.0);
  }

  for (std::size_t j = 1; j <= kLookahead; ++j) {
    const Point& w = track_.waypoints[std::min(car_.last_passed_index + j, last)];
    const double rx = w.x - car_.x;
    const double ry = w.y - car_.y;
    obs.push_back(clamp_unit((c * rx + s * ry) / 50.0));
    obs.push_back(clamp_unit((-s * rx + c * ry) / 50.0));
  }

  obs.push_back(clamp_unit(car_.lateral / track_.corridor_half_width));
  obs.push_back(clamp_unit(static_cast<double>(car_.step_count) / static_cast<double>(params_.k_length)));

  const double span = params_.d_max - params_.d_min;
  for (const auto& a : history_) {
    obs.push_back(clamp_unit(a.gas));
    obs.push_back(clamp_unit(a.brake));
    obs.push_back(clamp_unit(a.steer));
    obs.push_back(a.duration == 0.0 ? 0.0 : clamp_unit((a.duration - params_.d_min) / span));
  }
  return obs;
}

}  // namespace elastic::envsim
