#include "geopf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace geopf {

namespace {

void require_finite_field(double v, const char* field) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(field) + " must be finite");
  }
}

}  // namespace

void TrajectorySpec::validate(const TileGrid& grid) const {
  if (mode == TrajectoryMode::waypoints) {
    if (!(std::isfinite(speed) && speed > 0.0)) {
      throw std::invalid_argument("trajectory.speed must be finite and positive");
    }
    if (waypoints.size() < 2) {
      throw std::invalid_argument("trajectory.waypoints needs at least 2 points");
    }
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
      const WorldPoint& w = waypoints[i];
      if (!std::isfinite(w.x) || !std::isfinite(w.y)) {
        throw std::invalid_argument("trajectory.waypoints[" + std::to_string(i) +
                                    "] must be finite");
      }
      if (!grid.contains(w)) {
        throw std::invalid_argument("trajectory.waypoints[" + std::to_string(i) +
                                    "] lies outside the grid");
      }
    }
  } else {
    if (!(std::isfinite(speed) && speed >= 0.0)) {
      throw std::invalid_argument("trajectory.speed must be finite and nonnegative");
    }
    if (steps < 1) throw std::invalid_argument("trajectory.steps must be at least 1");
    if (!(std::isfinite(turn_rate_max) && turn_rate_max >= 0.0)) {
      throw std::invalid_argument("trajectory.turn_rate_max must be finite and nonnegative");
    }
    require_finite_field(start_heading, "trajectory.start_heading");
    if (!std::isfinite(start.x) || !std::isfinite(start.y) || !grid.contains(start)) {
      throw std::invalid_argument("trajectory.start lies outside the grid");
    }
  }
}

namespace {

Trajectory trace_waypoints(const TrajectorySpec& spec) {
  // Arc-length sampling of the polyline, every `speed` meters from the first
  // waypoint. A trailing remainder shorter than one step is dropped.
  struct Segment {
    WorldPoint a, b;
    double length, heading;
  };
  std::vector<Segment> segments;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < spec.waypoints.size(); ++i) {
    const WorldPoint a = spec.waypoints[i];
    const WorldPoint b = spec.waypoints[i + 1];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len == 0.0) continue;
    segments.push_back({a, b, len, std::atan2(b.y - a.y, b.x - a.x)});
    total += len;
  }
  if (segments.empty()) {
    throw std::invalid_argument("trajectory.waypoints trace a zero-length path");
  }

  Trajectory traj;
  std::size_t seg = 0;
  double seg_start = 0.0;
  for (std::size_t k = 0;; ++k) {
    const double d = static_cast<double>(k) * spec.speed;
    if (d > total + 1e-9) break;
    while (seg + 1 < segments.size() && d >= seg_start + segments[seg].length - 1e-9) {
      seg_start += segments[seg].length;
      ++seg;
    }
    const Segment& s = segments[seg];
    const double frac = std::min((d - seg_start) / s.length, 1.0);
    traj.poses.push_back({s.a.x + frac * (s.b.x - s.a.x), s.a.y + frac * (s.b.y - s.a.y),
                          s.heading});
  }
  return traj;
}

Trajectory trace_random_walk(const TrajectorySpec& spec, const TileGrid& grid, RngStream& rng) {
  const double margin = 2.0 * grid.spacing();
  const WorldPoint center{grid.origin().x + grid.width() / 2.0,
                          grid.origin().y + grid.height() / 2.0};
  Trajectory traj;
  WorldPoint pos = spec.start;
  double psi = wrap_angle(spec.start_heading);
  traj.poses.push_back({pos.x, pos.y, psi});
  for (std::size_t t = 1; t < spec.steps; ++t) {
    double turn = (2.0 * rng.next_double() - 1.0) * spec.turn_rate_max;
    const bool near_edge = pos.x < grid.origin().x + margin ||
                           pos.x > grid.origin().x + grid.width() - margin ||
                           pos.y < grid.origin().y + margin ||
                           pos.y > grid.origin().y + grid.height() - margin;
    if (near_edge) {
      const double to_center = std::atan2(center.y - pos.y, center.x - pos.x);
      turn = std::clamp(wrap_angle(to_center - psi), -spec.turn_rate_max, spec.turn_rate_max);
    }
    psi = wrap_angle(psi + turn);
    pos.x += spec.speed * std::cos(psi);
    pos.y += spec.speed * std::sin(psi);
    if (!grid.contains(pos)) {
      throw std::runtime_error("random walk left the grid at step " + std::to_string(t) +
                               "; reduce speed or steps, or raise turn_rate_max");
    }
    traj.poses.push_back({pos.x, pos.y, psi});
  }
  return traj;
}

}  // namespace

Trajectory generate_trajectory(const TrajectorySpec& spec, const TileGrid& grid, RngStream& rng) {
  spec.validate(grid);
  if (spec.mode == TrajectoryMode::waypoints) return trace_waypoints(spec);
  return trace_random_walk(spec, grid, rng);
}

std::vector<OdometryStep> noisy_odometry(const std::vector<WorldPose>& truth,
                                         double odo_noise_frac, double heading_noise_frac,
                                         RngStream& rng) {
  if (!(std::isfinite(odo_noise_frac) && odo_noise_frac >= 0.0) ||
      !(std::isfinite(heading_noise_frac) && heading_noise_frac >= 0.0)) {
    throw std::invalid_argument("odometry noise fractions must be finite and nonnegative");
  }
  if (truth.empty()) throw std::invalid_argument("odometry needs at least one pose");

  std::vector<OdometryStep> steps;
  steps.reserve(truth.size() - 1);
  double prev_meas_psi = truth[0].psi;
  for (std::size_t t = 1; t < truth.size(); ++t) {
    const double dx = truth[t].x - truth[t - 1].x;
    const double dy = truth[t].y - truth[t - 1].y;
    const double len = std::hypot(dx, dy);
    const double dpsi = wrap_angle(truth[t].psi - truth[t - 1].psi);
    const double gx = rng.next_gaussian();
    const double gy = rng.next_gaussian();
    const double gh = rng.next_gaussian();
    // The heading sensor measures absolute heading with error proportional to
    // the step's turn, so its error does not accumulate along the path.
    const double meas_psi = wrap_angle(truth[t].psi + heading_noise_frac * std::abs(dpsi) * gh);
    steps.push_back({dx + odo_noise_frac * len * gx, dy + odo_noise_frac * len * gy,
                     wrap_angle(meas_psi - prev_meas_psi)});
    prev_meas_psi = meas_psi;
  }
  return steps;
}

TileGrid GridSpec::build() const {
  require_finite_field(origin_x, "grid.origin_x");
  require_finite_field(origin_y, "grid.origin_y");
  if (!(std::isfinite(spacing) && spacing > 0.0)) {
    throw std::invalid_argument("grid.spacing must be finite and positive");
  }
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("grid.rows and grid.cols must be at least 1");
  }
  return TileGrid({origin_x, origin_y}, spacing, rows, cols);
}

SyntheticWorld WorldSpec::build(const TileGrid& grid) const {
  SyntheticWorld world(params, grid.rows(), grid.cols());
  for (std::size_t i = 0; i < confusers.size(); ++i) {
    const ConfuserPose& c = confusers[i];
    if (!std::isfinite(c.x) || !std::isfinite(c.y) || !std::isfinite(c.psi)) {
      throw std::invalid_argument("world.confusers[" + std::to_string(i) + "] must be finite");
    }
    world.add_confuser(c);
  }
  for (const MaskRect& m : masks) {
    world.mask_rect(m.row0, m.col0, m.row1, m.col1);
  }
  return world;
}

void ExperimentConfig::validate() const {
  const TileGrid g = grid.build();
  (void)world.build(g);
  trajectory.validate(g);
  if (particle_count < 1) throw std::invalid_argument("particle_count must be at least 1");
  require_finite_field(init_offset_x, "init_offset_x");
  require_finite_field(init_offset_y, "init_offset_y");
  if (!(std::isfinite(init_sigma) && init_sigma > 0.0)) {
    throw std::invalid_argument("init_sigma must be finite and positive");
  }
  if (!(std::isfinite(odometry_noise_frac) && odometry_noise_frac >= 0.0)) {
    throw std::invalid_argument("odometry_noise_frac must be finite and nonnegative");
  }
  if (!(std::isfinite(heading_noise_frac) && heading_noise_frac >= 0.0)) {
    throw std::invalid_argument("heading_noise_frac must be finite and nonnegative");
  }
  measurement.validate();
  if (!(std::isfinite(ess_threshold_frac) && ess_threshold_frac > 0.0 &&
        ess_threshold_frac <= 1.0)) {
    throw std::invalid_argument("ess_threshold_frac must lie in (0, 1]");
  }
  if (!(std::isfinite(convergence_radius) && convergence_radius > 0.0)) {
    throw std::invalid_argument("convergence_radius must be finite and positive");
  }
}

namespace {

// Substream purposes hung off the master seed; per-step streams take the step
// index so draw order never couples across steps.
constexpr std::uint64_t kTrajStream = 1;
constexpr std::uint64_t kOdoStream = 2;
constexpr std::uint64_t kInitStream = 3;
constexpr std::uint64_t kPropStream = 4;
constexpr std::uint64_t kObsStream = 5;
constexpr std::uint64_t kResampleStream = 6;

}  // namespace

MetricsLog run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const TileGrid grid = config.grid.build();
  const SyntheticWorld world = config.world.build(grid);

  RngStream traj_rng = substream(config.seed, kTrajStream);
  const Trajectory traj = generate_trajectory(config.trajectory, grid, traj_rng);
  RngStream odo_rng = substream(config.seed, kOdoStream);
  const std::vector<OdometryStep> odometry =
      noisy_odometry(traj.poses, config.odometry_noise_frac, config.heading_noise_frac, odo_rng);

  const WorldPoint init_center{traj.poses[0].x + config.init_offset_x,
                               traj.poses[0].y + config.init_offset_y};
  if (!grid.contains(init_center)) {
    throw std::invalid_argument("init center lies outside the grid; shrink the init offset");
  }
  RngStream init_rng = substream(config.seed, kInitStream);
  ParticleSet set = init_gaussian(init_center, config.init_sigma, config.particle_count, init_rng);

  double heading_meas = traj.poses[0].psi;
  MetricsLog log;
  log.reserve(traj.poses.size());
  std::vector<double> scores(set.size());

  for (std::size_t t = 0; t < traj.poses.size(); ++t) {
    if (t > 0) {
      const OdometryStep& step = odometry[t - 1];
      RngStream prop_rng = substream(config.seed, kPropStream, t);
      set = propagate(set, step, config.odometry_noise_frac, prop_rng);
      heading_meas = wrap_angle(heading_meas + step.dpsi);
    }

    RngStream obs_rng = substream(config.seed, kObsStream, t);
    const SyntheticObservation obs =
        synth_observe(world, grid, traj.poses[t], config.ablation, obs_rng);
    for (std::size_t i = 0; i < set.size(); ++i) {
      scores[i] = obs.score(set.particles[i].x, set.particles[i].y, heading_meas, i);
    }
    set = reweight(set, scores, config.measurement);
    const double ess_now = ess(set);

    RngStream res_rng = substream(config.seed, kResampleStream, t);
    ResampleOutcome outcome =
        maybe_resample(set, config.ess_threshold_frac, config.strategy, res_rng);
    set = std::move(outcome.set);

    const Estimate est = estimate(set);
    const double err =
        std::hypot(est.mean.x - traj.poses[t].x, est.mean.y - traj.poses[t].y);
    log.push_back({t, err, ess_now, outcome.resampled, est.rms_dispersion, est.std_x, est.std_y});
    if (options.step_observer) options.step_observer(t, set, est, traj.poses[t]);
  }
  return log;
}

MetricsLog run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, RunOptions{});
}

}  // namespace geopf
