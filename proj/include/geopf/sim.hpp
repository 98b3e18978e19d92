#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "geopf/embeddings.hpp"
#include "geopf/filter.hpp"
#include "geopf/grid.hpp"
#include "geopf/rng.hpp"

namespace geopf {

// Ground-truth path: one pose per step, all inside the grid.
struct Trajectory {
  std::vector<WorldPose> poses;
};

enum class TrajectoryMode { waypoints, random_walk };

struct TrajectorySpec {
  // random_walk is the default because it needs no per-config path data; the
  // start falls back to the grid center when configs omit it.
  TrajectoryMode mode = TrajectoryMode::random_walk;
  double speed = 10.0;  // meters per step, both modes

  // Waypoint mode: the path is the polyline through these points, sampled
  // every `speed` meters starting at the first waypoint.
  std::vector<WorldPoint> waypoints;

  // Random-walk mode: per-step heading change is uniform within
  // [-turn_rate_max, turn_rate_max], with steering toward the grid center
  // near the boundary (still within the turn bound).
  WorldPoint start{0.0, 0.0};
  double start_heading = 0.0;
  double turn_rate_max = 0.3;  // radians per step
  std::size_t steps = 100;     // pose count

  void validate(const TileGrid& grid) const;
  bool operator==(const TrajectorySpec&) const = default;
};

Trajectory generate_trajectory(const TrajectorySpec& spec, const TileGrid& grid, RngStream& rng);

// Measured odometry between consecutive truth poses. Displacement noise is
// per-axis Gaussian with std frac*|step length|; the heading measurement is
// the true heading plus Gaussian noise with std frac*|heading change|, so
// heading error does not accumulate (compass-like sensor).
std::vector<OdometryStep> noisy_odometry(const std::vector<WorldPose>& truth,
                                         double odo_noise_frac, double heading_noise_frac,
                                         RngStream& rng);

struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double spacing = 60.0;
  std::size_t rows = 256;
  std::size_t cols = 256;

  TileGrid build() const;
  bool operator==(const GridSpec&) const = default;
};

struct MaskRect {
  std::size_t row0 = 0;
  std::size_t col0 = 0;
  std::size_t row1 = 0;
  std::size_t col1 = 0;
  bool operator==(const MaskRect&) const = default;
};

struct WorldSpec {
  SyntheticWorld::Params params;
  std::vector<ConfuserPose> confusers;
  std::vector<MaskRect> masks;

  SyntheticWorld build(const TileGrid& grid) const;
  bool operator==(const WorldSpec&) const = default;
};

struct ExperimentConfig {
  GridSpec grid;
  WorldSpec world;
  TrajectorySpec trajectory;

  std::size_t particle_count = 30000;
  // Initial belief: Gaussian centered at (true start + offset).
  double init_offset_x = 0.0;
  double init_offset_y = 0.0;
  double init_sigma = 900.0;

  double odometry_noise_frac = 0.02;
  double heading_noise_frac = 0.01;

  MeasurementModel measurement;
  ResampleStrategy strategy = ResampleStrategy::systematic;
  double ess_threshold_frac = 0.98;
  AblationMode ablation = AblationMode::pose_aware;

  std::uint64_t seed = 0;
  double convergence_radius = 60.0;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

struct StepMetrics {
  std::size_t step = 0;
  double error_m = 0.0;
  double ess = 0.0;
  bool resampled = false;
  double rms_dispersion_m = 0.0;
  double std_x_m = 0.0;
  double std_y_m = 0.0;
  bool operator==(const StepMetrics&) const = default;
};

using MetricsLog = std::vector<StepMetrics>;

struct RunOptions {
  // Invoked after each step's estimate with the post-resample particle set;
  // used for particle dumps and estimate cross-checks.
  std::function<void(std::size_t step, const ParticleSet& set, const Estimate& est,
                     const WorldPose& truth)>
      step_observer;
};

// Runs the full pipeline over the configured trajectory: step 0 observes the
// start pose with no propagation; each later step propagates by one measured
// odometry step, observes, reweights, resamples when gated, and estimates.
// Bitwise deterministic for a fixed config.
MetricsLog run_experiment(const ExperimentConfig& config, const RunOptions& options);
MetricsLog run_experiment(const ExperimentConfig& config);

}  // namespace geopf
