#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "geopf/grid.hpp"
#include "geopf/rng.hpp"

namespace geopf {

struct Particle {
  double x = 0.0;
  double y = 0.0;
  double weight = 0.0;
};

// Weighted position hypotheses. Particles carry (x, y) only; heading is a
// shared filter input. N stays constant across every operation.
struct ParticleSet {
  std::vector<Particle> particles;
  bool normalized = false;

  std::size_t size() const { return particles.size(); }
};

// Likelihood of a similarity score s: max(exp(-(s - mu)^2 / (2 sigma^2)), floor).
// The floor keeps the weight vector normalizable when every particle is in a
// dead zone.
struct MeasurementModel {
  double mu = 1.0;
  double sigma = 0.3;
  double floor = 1e-12;

  void validate() const;
  double likelihood(double score) const;
  bool operator==(const MeasurementModel&) const = default;
};

struct OdometryStep {
  double dx = 0.0;    // meters
  double dy = 0.0;    // meters
  double dpsi = 0.0;  // radians
  bool operator==(const OdometryStep&) const = default;
};

// The sentinel score for particles with no observation (out of grid bounds).
// reweight maps it straight to the likelihood floor.
double no_observation_score();
bool is_no_observation(double score);

void normalize(ParticleSet& set);

ParticleSet init_gaussian(WorldPoint center, double sigma, std::size_t n, RngStream& rng);

// Shifts every particle by odo plus per-particle Gaussian noise with std
// noise_frac * |(dx, dy)| per axis. Weights unchanged.
ParticleSet propagate(const ParticleSet& set, const OdometryStep& odo, double noise_frac,
                      RngStream& rng);

ParticleSet reweight(const ParticleSet& set, std::span<const double> scores,
                     const MeasurementModel& model);

// Effective sample size 1 / sum(w^2), clamped to [1, N]. Requires a
// normalized set.
double ess(const ParticleSet& set);

// Index-selection cores, exposed so offspring counts are directly testable.
// Weights must be normalized; the returned indices are in draw order.
std::vector<std::size_t> multinomial_indices(std::span<const double> weights, std::size_t n,
                                             RngStream& rng);
std::vector<std::size_t> systematic_indices(std::span<const double> weights, double u0);

ParticleSet resample_multinomial(const ParticleSet& set, RngStream& rng);
ParticleSet resample_systematic(const ParticleSet& set, RngStream& rng);
// Deterministic variant with an explicit start offset u0 in [0, 1/N).
ParticleSet resample_systematic_at(const ParticleSet& set, double u0);

enum class ResampleStrategy { systematic, multinomial, every_step_multinomial };

struct ResampleOutcome {
  ParticleSet set;
  bool resampled = false;
};

// every_step_multinomial resamples unconditionally; the other strategies
// resample iff ess(set) < threshold_frac * N.
ResampleOutcome maybe_resample(const ParticleSet& set, double threshold_frac,
                               ResampleStrategy strategy, RngStream& rng);

struct Estimate {
  WorldPoint mean;
  double std_x = 0.0;
  double std_y = 0.0;
  double rms_dispersion = 0.0;  // sqrt(sum_i w_i |p_i - mean|^2)
};

Estimate estimate(const ParticleSet& set);

}  // namespace geopf
