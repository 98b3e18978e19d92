#include "geopf/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace geopf {

void MeasurementModel::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("measurement sigma must be positive and finite");
  }
  if (!(floor > 0.0) || !std::isfinite(floor)) {
    throw std::invalid_argument("measurement floor must be positive and finite");
  }
  if (!std::isfinite(mu)) throw std::invalid_argument("measurement mu must be finite");
}

double MeasurementModel::likelihood(double score) const {
  if (is_no_observation(score)) return floor;
  double z = (score - mu) / sigma;
  return std::max(std::exp(-0.5 * z * z), floor);
}

double no_observation_score() { return std::numeric_limits<double>::quiet_NaN(); }

bool is_no_observation(double score) { return std::isnan(score); }

void normalize(ParticleSet& set) {
  if (set.particles.empty()) throw std::invalid_argument("particle set must be non-empty");
  double sum = 0.0;
  for (const Particle& p : set.particles) {
    if (!(p.weight >= 0.0)) throw std::invalid_argument("particle weights must be >= 0");
    sum += p.weight;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("particle weights sum to zero");
  for (Particle& p : set.particles) p.weight /= sum;
  set.normalized = true;
}

static void require_normalized(const ParticleSet& set) {
  if (!set.normalized || set.particles.empty()) {
    throw std::invalid_argument("operation requires a normalized particle set");
  }
}

ParticleSet init_gaussian(WorldPoint center, double sigma, std::size_t n, RngStream& rng) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("init sigma must be positive and finite");
  }
  if (n == 0) throw std::invalid_argument("particle count must be >= 1");

  ParticleSet set;
  set.particles.resize(n);
  const double w = 1.0 / static_cast<double>(n);
  const std::uint64_t base = rng.next_u64();
  for (std::size_t i = 0; i < n; ++i) {
    RngStream sub = substream(base, i);
    set.particles[i] = {center.x + sigma * sub.next_gaussian(),
                        center.y + sigma * sub.next_gaussian(), w};
  }
  set.normalized = true;
  return set;
}

ParticleSet propagate(const ParticleSet& set, const OdometryStep& odo, double noise_frac,
                      RngStream& rng) {
  if (!(noise_frac >= 0.0)) throw std::invalid_argument("noise_frac must be >= 0");
  if (set.particles.empty()) throw std::invalid_argument("particle set must be non-empty");

  ParticleSet out = set;
  const double step_norm = std::hypot(odo.dx, odo.dy);
  const double noise_std = noise_frac * step_norm;
  if (noise_std > 0.0) {
    const std::uint64_t base = rng.next_u64();
    for (std::size_t i = 0; i < out.particles.size(); ++i) {
      RngStream sub = substream(base, i);
      out.particles[i].x += odo.dx + noise_std * sub.next_gaussian();
      out.particles[i].y += odo.dy + noise_std * sub.next_gaussian();
    }
  } else {
    for (Particle& p : out.particles) {
      p.x += odo.dx;
      p.y += odo.dy;
    }
  }
  return out;
}

ParticleSet reweight(const ParticleSet& set, std::span<const double> scores,
                     const MeasurementModel& model) {
  model.validate();
  if (scores.size() != set.particles.size()) {
    throw std::invalid_argument("score count does not match particle count");
  }
  ParticleSet out = set;
  for (std::size_t i = 0; i < out.particles.size(); ++i) {
    out.particles[i].weight *= model.likelihood(scores[i]);
  }
  normalize(out);
  return out;
}

double ess(const ParticleSet& set) {
  require_normalized(set);
  double sum_sq = 0.0;
  for (const Particle& p : set.particles) sum_sq += p.weight * p.weight;
  double e = 1.0 / sum_sq;
  return std::clamp(e, 1.0, static_cast<double>(set.particles.size()));
}

static std::vector<double> inclusive_cumsum(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("weight vector must be non-empty");
  std::vector<double> cum(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw std::invalid_argument("weights must be >= 0");
    acc += weights[i];
    cum[i] = acc;
  }
  if (std::abs(acc - 1.0) > 1e-9) throw std::invalid_argument("weights must be normalized");
  cum.back() = 1.0;  // guard against rounding at the top end
  return cum;
}

std::vector<std::size_t> multinomial_indices(std::span<const double> weights, std::size_t n,
                                             RngStream& rng) {
  std::vector<double> cum = inclusive_cumsum(weights);
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double u = rng.next_double();
    out[k] = static_cast<std::size_t>(
        std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
  }
  return out;
}

std::vector<std::size_t> systematic_indices(std::span<const double> weights, double u0) {
  const std::size_t n = weights.size();
  if (!(u0 >= 0.0) || !(u0 < 1.0 / static_cast<double>(n))) {
    throw std::invalid_argument("u0 must lie in [0, 1/N)");
  }
  std::vector<double> cum = inclusive_cumsum(weights);
  std::vector<std::size_t> out(n);
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double pos = u0 + static_cast<double>(k) / static_cast<double>(n);
    while (cum[j] <= pos) ++j;
    out[k] = j;
  }
  return out;
}

static ParticleSet rebuild(const ParticleSet& set, const std::vector<std::size_t>& indices) {
  ParticleSet out;
  out.particles.resize(indices.size());
  const double w = 1.0 / static_cast<double>(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.particles[k] = set.particles[indices[k]];
    out.particles[k].weight = w;
  }
  out.normalized = true;
  return out;
}

ParticleSet resample_multinomial(const ParticleSet& set, RngStream& rng) {
  require_normalized(set);
  std::vector<double> w(set.particles.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = set.particles[i].weight;
  return rebuild(set, multinomial_indices(w, w.size(), rng));
}

ParticleSet resample_systematic_at(const ParticleSet& set, double u0) {
  require_normalized(set);
  std::vector<double> w(set.particles.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = set.particles[i].weight;
  return rebuild(set, systematic_indices(w, u0));
}

ParticleSet resample_systematic(const ParticleSet& set, RngStream& rng) {
  require_normalized(set);
  double u0 = rng.next_double() / static_cast<double>(set.particles.size());
  return resample_systematic_at(set, u0);
}

ResampleOutcome maybe_resample(const ParticleSet& set, double threshold_frac,
                               ResampleStrategy strategy, RngStream& rng) {
  if (!(threshold_frac > 0.0) || !(threshold_frac <= 1.0)) {
    throw std::invalid_argument("threshold_frac must lie in (0, 1]");
  }
  require_normalized(set);
  if (strategy == ResampleStrategy::every_step_multinomial) {
    return {resample_multinomial(set, rng), true};
  }
  const double threshold = threshold_frac * static_cast<double>(set.particles.size());
  if (ess(set) < threshold) {
    if (strategy == ResampleStrategy::systematic) {
      return {resample_systematic(set, rng), true};
    }
    return {resample_multinomial(set, rng), true};
  }
  return {set, false};
}

Estimate estimate(const ParticleSet& set) {
  require_normalized(set);
  Estimate est;
  for (const Particle& p : set.particles) {
    est.mean.x += p.weight * p.x;
    est.mean.y += p.weight * p.y;
  }
  double var_x = 0.0, var_y = 0.0;
  for (const Particle& p : set.particles) {
    double dx = p.x - est.mean.x;
    double dy = p.y - est.mean.y;
    var_x += p.weight * dx * dx;
    var_y += p.weight * dy * dy;
  }
  est.std_x = std::sqrt(var_x);
  est.std_y = std::sqrt(var_y);
  est.rms_dispersion = std::sqrt(var_x + var_y);
  return est;
}

}  // namespace geopf
