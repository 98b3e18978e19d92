#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geopf/sim.hpp"

namespace geopf {

struct RunSummary {
  std::string label;
  std::uint64_t seed = 0;
  std::size_t step_count = 0;
  double final_error = 0.0;
  double average_error = 0.0;
  double final_std = 0.0;  // rms dispersion at the last step
  // First step whose rms dispersion is under the convergence radius and stays
  // under it for the rest of the run; absent when the run never settles.
  std::optional<std::size_t> convergence_step;
  std::size_t resample_count = 0;
};

RunSummary summarize(const MetricsLog& log, double convergence_radius,
                     std::string label = std::string(), std::uint64_t seed = 0);

// One experiment arm evaluated over a shared seed list; entries are
// seed-aligned across arms passed to compare().
struct ArmSummaries {
  std::string label;
  std::vector<RunSummary> per_seed;
};

// Quartiles with linear interpolation between order statistics.
struct MetricAggregate {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

struct ArmAggregate {
  std::string label;
  MetricAggregate final_error;
  MetricAggregate average_error;
  std::size_t converged_count = 0;
  std::size_t seed_count = 0;
  // Over converged seeds only; meaningless when converged_count == 0.
  MetricAggregate convergence_step;
  double mean_resample_count = 0.0;
};

// Seed-matched win rate of arm_a over arm_b per metric, ties split evenly.
// Lower is better for errors; for convergence, converging beats not
// converging and earlier beats later.
struct PairwiseWinRate {
  std::string arm_a;
  std::string arm_b;
  double final_error = 0.5;
  double average_error = 0.5;
  double convergence = 0.5;
};

struct Comparison {
  std::vector<ArmAggregate> arms;
  std::vector<PairwiseWinRate> pairs;
};

Comparison compare(const std::vector<ArmSummaries>& arms);

// Fixed-width text table of a comparison; absent convergence renders as "-".
std::string render_comparison(const Comparison& comparison);

}  // namespace geopf
