#include "geopf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace geopf {

RunSummary summarize(const MetricsLog& log, double convergence_radius, std::string label,
                     std::uint64_t seed) {
  if (log.empty()) throw std::invalid_argument("cannot summarize an empty metrics log");
  if (!(std::isfinite(convergence_radius) && convergence_radius > 0.0)) {
    throw std::invalid_argument("convergence radius must be finite and positive");
  }

  RunSummary s;
  s.label = std::move(label);
  s.seed = seed;
  s.step_count = log.size();
  s.final_error = log.back().error_m;
  s.final_std = log.back().rms_dispersion_m;

  double error_sum = 0.0;
  for (const StepMetrics& m : log) {
    error_sum += m.error_m;
    if (m.resampled) ++s.resample_count;
  }
  s.average_error = error_sum / static_cast<double>(log.size());

  // Walk backwards to the last step still at or above the radius; converged
  // means everything after it stays below.
  std::size_t first_settled = 0;
  for (std::size_t i = log.size(); i-- > 0;) {
    if (log[i].rms_dispersion_m >= convergence_radius) {
      first_settled = i + 1;
      break;
    }
  }
  if (first_settled < log.size()) s.convergence_step = first_settled;
  return s;
}

namespace {

MetricAggregate aggregate(std::vector<double> values) {
  MetricAggregate agg;
  if (values.empty()) return agg;
  std::sort(values.begin(), values.end());
  const auto quantile = [&values](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  agg.q1 = quantile(0.25);
  agg.median = quantile(0.5);
  agg.q3 = quantile(0.75);
  return agg;
}

// -1 when a is better, +1 when b is better, 0 for a tie.
int compare_convergence(const std::optional<std::size_t>& a,
                        const std::optional<std::size_t>& b) {
  if (a.has_value() != b.has_value()) return a.has_value() ? -1 : 1;
  if (!a.has_value()) return 0;
  if (*a == *b) return 0;
  return *a < *b ? -1 : 1;
}

int compare_lower_better(double a, double b) {
  if (a == b) return 0;
  return a < b ? -1 : 1;
}

double win_rate(std::size_t wins_a, std::size_t ties, std::size_t n) {
  return (static_cast<double>(wins_a) + 0.5 * static_cast<double>(ties)) /
         static_cast<double>(n);
}

}  // namespace

Comparison compare(const std::vector<ArmSummaries>& arms) {
  if (arms.empty()) throw std::invalid_argument("compare needs at least one arm");
  const std::size_t n = arms.front().per_seed.size();
  if (n == 0) throw std::invalid_argument("compare needs at least one seed per arm");
  for (const ArmSummaries& arm : arms) {
    if (arm.per_seed.size() != n) {
      throw std::invalid_argument("arm '" + arm.label + "' has " +
                                  std::to_string(arm.per_seed.size()) + " runs, expected " +
                                  std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (arm.per_seed[i].seed != arms.front().per_seed[i].seed) {
        throw std::invalid_argument("arm '" + arm.label +
                                    "' is not seed-matched with arm '" +
                                    arms.front().label + "' at position " + std::to_string(i));
      }
    }
  }

  Comparison out;
  for (const ArmSummaries& arm : arms) {
    ArmAggregate agg;
    agg.label = arm.label;
    agg.seed_count = n;
    std::vector<double> finals, averages, conv_steps;
    double resamples = 0.0;
    for (const RunSummary& s : arm.per_seed) {
      finals.push_back(s.final_error);
      averages.push_back(s.average_error);
      resamples += static_cast<double>(s.resample_count);
      if (s.convergence_step) conv_steps.push_back(static_cast<double>(*s.convergence_step));
    }
    agg.final_error = aggregate(std::move(finals));
    agg.average_error = aggregate(std::move(averages));
    agg.converged_count = conv_steps.size();
    agg.convergence_step = aggregate(std::move(conv_steps));
    agg.mean_resample_count = resamples / static_cast<double>(n);
    out.arms.push_back(std::move(agg));
  }

  for (std::size_t a = 0; a < arms.size(); ++a) {
    for (std::size_t b = a + 1; b < arms.size(); ++b) {
      PairwiseWinRate rate;
      rate.arm_a = arms[a].label;
      rate.arm_b = arms[b].label;
      std::size_t fe_wins = 0, fe_ties = 0;
      std::size_t ae_wins = 0, ae_ties = 0;
      std::size_t cv_wins = 0, cv_ties = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const RunSummary& sa = arms[a].per_seed[i];
        const RunSummary& sb = arms[b].per_seed[i];
        const int fe = compare_lower_better(sa.final_error, sb.final_error);
        const int ae = compare_lower_better(sa.average_error, sb.average_error);
        const int cv = compare_convergence(sa.convergence_step, sb.convergence_step);
        fe_wins += fe < 0;
        fe_ties += fe == 0;
        ae_wins += ae < 0;
        ae_ties += ae == 0;
        cv_wins += cv < 0;
        cv_ties += cv == 0;
      }
      rate.final_error = win_rate(fe_wins, fe_ties, n);
      rate.average_error = win_rate(ae_wins, ae_ties, n);
      rate.convergence = win_rate(cv_wins, cv_ties, n);
      out.pairs.push_back(std::move(rate));
    }
  }
  return out;
}

std::string render_comparison(const Comparison& comparison) {
  std::ostringstream os;
  char buf[160];
  os << "arm                      final_err_med (q1..q3)    avg_err_med     converged   conv_step_med  resamples\n";
  for (const ArmAggregate& a : comparison.arms) {
    std::snprintf(buf, sizeof(buf), "%-24s %9.2f (%8.2f..%8.2f) %12.2f %7zu/%-4zu",
                  a.label.c_str(), a.final_error.median, a.final_error.q1, a.final_error.q3,
                  a.average_error.median, a.converged_count, a.seed_count);
    os << buf;
    if (a.converged_count > 0) {
      std::snprintf(buf, sizeof(buf), " %13.1f", a.convergence_step.median);
      os << buf;
    } else {
      os << "             -";
    }
    std::snprintf(buf, sizeof(buf), " %10.1f\n", a.mean_resample_count);
    os << buf;
  }
  if (!comparison.pairs.empty()) {
    os << "\nwin rates (first arm vs second; ties split)\n";
    for (const PairwiseWinRate& p : comparison.pairs) {
      std::snprintf(buf, sizeof(buf), "%-24s vs %-24s final %.2f  avg %.2f  convergence %.2f\n",
                    p.arm_a.c_str(), p.arm_b.c_str(), p.final_error, p.average_error,
                    p.convergence);
      os << buf;
    }
  }
  return os.str();
}

}  // namespace geopf
