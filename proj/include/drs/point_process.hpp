#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "drs/rng.hpp"
#include "drs/spline.hpp"

namespace drs {

/// Intensities below this are floored inside the log of the likelihood.
inline constexpr double kIntensityFloor = 1e-12;

/// Sorted event times of one point process.
using EventSeq = std::vector<double>;

struct Trial {
  std::optional<int> label;
  std::vector<EventSeq> processes;

  bool operator==(const Trial&) const = default;
};

/// R trials of N simultaneously observed processes on [t_start, t_end).
struct TrialSet {
  double t_start = 0.0;
  double t_end = 1.0;
  int n_processes = 0;
  std::vector<Trial> trials;

  /// Throws std::invalid_argument on unsorted/out-of-domain events or ragged trials.
  void validate() const;
  TrialSet subset(std::span<const std::size_t> indices) const;
  std::size_t event_count() const;

  bool operator==(const TrialSet&) const = default;
};

/// Throws std::invalid_argument unless strictly increasing and inside [t_start, t_end).
void validate_events(std::span<const double> events, double t_start, double t_end);

/// sum_k log max(g(x_k), floor) - integral of g over the domain.
double log_likelihood(std::span<const double> events, const PiecewisePoly& g);

/// Thinning sampler over pieces [breaks[i], breaks[i+1]) with constant
/// dominating rates bounds[i] >= intensity on that piece.
EventSeq simulate_thinning(std::span<const double> breaks, std::span<const double> bounds,
                           const std::function<double(double)>& intensity, Rng& rng);

/// Samples PP(g), using the per-piece upper bound of g as dominating rate.
EventSeq simulate(const PiecewisePoly& g, Rng& rng);

/// z_k = Lambda(x_k) - Lambda(x_{k-1}) with x_0 = t_start.
std::vector<double> time_rescale(std::span<const double> events, const PiecewisePoly& g);
std::vector<double> time_rescale(std::span<const double> events,
                                 const std::function<double(double)>& cumulative);

/// Sup distance between the empirical CDF of 1 - exp(-z) and Uniform(0, 1).
double ks_statistic(std::span<const double> z);

/// Asymptotic one-sample Kolmogorov critical value with Stephens' finite-n correction.
double ks_critical_value(std::size_t n, double alpha = 0.05);

}  // namespace drs
