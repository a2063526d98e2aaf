#include "drs/point_process.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drs {

void validate_events(std::span<const double> events, double t_start, double t_end) {
  for (std::size_t k = 0; k < events.size(); ++k) {
    const double x = events[k];
    if (!std::isfinite(x) || x < t_start || x >= t_end)
      throw std::invalid_argument("event time outside the observation window");
    if (k > 0 && !(x > events[k - 1]))
      throw std::invalid_argument("event times must be strictly increasing");
  }
}

void TrialSet::validate() const {
  if (!(t_end > t_start)) throw std::invalid_argument("empty observation window");
  if (n_processes < 0) throw std::invalid_argument("negative process count");
  for (const auto& trial : trials) {
    if (static_cast<int>(trial.processes.size()) != n_processes)
      throw std::invalid_argument("trial has the wrong number of processes");
    for (const auto& ev : trial.processes) validate_events(ev, t_start, t_end);
  }
}

TrialSet TrialSet::subset(std::span<const std::size_t> indices) const {
  TrialSet out{t_start, t_end, n_processes, {}};
  out.trials.reserve(indices.size());
  for (auto i : indices) out.trials.push_back(trials.at(i));
  return out;
}

std::size_t TrialSet::event_count() const {
  std::size_t n = 0;
  for (const auto& trial : trials)
    for (const auto& ev : trial.processes) n += ev.size();
  return n;
}

double log_likelihood(std::span<const double> events, const PiecewisePoly& g) {
  validate_events(events, g.t_start(), g.t_end());
  double ll = 0.0;
  for (double x : events) ll += std::log(std::max(eval(g, x), kIntensityFloor));
  return ll - integrate(g, g.t_start(), g.t_end());
}

EventSeq simulate_thinning(std::span<const double> breaks, std::span<const double> bounds,
                           const std::function<double(double)>& intensity, Rng& rng) {
  if (breaks.size() != bounds.size() + 1)
    throw std::invalid_argument("need one bound per piece");
  EventSeq events;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const double rate = bounds[i];
    if (!(rate > 0.0)) continue;
    double t = breaks[i];
    while (true) {
      t += rng.exponential(rate);
      if (t >= breaks[i + 1]) break;
      if (rng.uniform() * rate <= intensity(t)) events.push_back(t);
    }
  }
  return events;
}

EventSeq simulate(const PiecewisePoly& g, Rng& rng) {
  std::vector<double> bounds(static_cast<std::size_t>(g.intervals()));
  for (int i = 0; i < g.intervals(); ++i) bounds[static_cast<std::size_t>(i)] = upper_bound(g, i);
  return simulate_thinning(g.knots, bounds, [&g](double t) { return eval(g, t); }, rng);
}

std::vector<double> time_rescale(std::span<const double> events,
                                 const std::function<double(double)>& cumulative) {
  std::vector<double> z;
  z.reserve(events.size());
  double prev = 0.0;
  for (double x : events) {
    const double cur = cumulative(x);
    z.push_back(cur - prev);
    prev = cur;
  }
  return z;
}

std::vector<double> time_rescale(std::span<const double> events, const PiecewisePoly& g) {
  const auto big = antiderivative(g, 0.0);
  return time_rescale(events, [&big](double t) { return eval_closed(big, t); });
}

double ks_statistic(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("KS statistic of an empty sample");
  std::vector<double> u(z.size());
  std::transform(z.begin(), z.end(), u.begin(), [](double v) { return -std::expm1(-v); });
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max({d, hi - u[i], u[i] - lo});
  }
  return d;
}

double ks_critical_value(std::size_t n, double alpha) {
  if (n == 0) throw std::invalid_argument("KS critical value needs n > 0");
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double rn = std::sqrt(static_cast<double>(n));
  return c / (rn + 0.12 + 0.11 / rn);
}

}  // namespace drs
