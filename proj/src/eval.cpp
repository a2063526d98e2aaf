#include "drs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "drs/linalg.hpp"

namespace drs {

void SyntheticSpec::validate() const {
  if (n_trial_types < 1 || n_processes < 1) throw std::invalid_argument("need at least one type and process");
  if (trials_per_type < 0) throw std::invalid_argument("trials_per_type must be >= 0");
  if (!(t_end > t_start)) throw std::invalid_argument("empty synthetic domain");
  if (!(lengthscale > 0.0)) throw std::invalid_argument("GP lengthscale must be positive");
  if (!(variance >= 0.0)) throw std::invalid_argument("GP variance must be nonnegative");
  if (!std::isfinite(mean_log_rate)) throw std::invalid_argument("mean log-rate must be finite");
  if (grid_points < 2) throw std::invalid_argument("need at least two grid points");
}

GridIntensity::GridIntensity(std::vector<double> grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  const std::size_t n = grid_.size();
  if (n < 2 || values_.size() != n) throw std::invalid_argument("grid intensity needs >= 2 matching samples");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(grid_[i + 1] > grid_[i])) throw std::invalid_argument("grid must be strictly increasing");
  for (double v : values_)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("intensity samples must be finite and >= 0");

  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = grid_[i + 1] - grid_[i];
    delta[i] = (values_[i + 1] - values_[i]) / h[i];
  }
  slopes_.assign(n, 0.0);
  if (n == 2) {
    slopes_[0] = slopes_[1] = delta[0];
    return;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) continue;
    const double w1 = 2.0 * h[k] + h[k - 1];
    const double w2 = h[k] + 2.0 * h[k - 1];
    slopes_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) return 0.0;
    if (d0 * d1 < 0.0 && std::abs(d) > 3.0 * std::abs(d0)) d = 3.0 * d0;
    return d;
  };
  slopes_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  slopes_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

std::size_t GridIntensity::segment(double t) const {
  if (!(t >= grid_.front() && t <= grid_.back())) throw std::out_of_range("time outside the intensity grid");
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  const auto i = static_cast<std::size_t>(it - grid_.begin());
  return std::min(i, grid_.size() - 1) - 1;
}

double GridIntensity::operator()(double t) const {
  const std::size_t i = segment(t);
  const double h = grid_[i + 1] - grid_[i];
  const double s = (t - grid_[i]) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * values_[i] + (s3 - 2 * s2 + s) * h * slopes_[i] +
         (-2 * s3 + 3 * s2) * values_[i + 1] + (s3 - s2) * h * slopes_[i + 1];
}

double GridIntensity::cumulative(double t) const {
  const std::size_t seg = segment(t);
  auto piece = [this](std::size_t i, double s) {
    const double h = grid_[i + 1] - grid_[i];
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
    return h * ((s4 / 2 - s3 + s) * values_[i] + (s4 / 4 - 2 * s3 / 3 + s2 / 2) * h * slopes_[i] +
                (-s4 / 2 + s3) * values_[i + 1] + (s4 / 4 - s3 / 3) * h * slopes_[i + 1]);
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < seg; ++i) acc += piece(i, 1.0);
  return acc + piece(seg, (t - grid_[seg]) / (grid_[seg + 1] - grid_[seg]));
}

double GridIntensity::segment_max(std::size_t i) const { return std::max(values_.at(i), values_.at(i + 1)); }

std::vector<double> sample_gp(std::span<const double> grid, double lengthscale, double variance,
                              double mean, Rng& rng) {
  const std::size_t n = grid.size();
  std::vector<double> out(n, mean);
  if (variance == 0.0) return out;
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = (grid[i] - grid[j]) / lengthscale;
      k[i * n + j] = variance * std::exp(-0.5 * d * d);
    }
  std::vector<double> chol;
  double jitter = 1e-10 * variance;
  constexpr int kMaxRetries = 10;
  for (int attempt = 0;; ++attempt) {
    auto kj = k;
    for (std::size_t i = 0; i < n; ++i) kj[i * n + i] += jitter;
    try {
      chol = cholesky(kj, n);
      break;
    } catch (const NumericalError&) {
      if (attempt == kMaxRetries) throw NumericalError("GP covariance not factorizable even with jitter");
      jitter *= 10.0;
    }
  }
  std::vector<double> eps(n);
  for (auto& e : eps) e = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= i; ++j) acc += chol[i * n + j] * eps[j];
    out[i] += acc;
  }
  return out;
}

EventSeq simulate(const GridIntensity& g, Rng& rng) {
  const auto& grid = g.grid();
  std::vector<double> bounds(grid.size() - 1);
  for (std::size_t i = 0; i < bounds.size(); ++i) bounds[i] = g.segment_max(i);
  return simulate_thinning(grid, bounds, [&g](double t) { return g(t); }, rng);
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  const Rng truth_rng = root.split(0);
  const Rng trial_rng = root.split(1);
  std::vector<double> grid(static_cast<std::size_t>(spec.grid_points));
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = spec.t_start + (spec.t_end - spec.t_start) * static_cast<double>(i) /
                                 static_cast<double>(grid.size() - 1);
  SyntheticData out;
  out.data = TrialSet{spec.t_start, spec.t_end, spec.n_processes, {}};
  for (int c = 0; c < spec.n_trial_types; ++c) {
    std::vector<GridIntensity> per_process;
    for (int n = 0; n < spec.n_processes; ++n) {
      Rng rng = truth_rng.split(static_cast<std::uint64_t>(c * spec.n_processes + n));
      auto logs = sample_gp(grid, spec.lengthscale, spec.variance, spec.mean_log_rate, rng);
      for (auto& v : logs) v = std::exp(v);
      per_process.emplace_back(grid, std::move(logs));
    }
    out.truth.push_back(std::move(per_process));
  }
  std::uint64_t r = 0;
  for (int c = 0; c < spec.n_trial_types; ++c) {
    for (int j = 0; j < spec.trials_per_type; ++j, ++r) {
      const Rng rng = trial_rng.split(r);
      Trial trial{c, {}};
      for (int n = 0; n < spec.n_processes; ++n) {
        Rng prng = rng.split(static_cast<std::uint64_t>(n));
        auto ev = simulate(out.truth[static_cast<std::size_t>(c)][static_cast<std::size_t>(n)], prng);
        // the interpolant covers the closed grid range; the data window is half-open
        while (!ev.empty() && ev.back() >= spec.t_end) ev.pop_back();
        trial.processes.push_back(std::move(ev));
      }
      out.data.trials.push_back(std::move(trial));
    }
  }
  return out;
}

double l2_distance(const Curve& f, const Curve& g, double t_start, double t_end, int points) {
  if (points < 2) throw std::invalid_argument("trapezoid rule needs at least two points");
  const double h = (t_end - t_start) / (points - 1);
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    const double t = i == points - 1 ? t_end : t_start + h * i;
    const double d = f(t) - g(t);
    acc += (i == 0 || i == points - 1 ? 0.5 : 1.0) * d * d;
  }
  return std::sqrt(acc * h);
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("latents of different dimension");
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(s);
}

}  // namespace

double knn_accuracy(const std::vector<std::vector<double>>& train, std::span<const int> train_labels,
                    const std::vector<std::vector<double>>& test, std::span<const int> test_labels,
                    int k) {
  if (train.size() != train_labels.size() || test.size() != test_labels.size())
    throw std::invalid_argument("latents and labels differ in length");
  if (k < 1 || train.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("need at least k training points");
  if (test.empty()) throw std::invalid_argument("no test points");
  std::size_t correct = 0;
  std::vector<std::pair<double, std::size_t>> d(train.size());
  for (std::size_t q = 0; q < test.size(); ++q) {
    for (std::size_t i = 0; i < train.size(); ++i) d[i] = {distance(test[q], train[i]), i};
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    std::map<int, std::pair<int, double>> votes;  // label -> (count, summed distance)
    for (int j = 0; j < k; ++j) {
      auto& v = votes[train_labels[d[static_cast<std::size_t>(j)].second]];
      ++v.first;
      v.second += d[static_cast<std::size_t>(j)].first;
    }
    int best = 0;
    std::pair<int, double> best_vote{-1, 0.0};
    for (const auto& [label, vote] : votes) {
      if (vote.first > best_vote.first ||
          (vote.first == best_vote.first && vote.second < best_vote.second)) {
        best = label;
        best_vote = vote;
      }
    }
    if (best == test_labels[q]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

double anova_ratio(const std::vector<std::vector<double>>& latents, std::span<const int> labels) {
  if (latents.size() != labels.size()) throw std::invalid_argument("latents and labels differ in length");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) throw std::invalid_argument("ANOVA needs at least two groups");
  const std::size_t dim = latents.front().size();
  double ssg = 0.0, sst = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    double mean = 0.0;
    for (const auto& z : latents) mean += z[d];
    mean /= static_cast<double>(latents.size());
    for (const auto& z : latents) sst += (z[d] - mean) * (z[d] - mean);
    for (const auto& [label, idx] : groups) {
      double gm = 0.0;
      for (auto i : idx) gm += latents[i][d];
      gm /= static_cast<double>(idx.size());
      ssg += static_cast<double>(idx.size()) * (gm - mean) * (gm - mean);
    }
  }
  if (!(sst > 0.0)) throw std::invalid_argument("zero total variance");
  return std::clamp(ssg / sst, 0.0, 1.0);
}

std::vector<std::pair<double, double>> qq_points(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("QQ plot of an empty sample");
  std::vector<double> u(z.size());
  std::transform(z.begin(), z.end(), u.begin(), [](double v) { return -std::expm1(-v); });
  std::sort(u.begin(), u.end());
  std::vector<std::pair<double, double>> out(u.size());
  const double n = static_cast<double>(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = {(static_cast<double>(i) + 0.5) / n, u[i]};
  return out;
}

std::vector<double> histogram_rates(std::span<const double> events, double t_start, double t_end,
                                    int bins) {
  if (bins < 1) throw std::invalid_argument("need at least one bin");
  const double width = (t_end - t_start) / bins;
  std::vector<double> rates(static_cast<std::size_t>(bins), 0.0);
  for (double x : events) {
    auto b = static_cast<std::size_t>(std::floor((x - t_start) / width));
    rates[std::min(b, rates.size() - 1)] += 1.0;
  }
  for (auto& r : rates) r /= width;
  return rates;
}

Curve histogram_curve(std::vector<double> rates, double t_start, double t_end) {
  const double width = (t_end - t_start) / static_cast<double>(rates.size());
  return [rates = std::move(rates), t_start, width](double t) {
    auto b = static_cast<std::size_t>(std::max(0.0, std::floor((t - t_start) / width)));
    return rates[std::min(b, rates.size() - 1)];
  };
}

Curve curve_of(const PiecewisePoly& g) {
  return [&g](double t) { return eval_closed(g, t); };
}

Curve curve_of(const GridIntensity& g) {
  return [&g](double t) { return g(t); };
}

EvalReport evaluate_model(const ModelState& state, const TrialSet& data,
                          std::span<const std::size_t> train_idx,
                          std::span<const std::size_t> test_idx, const TrainConfig& tcfg,
                          const EvalOptions& opt,
                          const std::vector<std::vector<GridIntensity>>* truth) {
  if (train_idx.size() != state.variational.trials())
    throw std::invalid_argument("checkpoint does not match the training split");
  if (data.n_processes != state.decoder.n_processes || data.t_start != state.spline.t_start() ||
      data.t_end != state.spline.t_end())
    throw std::invalid_argument("checkpoint does not match the dataset (processes or domain)");
  const TrialSet test = data.subset(test_idx);
  EvalReport rep;
  if (test.trials.empty()) throw std::invalid_argument("evaluation needs at least one test trial");

  TrainConfig fit_cfg = tcfg;
  fit_cfg.cycles = opt.reporting_cycles;
  auto fit = fit_variational(state, test, fit_cfg, opt.variational_epochs);
  rep.variational_log = fit.log;
  rep.test_means = fit.params.means;

  const Decoder dec(state.spline, state.decoder);
  const ElboOptions eopt{opt.reporting_cycles, tcfg.cycle, tcfg.threads, false};
  std::vector<std::size_t> all(test.trials.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  rep.elbo_per_trial.assign(all.size(), 0.0);
  const Rng elbo_rng = Rng(tcfg.seed).split(4);
  for (int s = 0; s < opt.elbo_samples; ++s) {
    Rng rng = elbo_rng.split(static_cast<std::uint64_t>(s));
    const auto res = elbo_batch(dec, state.theta, fit.params, test, all, rng, eopt);
    for (std::size_t r = 0; r < all.size(); ++r)
      rep.elbo_per_trial[r] += res.per_trial[r] / opt.elbo_samples;
  }
  rep.elbo_mean = std::accumulate(rep.elbo_per_trial.begin(), rep.elbo_per_trial.end(), 0.0) /
                  static_cast<double>(rep.elbo_per_trial.size());

  std::vector<std::vector<PiecewisePoly>> curves;
  for (const auto& mu : fit.params.means)
    curves.push_back(dec.intensities(state.theta, mu, opt.reporting_cycles, tcfg.cycle));

  std::vector<double> z;
  for (std::size_t r = 0; r < test.trials.size(); ++r)
    for (std::size_t n = 0; n < curves[r].size(); ++n) {
      const auto zr = time_rescale(test.trials[r].processes[n], curves[r][n]);
      z.insert(z.end(), zr.begin(), zr.end());
    }
  if (!z.empty()) {
    rep.ks = ks_statistic(z);
    rep.ks_critical = ks_critical_value(z.size());
    rep.ks_intervals = z.size();
    rep.qq = qq_points(z);
  } else {
    spdlog::warn("no events in the test trials: KS and QQ are not defined");
  }

  const bool labelled = std::all_of(data.trials.begin(), data.trials.end(),
                                    [](const Trial& t) { return t.label.has_value(); });
  if (labelled) {
    std::vector<std::vector<double>> train_means;
    std::vector<int> train_labels, test_labels;
    for (std::size_t j = 0; j < train_idx.size(); ++j) {
      train_means.push_back(state.variational.means[j]);
      train_labels.push_back(*data.trials[train_idx[j]].label);
    }
    for (auto i : test_idx) test_labels.push_back(*data.trials[i].label);
    if (train_means.size() >= 15 && state.decoder.latent_dim > 0)
      rep.knn15 = knn_accuracy(train_means, train_labels, rep.test_means, test_labels, 15);
    std::vector<int> distinct(test_labels);
    std::sort(distinct.begin(), distinct.end());
    if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() >= 2 &&
        state.decoder.latent_dim > 0) {
      try {
        rep.ssg_sst = anova_ratio(rep.test_means, test_labels);
      } catch (const std::invalid_argument& e) {
        spdlog::warn("SSG/SST undefined: {}", e.what());
      }
    }
  }

  if (truth) {
    if (!labelled) throw std::invalid_argument("L2 against the truth needs labelled trials");
    std::vector<double> l2;
    for (std::size_t r = 0; r < test.trials.size(); ++r) {
      const auto label = static_cast<std::size_t>(*test.trials[r].label);
      if (label >= truth->size()) throw std::invalid_argument("trial label has no true intensity");
      for (std::size_t n = 0; n < curves[r].size(); ++n)
        l2.push_back(l2_distance(curve_of(curves[r][n]), curve_of((*truth)[label].at(n)),
                                 data.t_start, data.t_end));
    }
    const double mean = std::accumulate(l2.begin(), l2.end(), 0.0) / static_cast<double>(l2.size());
    double var = 0.0;
    for (double v : l2) var += (v - mean) * (v - mean);
    rep.l2_mean = mean;
    rep.l2_std = l2.size() > 1 ? std::sqrt(var / static_cast<double>(l2.size() - 1)) : 0.0;

    double best = std::numeric_limits<double>::infinity();
    for (int bins = 1; bins <= opt.max_baseline_bins; ++bins) {
      double acc = 0.0;
      for (const auto& trial : test.trials) {
        const auto label = static_cast<std::size_t>(*trial.label);
        for (std::size_t n = 0; n < trial.processes.size(); ++n)
          acc += l2_distance(
              histogram_curve(histogram_rates(trial.processes[n], data.t_start, data.t_end, bins),
                              data.t_start, data.t_end),
              curve_of((*truth)[label][n]), data.t_start, data.t_end);
      }
      acc /= static_cast<double>(l2.size());
      if (acc < best) {
        best = acc;
        rep.baseline_bins = bins;
      }
    }
    rep.baseline_l2_mean = best;
  }
  return rep;
}

}  // namespace drs
