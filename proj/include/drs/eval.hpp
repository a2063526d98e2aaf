#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "drs/model.hpp"
#include "drs/point_process.hpp"
#include "drs/rng.hpp"

namespace drs {

/// Number of grid points used by every integral metric.
inline constexpr int kMetricGrid = 1000;

struct SyntheticSpec {
  int n_trial_types = 2;
  int n_processes = 2;
  double t_start = 0.0;
  double t_end = 10.0;
  double lengthscale = 2.0;
  double variance = 1.0;
  double mean_log_rate = 0.6931471805599453;  // log 2
  int grid_points = 201;
  int trials_per_type = 600;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Shape-preserving piecewise-cubic Hermite interpolant (PCHIP) of positive
/// samples. Each segment is monotone, so it stays positive and its maximum
/// sits at an endpoint.
class GridIntensity {
 public:
  GridIntensity() = default;
  GridIntensity(std::vector<double> grid, std::vector<double> values);

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double t_start() const { return grid_.front(); }
  double t_end() const { return grid_.back(); }

  /// Defined on the closed grid range; throws std::out_of_range outside it.
  double operator()(double t) const;
  /// Exact integral of the interpolant from t_start to t.
  double cumulative(double t) const;
  /// max over segment i.
  double segment_max(std::size_t i) const;

 private:
  std::size_t segment(double t) const;

  std::vector<double> grid_;
  std::vector<double> values_;
  std::vector<double> slopes_;
};

struct SyntheticData {
  TrialSet data;
  std::vector<std::vector<GridIntensity>> truth;  // [type][process]
};

/// Zero-mean-shifted SE-kernel GP sample on `grid`, with jittered Cholesky.
/// Throws NumericalError after the bounded number of jitter increases.
std::vector<double> sample_gp(std::span<const double> grid, double lengthscale, double variance,
                              double mean, Rng& rng);

EventSeq simulate(const GridIntensity& g, Rng& rng);

/// Trials are ordered by type; trial r of type c uses the stream seed.split(r).
SyntheticData gen_synthetic(const SyntheticSpec& spec);

using Curve = std::function<double(double)>;

/// sqrt of the trapezoid-rule integral of (f - g)^2 on `points` equispaced
/// points including both ends.
double l2_distance(const Curve& f, const Curve& g, double t_start, double t_end,
                   int points = kMetricGrid);

/// Percentage of test points whose k nearest training latents vote for their
/// label. A tied vote goes to the label with the smallest summed distance.
double knn_accuracy(const std::vector<std::vector<double>>& train, std::span<const int> train_labels,
                    const std::vector<std::vector<double>>& test, std::span<const int> test_labels,
                    int k = 15);

/// Between-group over total sum of squares, summed over dimensions.
double anova_ratio(const std::vector<std::vector<double>>& latents, std::span<const int> labels);

/// Sorted (uniform quantile, empirical quantile) pairs of 1 - exp(-z).
std::vector<std::pair<double, double>> qq_points(std::span<const double> z);

/// Piecewise-constant rate of one event sequence over `bins` equal bins.
std::vector<double> histogram_rates(std::span<const double> events, double t_start, double t_end,
                                    int bins);
Curve histogram_curve(std::vector<double> rates, double t_start, double t_end);

Curve curve_of(const PiecewisePoly& g);
Curve curve_of(const GridIntensity& g);

struct EvalReport {
  std::vector<double> elbo_per_trial;  // test trials, in split order
  double elbo_mean = 0.0;
  std::optional<double> knn15;
  std::optional<double> ssg_sst;
  double ks = 0.0;
  double ks_critical = 0.0;
  std::size_t ks_intervals = 0;
  std::optional<double> l2_mean;
  std::optional<double> l2_std;
  std::optional<double> baseline_l2_mean;
  std::optional<int> baseline_bins;
  std::vector<std::pair<double, double>> qq;
  std::vector<std::vector<double>> test_means;
  std::vector<double> variational_log;
};

struct EvalOptions {
  int variational_epochs = 100;
  int elbo_samples = 10;
  int reporting_cycles = 200;
  /// Candidate bin counts for the histogram baseline; the best one against the
  /// truth is reported.
  int max_baseline_bins = 40;
};

/// Fits the test trials' latents with the decoder frozen and computes every
/// metric. `truth` is indexed by trial label, then process.
EvalReport evaluate_model(const ModelState& state, const TrialSet& data,
                          std::span<const std::size_t> train_idx,
                          std::span<const std::size_t> test_idx, const TrainConfig& tcfg,
                          const EvalOptions& opt,
                          const std::vector<std::vector<GridIntensity>>* truth = nullptr);

}  // namespace drs
