#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "drs/autodiff.hpp"
#include "drs/constraints.hpp"
#include "drs/point_process.hpp"
#include "drs/rng.hpp"
#include "drs/spline.hpp"

namespace drs {

/// Decoder MLP: latent z -> tanh trunk -> one affine head per process. The
/// head emits dense per-interval matrices S1, S2 in local time, scaled by the
/// process rate. These are symmetrized, projected onto the feasible set in
/// those local coordinates, and mapped to global-time Q1, Q2.
struct DecoderConfig {
  int latent_dim = 2;  // 0 gives a decoder that ignores the latent entirely
  std::vector<int> hidden{64, 64};
  int n_processes = 1;
  bool share_trunk = true;
  /// Per-process intensity unit of the head outputs; empty means 1 for every process.
  std::vector<double> output_rates;

  void validate() const;
  bool operator==(const DecoderConfig&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double variational_learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 50;
  int epochs = 100;
  int cycles = 30;
  CycleKind cycle = CycleKind::stacked;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Start the head biases at the constant spline of the empirical mean rate.
  bool init_bias_from_data = true;

  void validate() const;
};

struct LayerShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

/// Per-trial Gaussian q(z_r) = N(means[r], diag(exp(2 log_stds[r]))).
struct VariationalParams {
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> log_stds;

  static VariationalParams prior(std::size_t trials, int latent_dim);
  std::size_t trials() const { return means.size(); }
  bool operator==(const VariationalParams&) const = default;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit AdamMoments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  bool operator==(const AdamMoments&) const = default;
};

/// 1/2 sum_d (mu_d^2 + sigma_d^2 - 1 - 2 log sigma_d).
double kl_diag_gaussian(std::span<const double> mu, std::span<const double> log_std);

/// One Adam step on `params` (gradient of the quantity being minimized).
void adam_step(std::span<double> params, std::span<const double> grad, AdamMoments& moments,
               double lr, double beta1, double beta2, double epsilon);

class Decoder {
 public:
  Decoder(SplineConfig spline, DecoderConfig cfg);

  const SplineConfig& spline() const { return spline_; }
  const DecoderConfig& config() const { return cfg_; }
  const PsdShape& shape() const { return shape_; }
  /// Projections for process n, taken in its local coordinates.
  const Projector& projector(int process) const {
    return projectors_[static_cast<std::size_t>(process)];
  }
  const BlockCoordinates& coordinates(int process) const {
    return coords_[static_cast<std::size_t>(process)];
  }
  const CoefficientMap& coefficient_map() const { return coeff_map_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t parameter_count() const { return n_params_; }
  /// Dense outputs per process: I (n1^2 + n2^2).
  std::size_t head_outputs() const;
  /// Head n writes each interval's matrices in local time, in units of output_rates[n].
  std::span<const ad::OutputFrame> frames(int process) const {
    return frames_[static_cast<std::size_t>(process)];
  }

  /// Fan-in uniform weights; head biases set to the constant spline `rates[n]`
  /// (zero biases when rates is empty).
  std::vector<double> initialize(Rng& rng, std::span<const double> rates) const;

  /// Dense head output of process n that decodes to the constant spline `value`.
  std::vector<double> constant_output(int process, double value) const;

  /// One leaf per weight matrix and bias vector, in layer order.
  std::vector<ad::Var> bind(ad::Tape& t, std::span<const double> theta, bool requires_grad) const;
  void gather_grad(const ad::Tape& t, std::span<const ad::Var> bound, std::span<double> out) const;

  /// Projected svec parameters for every process.
  std::vector<ad::Var> forward(ad::Tape& t, std::span<const ad::Var> bound, ad::Var z, int cycles,
                               CycleKind kind) const;

  /// Symmetrized head outputs before projection, in each process's local coordinates.
  std::vector<std::vector<double>> local_outputs(std::span<const double> theta,
                                                 std::span<const double> z) const;

  std::vector<PsdPairParams> decode(std::span<const double> theta, std::span<const double> z,
                                    int cycles, CycleKind kind = CycleKind::stacked) const;
  std::vector<PiecewisePoly> intensities(std::span<const double> theta, std::span<const double> z,
                                         int cycles, CycleKind kind = CycleKind::stacked) const;

 private:
  std::vector<ad::Var> heads(ad::Tape& t, std::span<const ad::Var> bound, ad::Var z) const;

  SplineConfig spline_;
  DecoderConfig cfg_;
  PsdShape shape_;
  CoefficientMap coeff_map_;
  std::vector<std::vector<ad::OutputFrame>> frames_;
  std::vector<BlockCoordinates> coords_;
  std::vector<Projector> projectors_;
  std::vector<LayerShape> layers_;
  std::size_t n_params_ = 0;
};

struct ModelState {
  SplineConfig spline;
  DecoderConfig decoder;
  std::vector<double> theta;
  VariationalParams variational;
  AdamMoments theta_opt;
  std::vector<AdamMoments> variational_opt;  // per trial, means then log-stds
  int epochs_done = 0;
  std::vector<double> train_log;  // mean ELBO per trial, per epoch

  bool operator==(const ModelState&) const = default;
};

/// Fresh state for `data`: prior variational parameters, initialized decoder.
ModelState init_state(const TrialSet& data, const SplineConfig& spline, const DecoderConfig& dcfg,
                      const TrainConfig& tcfg);

struct ElboOptions {
  int cycles = 30;
  CycleKind kind = CycleKind::stacked;
  int threads = 1;
  bool theta_grad = true;
};

struct ElboBatch {
  double value = 0.0;                 // sum over the batch
  std::vector<double> per_trial;      // in batch order
  std::vector<double> grad_theta;     // d value / d theta (empty without theta_grad)
  std::vector<std::vector<double>> grad_mean;
  std::vector<std::vector<double>> grad_log_std;
};

/// Single-sample ELBO of the batch with the given reparameterization noise
/// (one vector of latent_dim normals per batch entry), plus its gradients.
ElboBatch elbo_batch(const Decoder& dec, std::span<const double> theta,
                     const VariationalParams& var, const TrialSet& data,
                     std::span<const std::size_t> batch,
                     const std::vector<std::vector<double>>& noise, const ElboOptions& opt);
/// Same, drawing the noise from `rng` in batch order.
ElboBatch elbo_batch(const Decoder& dec, std::span<const double> theta,
                     const VariationalParams& var, const TrialSet& data,
                     std::span<const std::size_t> batch, Rng& rng, const ElboOptions& opt);

/// Raised when the loss or a gradient stops being finite; carries the state
/// from before the failing step.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, ModelState last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const ModelState& last_good() const { return last_good_; }

 private:
  ModelState last_good_;
};

using EpochCallback = std::function<void(const ModelState&)>;

/// Runs Adam epochs until state.epochs_done == tcfg.epochs. The result depends
/// only on the state, data and seed, so a resumed run matches an uninterrupted one.
void train(ModelState& state, const TrialSet& data, const TrainConfig& tcfg,
           const EpochCallback& on_epoch = {});
ModelState train(const TrialSet& data, const SplineConfig& spline, const DecoderConfig& dcfg,
                 const TrainConfig& tcfg);

struct VariationalFit {
  VariationalParams params;
  std::vector<double> log;  // mean ELBO per trial, per epoch
};

/// Fits per-trial variational parameters for new trials with the decoder frozen.
VariationalFit fit_variational(const ModelState& state, const TrialSet& data,
                               const TrainConfig& tcfg, int epochs);

std::vector<std::vector<double>> posterior_means(const ModelState& state);

/// Mean event rate per process over all trials.
std::vector<double> empirical_rates(const TrialSet& data);

}  // namespace drs
