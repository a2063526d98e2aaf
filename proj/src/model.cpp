#include "drs/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

namespace drs {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kVariationalStream = 3;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Runs fn(i) for i in [0, n) on up to `threads` workers, each taking a contiguous chunk.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * n / workers; i < (w + 1) * n / workers; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::size_t> permutation(std::size_t n, Rng rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

}  // namespace

void DecoderConfig::validate() const {
  if (latent_dim < 0) throw std::invalid_argument("latent_dim must be >= 0");
  if (n_processes < 1) throw std::invalid_argument("n_processes must be >= 1");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("hidden layer widths must be positive");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(variational_learning_rate > 0.0))
    throw std::invalid_argument("learning rates must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw std::invalid_argument("Adam betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (cycles < 1) throw std::invalid_argument("cycles must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

VariationalParams VariationalParams::prior(std::size_t trials, int latent_dim) {
  const auto m = static_cast<std::size_t>(latent_dim);
  return {std::vector<std::vector<double>>(trials, std::vector<double>(m, 0.0)),
          std::vector<std::vector<double>>(trials, std::vector<double>(m, 0.0))};
}

double kl_diag_gaussian(std::span<const double> mu, std::span<const double> log_std) {
  if (mu.size() != log_std.size()) throw std::invalid_argument("mean and log-std sizes differ");
  double kl = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d)
    kl += 0.5 * (mu[d] * mu[d] + std::exp(2.0 * log_std[d]) - 1.0 - 2.0 * log_std[d]);
  return kl;
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamMoments& mo, double lr,
               double beta1, double beta2, double epsilon) {
  if (params.size() != grad.size() || mo.m.size() != params.size())
    throw std::invalid_argument("adam_step: size mismatch");
  ++mo.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(mo.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(mo.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    mo.m[k] = beta1 * mo.m[k] + (1.0 - beta1) * grad[k];
    mo.v[k] = beta2 * mo.v[k] + (1.0 - beta2) * grad[k] * grad[k];
    params[k] -= lr * (mo.m[k] / c1) / (std::sqrt(mo.v[k] / c2) + epsilon);
  }
}

Decoder::Decoder(SplineConfig spline, DecoderConfig cfg)
    : spline_(std::move(spline)), cfg_(std::move(cfg)), shape_(psd_shape(spline_)), coeff_map_(spline_) {
  cfg_.validate();
  if (spline_.mode != ConstraintMode::nonnegative)
    throw std::invalid_argument("the decoder models intensities: spline mode must be nonnegative");
  if (!cfg_.output_rates.empty() &&
      cfg_.output_rates.size() != static_cast<std::size_t>(cfg_.n_processes))
    throw std::invalid_argument("need one output rate per process");
  const bool odd = shape().degree % 2 == 1;
  for (int n = 0; n < cfg_.n_processes; ++n) {
    const double rate = cfg_.output_rates.empty() ? 1.0 : cfg_.output_rates[static_cast<std::size_t>(n)];
    if (!(rate > 0.0) || !std::isfinite(rate)) throw std::invalid_argument("output rates must be positive");
    std::vector<ad::OutputFrame> frames;
    for (int i = 0; i < spline_.intervals(); ++i) {
      const double lo = spline_.knots[static_cast<std::size_t>(i)];
      const double hi = spline_.knots[static_cast<std::size_t>(i) + 1];
      const double h = hi - lo;
      // the interval weights (t_i - t), (t - t_{i-1}) and their product peak at h, h, h^2/4
      frames.push_back(odd ? ad::OutputFrame{0.5 * (lo + hi), 0.5 * h, rate / h, rate / h}
                           : ad::OutputFrame{0.5 * (lo + hi), 0.5 * h, rate, 4.0 * rate / (h * h)});
    }
    coords_.push_back(ad::frame_coordinates(shape_, frames));
    projectors_.emplace_back(spline_, coords_.back());
    frames_.push_back(std::move(frames));
  }
  std::size_t offset = 0;
  auto add_layer = [&](std::size_t rows, std::size_t cols) {
    layers_.push_back({rows, cols, offset, offset + rows * cols});
    offset += rows * cols + rows;
  };
  const int trunks = cfg_.share_trunk ? 1 : cfg_.n_processes;
  for (int tr = 0; tr < trunks; ++tr) {
    auto in = static_cast<std::size_t>(cfg_.latent_dim);
    for (int h : cfg_.hidden) {
      add_layer(static_cast<std::size_t>(h), in);
      in = static_cast<std::size_t>(h);
    }
  }
  const auto trunk_out =
      cfg_.hidden.empty() ? static_cast<std::size_t>(cfg_.latent_dim)
                          : static_cast<std::size_t>(cfg_.hidden.back());
  for (int n = 0; n < cfg_.n_processes; ++n) add_layer(head_outputs(), trunk_out);
  n_params_ = offset;
}

std::size_t Decoder::head_outputs() const {
  const auto& s = shape();
  return static_cast<std::size_t>(s.intervals * (s.n1 * s.n1 + s.n2 * s.n2));
}

std::vector<double> Decoder::constant_output(int process, double value) const {
  const auto& s = shape();
  const auto psi = to_svec(PsdPairParams::constant(spline_, value));
  std::vector<double> dense(head_outputs(), 0.0);
  std::size_t in = 0, out = 0;
  // the constant spline only uses the (0, 0) entries, which the frame maps to themselves
  for (int i = 0; i < s.intervals; ++i) {
    const auto& f = frames_[static_cast<std::size_t>(process)][static_cast<std::size_t>(i)];
    dense[out] = psi[in] / f.gain1;
    if (s.n2 > 0) dense[out + static_cast<std::size_t>(s.n1 * s.n1)] = psi[in + s.svec1()] / f.gain2;
    in += s.block_size();
    out += static_cast<std::size_t>(s.n1 * s.n1 + s.n2 * s.n2);
  }
  return dense;
}

std::vector<double> Decoder::initialize(Rng& rng, std::span<const double> rates) const {
  if (!rates.empty() && rates.size() != static_cast<std::size_t>(cfg_.n_processes))
    throw std::invalid_argument("need one mean rate per process");
  std::vector<double> theta(n_params_, 0.0);
  for (const auto& layer : layers_) {
    const double a = layer.cols > 0 ? 1.0 / std::sqrt(static_cast<double>(layer.cols)) : 0.0;
    for (std::size_t k = 0; k < layer.rows * layer.cols; ++k)
      theta[layer.weight_offset + k] = a * (2.0 * rng.uniform() - 1.0);
  }
  if (!rates.empty()) {
    const std::size_t first_head = layers_.size() - static_cast<std::size_t>(cfg_.n_processes);
    for (int n = 0; n < cfg_.n_processes; ++n) {
      const auto bias = constant_output(n, rates[static_cast<std::size_t>(n)]);
      const auto& head = layers_[first_head + static_cast<std::size_t>(n)];
      std::copy(bias.begin(), bias.end(), theta.begin() + static_cast<std::ptrdiff_t>(head.bias_offset));
    }
  }
  return theta;
}

std::vector<ad::Var> Decoder::bind(ad::Tape& t, std::span<const double> theta,
                                   bool requires_grad) const {
  if (theta.size() != n_params_) throw std::invalid_argument("decoder parameter size mismatch");
  std::vector<ad::Var> out;
  out.reserve(2 * layers_.size());
  for (const auto& l : layers_) {
    const auto w = theta.subspan(l.weight_offset, l.rows * l.cols);
    const auto b = theta.subspan(l.bias_offset, l.rows);
    out.push_back(t.leaf({w.begin(), w.end()}, requires_grad));
    out.push_back(t.leaf({b.begin(), b.end()}, requires_grad));
  }
  return out;
}

void Decoder::gather_grad(const ad::Tape& t, std::span<const ad::Var> bound,
                          std::span<double> out) const {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    const auto gw = t.grad(bound[2 * k]);
    const auto gb = t.grad(bound[2 * k + 1]);
    for (std::size_t j = 0; j < gw.size(); ++j) out[l.weight_offset + j] += gw[j];
    for (std::size_t j = 0; j < gb.size(); ++j) out[l.bias_offset + j] += gb[j];
  }
}

std::vector<ad::Var> Decoder::heads(ad::Tape& t, std::span<const ad::Var> bound, ad::Var z) const {
  if (t.size(z) != static_cast<std::size_t>(cfg_.latent_dim))
    throw std::invalid_argument("latent has the wrong dimension");
  const std::size_t depth = cfg_.hidden.size();
  std::vector<ad::Var> trunk_out;
  const int trunks = cfg_.share_trunk ? 1 : cfg_.n_processes;
  std::size_t k = 0;
  for (int tr = 0; tr < trunks; ++tr) {
    ad::Var h = z;
    for (std::size_t l = 0; l < depth; ++l, ++k)
      h = ad::tanh(t, ad::affine(t, bound[2 * k], h, bound[2 * k + 1], layers_[k].rows, layers_[k].cols));
    trunk_out.push_back(h);
  }
  std::vector<ad::Var> locals;
  for (int n = 0; n < cfg_.n_processes; ++n, ++k) {
    const ad::Var h = trunk_out[cfg_.share_trunk ? 0 : static_cast<std::size_t>(n)];
    const ad::Var dense =
        ad::affine(t, bound[2 * k], h, bound[2 * k + 1], layers_[k].rows, layers_[k].cols);
    locals.push_back(ad::symmetric_pack(t, dense, shape()));
  }
  return locals;
}

std::vector<ad::Var> Decoder::forward(ad::Tape& t, std::span<const ad::Var> bound, ad::Var z,
                                      int cycles, CycleKind kind) const {
  std::vector<ad::Var> psis;
  const auto locals = heads(t, bound, z);
  for (int n = 0; n < cfg_.n_processes; ++n) {
    const ad::Var feasible =
        ad::alternating_projections(t, locals[static_cast<std::size_t>(n)], projector(n), cycles, kind);
    psis.push_back(ad::block_linear(t, feasible, coordinates(n)));
  }
  return psis;
}

std::vector<std::vector<double>> Decoder::local_outputs(std::span<const double> theta,
                                                        std::span<const double> z) const {
  ad::Tape t;
  const auto bound = bind(t, theta, false);
  const auto zv = t.constant({z.begin(), z.end()});
  std::vector<std::vector<double>> out;
  for (const auto v : heads(t, bound, zv)) out.emplace_back(t.value(v).begin(), t.value(v).end());
  return out;
}

std::vector<PsdPairParams> Decoder::decode(std::span<const double> theta,
                                           std::span<const double> z, int cycles,
                                           CycleKind kind) const {
  ad::Tape t;
  const auto bound = bind(t, theta, false);
  const auto zv = t.constant({z.begin(), z.end()});
  std::vector<PsdPairParams> out;
  for (const auto v : forward(t, bound, zv, cycles, kind)) out.push_back(from_svec(t.value(v), spline_));
  return out;
}

std::vector<PiecewisePoly> Decoder::intensities(std::span<const double> theta,
                                                std::span<const double> z, int cycles,
                                                CycleKind kind) const {
  std::vector<PiecewisePoly> out;
  for (const auto& psi : decode(theta, z, cycles, kind)) out.push_back(to_spline(psi, spline_));
  return out;
}

std::vector<double> empirical_rates(const TrialSet& data) {
  std::vector<double> rates(static_cast<std::size_t>(data.n_processes), 0.0);
  if (data.trials.empty()) return rates;
  for (const auto& trial : data.trials)
    for (std::size_t n = 0; n < trial.processes.size(); ++n)
      rates[n] += static_cast<double>(trial.processes[n].size());
  const double exposure = static_cast<double>(data.trials.size()) * (data.t_end - data.t_start);
  for (auto& r : rates) r /= exposure;
  return rates;
}

ModelState init_state(const TrialSet& data, const SplineConfig& spline, const DecoderConfig& dcfg,
                      const TrainConfig& tcfg) {
  tcfg.validate();
  if (dcfg.n_processes != data.n_processes)
    throw std::invalid_argument("decoder and data disagree on the number of processes");
  if (data.t_start != spline.t_start() || data.t_end != spline.t_end())
    throw std::invalid_argument("data window and spline domain differ");
  ModelState s;
  s.spline = spline;
  s.decoder = dcfg;
  std::vector<double> rates(static_cast<std::size_t>(dcfg.n_processes), 1.0);
  if (tcfg.init_bias_from_data) {
    rates = empirical_rates(data);
    // a zero rate would start the projection layer on the boundary of the cone
    for (auto& r : rates) r = std::max(r, 1e-3);
    s.decoder.output_rates = rates;
  }
  const Decoder dec(spline, s.decoder);
  Rng rng = Rng(tcfg.seed).split(kInitStream);
  s.theta = dec.initialize(rng, rates);
  s.variational = VariationalParams::prior(data.trials.size(), dcfg.latent_dim);
  s.theta_opt = AdamMoments(s.theta.size());
  s.variational_opt.assign(data.trials.size(), AdamMoments(2 * static_cast<std::size_t>(dcfg.latent_dim)));
  return s;
}

ElboBatch elbo_batch(const Decoder& dec, std::span<const double> theta,
                     const VariationalParams& var, const TrialSet& data,
                     std::span<const std::size_t> batch,
                     const std::vector<std::vector<double>>& noise, const ElboOptions& opt) {
  if (noise.size() != batch.size()) throw std::invalid_argument("need one noise vector per trial");
  if (data.n_processes != dec.config().n_processes)
    throw std::invalid_argument("decoder and data disagree on the number of processes");
  const auto m = static_cast<std::size_t>(dec.config().latent_dim);
  const std::size_t nb = batch.size();
  ElboBatch out;
  out.per_trial.assign(nb, 0.0);
  out.grad_mean.assign(nb, std::vector<double>(m, 0.0));
  out.grad_log_std.assign(nb, std::vector<double>(m, 0.0));
  std::vector<std::vector<double>> grad_theta(opt.theta_grad ? nb : 0);

  parallel_for(nb, opt.threads, [&](std::size_t b) {
    const std::size_t r = batch[b];
    if (r >= data.trials.size() || r >= var.trials()) throw std::out_of_range("trial index out of range");
    const auto& trial = data.trials[r];
    if (noise[b].size() != m) throw std::invalid_argument("noise has the wrong dimension");
    ad::Tape t;
    const auto bound = dec.bind(t, theta, opt.theta_grad);
    const ad::Var mu = t.leaf(var.means[r]);
    const ad::Var ls = t.leaf(var.log_stds[r]);
    const ad::Var eps = t.constant(noise[b]);
    const ad::Var z = ad::add(t, mu, ad::mul(t, ad::exp(t, ls), eps));
    const auto psis = dec.forward(t, bound, z, opt.cycles, opt.kind);
    ad::Var total = ad::scale(t, ad::kl_diag_gaussian(t, mu, ls), -1.0);
    for (std::size_t n = 0; n < psis.size(); ++n)
      total = ad::add(t, total,
                      ad::spline_loglik(t, psis[n], trial.processes[n], dec.coefficient_map(),
                                        dec.spline().knots));
    t.backward(total);
    out.per_trial[b] = t.scalar(total);
    const auto gm = t.grad(mu);
    const auto gl = t.grad(ls);
    out.grad_mean[b].assign(gm.begin(), gm.end());
    out.grad_log_std[b].assign(gl.begin(), gl.end());
    if (opt.theta_grad) {
      grad_theta[b].assign(dec.parameter_count(), 0.0);
      dec.gather_grad(t, bound, grad_theta[b]);
    }
  });

  for (double v : out.per_trial) out.value += v;
  if (opt.theta_grad) {
    out.grad_theta.assign(dec.parameter_count(), 0.0);
    for (const auto& g : grad_theta)
      for (std::size_t k = 0; k < g.size(); ++k) out.grad_theta[k] += g[k];
  }
  return out;
}

ElboBatch elbo_batch(const Decoder& dec, std::span<const double> theta,
                     const VariationalParams& var, const TrialSet& data,
                     std::span<const std::size_t> batch, Rng& rng, const ElboOptions& opt) {
  std::vector<std::vector<double>> noise(batch.size(),
                                         std::vector<double>(static_cast<std::size_t>(dec.config().latent_dim)));
  for (auto& e : noise)
    for (auto& x : e) x = rng.normal();
  return elbo_batch(dec, theta, var, data, batch, noise, opt);
}

namespace {

// Updates the batch's variational parameters from their ELBO gradients (ascent).
void step_variational(VariationalParams& var, std::vector<AdamMoments>& opt,
                      std::span<const std::size_t> batch, const ElboBatch& res,
                      const TrainConfig& tcfg) {
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t r = batch[b];
    const std::size_t m = var.means[r].size();
    std::vector<double> params(2 * m), grad(2 * m);
    for (std::size_t d = 0; d < m; ++d) {
      params[d] = var.means[r][d];
      params[m + d] = var.log_stds[r][d];
      grad[d] = -res.grad_mean[b][d];
      grad[m + d] = -res.grad_log_std[b][d];
    }
    adam_step(params, grad, opt[r], tcfg.variational_learning_rate, tcfg.beta1, tcfg.beta2,
              tcfg.epsilon);
    for (std::size_t d = 0; d < m; ++d) {
      var.means[r][d] = params[d];
      var.log_stds[r][d] = params[m + d];
    }
  }
}

bool batch_finite(const ElboBatch& res) {
  if (!std::isfinite(res.value) || !all_finite(res.grad_theta)) return false;
  for (std::size_t b = 0; b < res.grad_mean.size(); ++b)
    if (!all_finite(res.grad_mean[b]) || !all_finite(res.grad_log_std[b])) return false;
  return true;
}

}  // namespace

void train(ModelState& state, const TrialSet& data, const TrainConfig& tcfg,
           const EpochCallback& on_epoch) {
  tcfg.validate();
  if (data.trials.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  if (state.variational.trials() != data.trials.size())
    throw std::invalid_argument("state and data disagree on the number of trials");
  const Decoder dec(state.spline, state.decoder);
  const ElboOptions opt{tcfg.cycles, tcfg.cycle, tcfg.threads, true};
  const Rng root = Rng(tcfg.seed).split(kTrainStream);
  const std::size_t R = data.trials.size();
  const auto B = static_cast<std::size_t>(tcfg.batch_size);
  while (state.epochs_done < tcfg.epochs) {
    const Rng er = root.split(static_cast<std::uint64_t>(state.epochs_done));
    const auto perm = permutation(R, er.split(0));
    double total = 0.0;
    for (std::size_t start = 0, step = 0; start < R; start += B, ++step) {
      const std::span<const std::size_t> batch(perm.data() + start, std::min(B, R - start));
      Rng br = er.split(1 + step);
      const auto res = elbo_batch(dec, state.theta, state.variational, data, batch, br, opt);
      if (!batch_finite(res))
        throw TrainingError("non-finite ELBO or gradient at epoch " +
                                std::to_string(state.epochs_done + 1) + ", step " +
                                std::to_string(step),
                            state);
      total += res.value;
      std::vector<double> g(res.grad_theta.size());
      const double inv = -1.0 / static_cast<double>(batch.size());
      for (std::size_t k = 0; k < g.size(); ++k) g[k] = inv * res.grad_theta[k];
      adam_step(state.theta, g, state.theta_opt, tcfg.learning_rate, tcfg.beta1, tcfg.beta2,
                tcfg.epsilon);
      step_variational(state.variational, state.variational_opt, batch, res, tcfg);
    }
    state.train_log.push_back(total / static_cast<double>(R));
    ++state.epochs_done;
    spdlog::debug("epoch {} mean ELBO {:.6f}", state.epochs_done, state.train_log.back());
    if (on_epoch) on_epoch(state);
  }
}

ModelState train(const TrialSet& data, const SplineConfig& spline, const DecoderConfig& dcfg,
                 const TrainConfig& tcfg) {
  auto state = init_state(data, spline, dcfg, tcfg);
  train(state, data, tcfg);
  return state;
}

VariationalFit fit_variational(const ModelState& state, const TrialSet& data,
                               const TrainConfig& tcfg, int epochs) {
  tcfg.validate();
  const Decoder dec(state.spline, state.decoder);
  const ElboOptions opt{tcfg.cycles, tcfg.cycle, tcfg.threads, false};
  VariationalFit fit;
  fit.params = VariationalParams::prior(data.trials.size(), state.decoder.latent_dim);
  std::vector<AdamMoments> moments(data.trials.size(),
                                   AdamMoments(2 * static_cast<std::size_t>(state.decoder.latent_dim)));
  const Rng root = Rng(tcfg.seed).split(kVariationalStream);
  const std::size_t R = data.trials.size();
  const auto B = static_cast<std::size_t>(tcfg.batch_size);
  for (int epoch = 0; epoch < epochs && R > 0; ++epoch) {
    const Rng er = root.split(static_cast<std::uint64_t>(epoch));
    double total = 0.0;
    for (std::size_t start = 0, step = 0; start < R; start += B, ++step) {
      std::vector<std::size_t> batch(std::min(B, R - start));
      std::iota(batch.begin(), batch.end(), start);
      Rng br = er.split(step);
      const auto res = elbo_batch(dec, state.theta, fit.params, data, batch, br, opt);
      if (!batch_finite(res))
        throw std::runtime_error("non-finite ELBO while fitting variational parameters");
      total += res.value;
      step_variational(fit.params, moments, batch, res, tcfg);
    }
    fit.log.push_back(total / static_cast<double>(R));
  }
  return fit;
}

std::vector<std::vector<double>> posterior_means(const ModelState& state) {
  return state.variational.means;
}

}  // namespace drs
