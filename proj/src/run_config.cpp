#include "drs/run_config.hpp"

#include <set>
#include <string>

#include "drs/io.hpp"

namespace drs {

namespace {

// Reads optional keys from one object and rejects any key it was not asked about.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    T v{};
    if (has(key)) {
      get(key, v);
      out = v;
    } else {
      seen_.insert(key);
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

CycleKind cycle_from_string(const std::string& s) {
  if (s == "stacked") return CycleKind::stacked;
  if (s == "per_order") return CycleKind::per_order;
  throw ConfigError("cycle must be 'stacked' or 'per_order'");
}

std::string cycle_name(CycleKind k) { return k == CycleKind::stacked ? "stacked" : "per_order"; }

}  // namespace

void RunConfig::finalize() {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  train.seed = seed;
  train.threads = threads;
  synthetic.seed = seed;
  synthetic.t_start = spline.t_start();
  synthetic.t_end = spline.t_end();
  decoder.n_processes = synthetic.n_processes;
  try {
    spline.validate();
    decoder.validate();
    train.validate();
    synthetic.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (n_train && *n_train < 0) throw ConfigError("split.n_train must be >= 0");
  if (curves < 0) throw ConfigError("eval.curves must be >= 0");
  if (eval.variational_epochs < 0 || eval.elbo_samples < 1 || eval.reporting_cycles < 1 ||
      eval.max_baseline_bins < 1)
    throw ConfigError("eval settings out of range");
}

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  Section top(doc, "config");
  top.get("seed", cfg.seed);
  top.get("threads", cfg.threads);

  if (const json* j = top.sub("spline")) {
    Section s(*j, "spline");
    double t0 = 0.0, t1 = 10.0;
    int intervals = 10, degree = 3, smoothness = 2;
    std::string mode = "nonnegative";
    std::vector<double> knots;
    s.get("t_start", t0);
    s.get("t_end", t1);
    s.get("intervals", intervals);
    s.get("knots", knots);
    s.get("degree", degree);
    s.get("smoothness", smoothness);
    s.get("mode", mode);
    s.finish();
    if (!knots.empty() && (s.has("t_start") || s.has("t_end") || s.has("intervals")))
      throw ConfigError("give either spline.knots or spline.t_start/t_end/intervals, not both");
    ConstraintMode m;
    try {
      m = constraint_mode_from_string(mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (knots.empty() && intervals < 1) throw ConfigError("spline.intervals must be >= 1");
    try {
      cfg.spline = knots.empty() ? SplineConfig::uniform(t0, t1, intervals, degree, smoothness, m)
                                 : SplineConfig{knots, degree, smoothness, m};
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  if (const json* j = top.sub("decoder")) {
    Section s(*j, "decoder");
    s.get("latent_dim", cfg.decoder.latent_dim);
    s.get("hidden", cfg.decoder.hidden);
    s.get("share_trunk", cfg.decoder.share_trunk);
    s.finish();
  }

  if (const json* j = top.sub("train")) {
    Section s(*j, "train");
    auto& t = cfg.train;
    std::string cycle = cycle_name(t.cycle);
    s.get("learning_rate", t.learning_rate);
    s.get("variational_learning_rate", t.variational_learning_rate);
    s.get("beta1", t.beta1);
    s.get("beta2", t.beta2);
    s.get("epsilon", t.epsilon);
    s.get("batch_size", t.batch_size);
    s.get("epochs", t.epochs);
    s.get("cycles", t.cycles);
    s.get("cycle", cycle);
    s.get("init_bias_from_data", t.init_bias_from_data);
    s.finish();
    t.cycle = cycle_from_string(cycle);
  }

  if (const json* j = top.sub("synthetic")) {
    Section s(*j, "synthetic");
    auto& y = cfg.synthetic;
    s.get("n_trial_types", y.n_trial_types);
    s.get("n_processes", y.n_processes);
    s.get("lengthscale", y.lengthscale);
    s.get("variance", y.variance);
    s.get("mean_log_rate", y.mean_log_rate);
    s.get("grid_points", y.grid_points);
    s.get("trials_per_type", y.trials_per_type);
    s.finish();
  }

  if (const json* j = top.sub("split")) {
    Section s(*j, "split");
    s.get("n_train", cfg.n_train);
    s.finish();
  }

  if (const json* j = top.sub("eval")) {
    Section s(*j, "eval");
    s.get("variational_epochs", cfg.eval.variational_epochs);
    s.get("elbo_samples", cfg.eval.elbo_samples);
    s.get("reporting_cycles", cfg.eval.reporting_cycles);
    s.get("max_baseline_bins", cfg.eval.max_baseline_bins);
    s.get("curves", cfg.curves);
    s.finish();
  }
  top.finish();
  cfg.finalize();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_json_file(path)); }

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["spline"] = {{"knots", c.spline.knots},
                 {"degree", c.spline.degree},
                 {"smoothness", c.spline.smoothness},
                 {"mode", to_string(c.spline.mode)}};
  j["decoder"] = {{"latent_dim", c.decoder.latent_dim},
                  {"hidden", c.decoder.hidden},
                  {"share_trunk", c.decoder.share_trunk}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"variational_learning_rate", c.train.variational_learning_rate},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"epsilon", c.train.epsilon},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"cycles", c.train.cycles},
                {"cycle", cycle_name(c.train.cycle)},
                {"init_bias_from_data", c.train.init_bias_from_data}};
  j["synthetic"] = {{"n_trial_types", c.synthetic.n_trial_types},
                    {"n_processes", c.synthetic.n_processes},
                    {"lengthscale", c.synthetic.lengthscale},
                    {"variance", c.synthetic.variance},
                    {"mean_log_rate", c.synthetic.mean_log_rate},
                    {"grid_points", c.synthetic.grid_points},
                    {"trials_per_type", c.synthetic.trials_per_type}};
  if (c.n_train) j["split"] = {{"n_train", *c.n_train}};
  j["eval"] = {{"variational_epochs", c.eval.variational_epochs},
               {"elbo_samples", c.eval.elbo_samples},
               {"reporting_cycles", c.eval.reporting_cycles},
               {"max_baseline_bins", c.eval.max_baseline_bins},
               {"curves", c.curves}};
  return j;
}

}  // namespace drs
