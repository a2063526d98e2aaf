#include "drs/io.hpp"

#include <fstream>
#include <sstream>

namespace drs {

namespace {

template <typename Fn>
auto guarded(const char* what, Fn fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed ") + what + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("invalid ") + what + ": " + e.what());
  } catch (const std::out_of_range& e) {
    throw IoError(std::string("invalid ") + what + ": " + e.what());
  }
}

const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw IoError(std::string("expected an object holding '") + key + "'");
  const auto it = j.find(key);
  if (it == j.end()) throw IoError(std::string("missing field '") + key + "'");
  return *it;
}

json dense_of(const SymMatrix& m) {
  json rows = json::array();
  for (int a = 0; a < m.size(); ++a) {
    json row = json::array();
    for (int b = 0; b < m.size(); ++b) row.push_back(m(a, b));
    rows.push_back(std::move(row));
  }
  return rows;
}

SymMatrix sym_of(const json& rows, int n) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != n)
    throw IoError("matrix has the wrong number of rows");
  std::vector<double> dense;
  for (const auto& row : rows) {
    if (!row.is_array() || static_cast<int>(row.size()) != n) throw IoError("matrix row has the wrong length");
    for (const auto& v : row) dense.push_back(v.get<double>());
  }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < a; ++b) {
      const double x = dense[static_cast<std::size_t>(a * n + b)];
      const double y = dense[static_cast<std::size_t>(b * n + a)];
      if (std::abs(x - y) > 1e-12 * (1.0 + std::abs(x) + std::abs(y))) throw IoError("matrix is not symmetric");
    }
  return SymMatrix::from_dense(n, dense);
}

json moments_json(const AdamMoments& m) { return {{"m", m.m}, {"v", m.v}, {"step", m.step}}; }

AdamMoments moments_from(const json& j, std::size_t n) {
  AdamMoments m;
  m.m = field(j, "m").get<std::vector<double>>();
  m.v = field(j, "v").get<std::vector<double>>();
  m.step = field(j, "step").get<std::int64_t>();
  if (m.m.size() != n || m.v.size() != n) throw IoError("optimizer state has the wrong size");
  return m;
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot write " + path.string());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

json to_json(const SplineConfig& cfg) {
  return {{"knots", cfg.knots},
          {"degree", cfg.degree},
          {"smoothness", cfg.smoothness},
          {"mode", to_string(cfg.mode)}};
}

SplineConfig spline_config_from_json(const json& j) {
  return guarded("spline config", [&] {
    SplineConfig cfg;
    cfg.knots = field(j, "knots").get<std::vector<double>>();
    cfg.degree = field(j, "degree").get<int>();
    cfg.smoothness = field(j, "smoothness").get<int>();
    cfg.mode = constraint_mode_from_string(j.value("mode", std::string("nonnegative")));
    cfg.validate();
    return cfg;
  });
}

json to_json(const PiecewisePoly& poly) {
  return {{"knots", poly.knots}, {"degree", poly.degree}, {"coeffs", poly.coeffs}};
}

PiecewisePoly piecewise_poly_from_json(const json& j) {
  return guarded("piecewise polynomial", [&] {
    PiecewisePoly p;
    p.knots = field(j, "knots").get<std::vector<double>>();
    p.degree = field(j, "degree").get<int>();
    p.coeffs = field(j, "coeffs").get<std::vector<std::vector<double>>>();
    if (p.knots.size() != p.coeffs.size() + 1) throw IoError("coefficient count does not match the knots");
    for (const auto& c : p.coeffs)
      if (c.size() != static_cast<std::size_t>(p.degree + 1)) throw IoError("coefficient vector of wrong length");
    return p;
  });
}

json to_json(const TrialSet& data) {
  json trials = json::array();
  for (const auto& t : data.trials) {
    json entry;
    entry["label"] = t.label ? json(*t.label) : json(nullptr);
    entry["processes"] = t.processes;
    trials.push_back(std::move(entry));
  }
  return {{"t_start", data.t_start},
          {"t_end", data.t_end},
          {"n_processes", data.n_processes},
          {"trials", std::move(trials)}};
}

TrialSet trial_set_from_json(const json& j) {
  return guarded("trial set", [&] {
    TrialSet d;
    d.t_start = field(j, "t_start").get<double>();
    d.t_end = field(j, "t_end").get<double>();
    d.n_processes = field(j, "n_processes").get<int>();
    for (const auto& t : field(j, "trials")) {
      Trial trial;
      if (t.contains("label") && !t.at("label").is_null()) trial.label = t.at("label").get<int>();
      trial.processes = field(t, "processes").get<std::vector<EventSeq>>();
      d.trials.push_back(std::move(trial));
    }
    d.validate();
    return d;
  });
}

json psi_to_json(const PsdPairParams& psi, const SplineConfig& cfg) {
  json q1 = json::array(), q2 = json::array();
  for (const auto& m : psi.q1) q1.push_back(dense_of(m));
  for (const auto& m : psi.q2) q2.push_back(dense_of(m));
  return {{"spline_config", to_json(cfg)}, {"q1", q1}, {"q2", q2}, {"intercept", psi.intercept}};
}

SplineConfig psi_config_from_json(const json& j) {
  return guarded("psi file", [&] { return spline_config_from_json(field(j, "spline_config")); });
}

PsdPairParams psi_from_json(const json& j, const SplineConfig& cfg) {
  return guarded("psi file", [&] {
    const auto shape = psd_shape(cfg);
    PsdPairParams psi;
    const auto& q1 = field(j, "q1");
    const auto& q2 = field(j, "q2");
    if (!q1.is_array() || !q2.is_array() || static_cast<int>(q1.size()) != shape.intervals ||
        static_cast<int>(q2.size()) != shape.intervals)
      throw IoError("psi needs one Q1 and one Q2 per interval");
    for (const auto& m : q1) psi.q1.push_back(sym_of(m, shape.n1));
    for (const auto& m : q2) psi.q2.push_back(sym_of(m, shape.n2));
    psi.intercept = j.value("intercept", 0.0);
    return psi;
  });
}

json truth_to_json(const std::vector<std::vector<GridIntensity>>& truth) {
  json types = json::array();
  for (const auto& per_type : truth) {
    json procs = json::array();
    for (const auto& g : per_type) procs.push_back({{"grid", g.grid()}, {"values", g.values()}});
    types.push_back(std::move(procs));
  }
  return {{"types", std::move(types)}};
}

std::vector<std::vector<GridIntensity>> truth_from_json(const json& j) {
  return guarded("truth file", [&] {
    std::vector<std::vector<GridIntensity>> truth;
    for (const auto& procs : field(j, "types")) {
      std::vector<GridIntensity> per_type;
      for (const auto& g : procs)
        per_type.emplace_back(field(g, "grid").get<std::vector<double>>(),
                              field(g, "values").get<std::vector<double>>());
      truth.push_back(std::move(per_type));
    }
    return truth;
  });
}

json to_json(const ModelState& s) {
  const Decoder dec(s.spline, s.decoder);
  json layers = json::array();
  for (const auto& l : dec.layers()) {
    const auto w = std::vector<double>(s.theta.begin() + static_cast<std::ptrdiff_t>(l.weight_offset),
                                       s.theta.begin() + static_cast<std::ptrdiff_t>(l.weight_offset + l.rows * l.cols));
    const auto b = std::vector<double>(s.theta.begin() + static_cast<std::ptrdiff_t>(l.bias_offset),
                                       s.theta.begin() + static_cast<std::ptrdiff_t>(l.bias_offset + l.rows));
    layers.push_back({{"rows", l.rows}, {"cols", l.cols}, {"weights", w}, {"bias", b}});
  }
  json var_opt = json::array();
  for (const auto& m : s.variational_opt) var_opt.push_back(moments_json(m));
  return {{"version", 1},
          {"spline_config", to_json(s.spline)},
          {"latent_dim", s.decoder.latent_dim},
          {"decoder",
           {{"hidden", s.decoder.hidden},
            {"n_processes", s.decoder.n_processes},
            {"share_trunk", s.decoder.share_trunk},
            {"output_rates", s.decoder.output_rates},
            {"layers", layers}}},
          {"variational", {{"means", s.variational.means}, {"log_stds", s.variational.log_stds}}},
          {"train_log", s.train_log},
          {"epochs_done", s.epochs_done},
          {"optimizer", {{"theta", moments_json(s.theta_opt)}, {"variational", var_opt}}}};
}

ModelState model_state_from_json(const json& j) {
  return guarded("checkpoint", [&] {
    if (field(j, "version").get<int>() != 1) throw IoError("unsupported checkpoint version");
    ModelState s;
    s.spline = spline_config_from_json(field(j, "spline_config"));
    s.decoder.latent_dim = field(j, "latent_dim").get<int>();
    const auto& d = field(j, "decoder");
    s.decoder.hidden = field(d, "hidden").get<std::vector<int>>();
    s.decoder.n_processes = field(d, "n_processes").get<int>();
    s.decoder.share_trunk = field(d, "share_trunk").get<bool>();
    s.decoder.output_rates = d.value("output_rates", std::vector<double>{});
    const Decoder dec(s.spline, s.decoder);
    const auto& layers = field(d, "layers");
    if (!layers.is_array() || layers.size() != dec.layers().size())
      throw IoError("checkpoint layer count does not match the decoder config");
    s.theta.assign(dec.parameter_count(), 0.0);
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = dec.layers()[k];
      const auto w = field(layers[k], "weights").get<std::vector<double>>();
      const auto b = field(layers[k], "bias").get<std::vector<double>>();
      if (w.size() != l.rows * l.cols || b.size() != l.rows) throw IoError("checkpoint layer has the wrong shape");
      std::copy(w.begin(), w.end(), s.theta.begin() + static_cast<std::ptrdiff_t>(l.weight_offset));
      std::copy(b.begin(), b.end(), s.theta.begin() + static_cast<std::ptrdiff_t>(l.bias_offset));
    }
    const auto& var = field(j, "variational");
    s.variational.means = field(var, "means").get<std::vector<std::vector<double>>>();
    s.variational.log_stds = field(var, "log_stds").get<std::vector<std::vector<double>>>();
    const auto m = static_cast<std::size_t>(s.decoder.latent_dim);
    if (s.variational.means.size() != s.variational.log_stds.size())
      throw IoError("variational means and log-stds differ in length");
    for (std::size_t r = 0; r < s.variational.means.size(); ++r)
      if (s.variational.means[r].size() != m || s.variational.log_stds[r].size() != m)
        throw IoError("variational parameters have the wrong dimension");
    s.train_log = j.value("train_log", std::vector<double>{});
    s.epochs_done = j.value("epochs_done", static_cast<int>(s.train_log.size()));
    if (j.contains("optimizer")) {
      const auto& opt = j.at("optimizer");
      s.theta_opt = moments_from(field(opt, "theta"), s.theta.size());
      for (const auto& v : field(opt, "variational")) s.variational_opt.push_back(moments_from(v, 2 * m));
      if (s.variational_opt.size() != s.variational.trials()) throw IoError("optimizer state has the wrong trial count");
    } else {
      s.theta_opt = AdamMoments(s.theta.size());
      s.variational_opt.assign(s.variational.trials(), AdamMoments(2 * m));
    }
    return s;
  });
}

json to_json(const EvalReport& rep) {
  json j;
  j["elbo_per_trial"] = rep.elbo_per_trial;
  j["elbo_mean"] = rep.elbo_mean;
  j["knn15"] = rep.knn15 ? json(*rep.knn15) : json(nullptr);
  j["ssg_sst"] = rep.ssg_sst ? json(*rep.ssg_sst) : json(nullptr);
  j["ks"] = rep.ks;
  j["ks_critical_5pct"] = rep.ks_critical;
  j["ks_intervals"] = rep.ks_intervals;
  j["ks_pooling"] = "time-rescaled intervals pooled over all test trials and processes";
  if (rep.l2_mean) {
    j["l2_mean"] = *rep.l2_mean;
    j["l2_std"] = *rep.l2_std;
    j["baseline_l2_mean"] = *rep.baseline_l2_mean;
    j["baseline_bins"] = *rep.baseline_bins;
  }
  return j;
}

}  // namespace drs
