// drs: simulate | fit | evaluate | project
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "drs/constraints.hpp"
#include "drs/eval.hpp"
#include "drs/io.hpp"
#include "drs/linalg.hpp"
#include "drs/model.hpp"
#include "drs/run_config.hpp"

namespace fs = std::filesystem;
using namespace drs;

namespace {

constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("drs");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("DRS_LOG");
  const std::string name = level ? level : "info";
  if (name == "error")
    spdlog::set_level(spdlog::level::err);
  else if (name == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    spdlog::set_level(spdlog::level::info);
}

RunConfig resolve_config(const Globals& g, const std::optional<json>& fallback = std::nullopt) {
  RunConfig cfg;
  if (!g.config.empty())
    cfg = load_run_config(g.config);
  else if (fallback)
    cfg = parse_run_config(*fallback);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  cfg.finalize();
  return cfg;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw IoError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
}

void require_out(const std::string& path) {
  if (path.empty()) throw IoError("--out is required");
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  auto q = p;
  q.replace_extension();
  q += suffix;
  return q;
}

std::string number(double x) {
  std::ostringstream s;
  s << std::setprecision(12) << x;
  return s.str();
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

Split make_split(std::size_t trials, std::optional<int> n_train, std::uint64_t seed) {
  const std::size_t n = n_train ? std::min<std::size_t>(static_cast<std::size_t>(*n_train), trials)
                                : (trials * 5 + 5) / 6;
  std::vector<std::size_t> p(trials);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Rng rng = Rng(seed).split(5);
  for (std::size_t i = trials; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  Split s{{p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n)},
          {p.begin() + static_cast<std::ptrdiff_t>(n), p.end()}};
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

int cmd_simulate(const Globals& g, const std::string& truth_out) {
  require_out(g.out);
  const auto cfg = resolve_config(g);
  const auto syn = gen_synthetic(cfg.synthetic);
  const fs::path truth_path = truth_out.empty() ? sibling(g.out, ".truth.json") : fs::path(truth_out);
  write_json_file(g.out, to_json(syn.data));
  write_json_file(truth_path, truth_to_json(syn.truth));
  std::map<int, std::pair<std::size_t, std::size_t>> summary;  // label -> (trials, events)
  for (const auto& t : syn.data.trials) {
    auto& s = summary[t.label.value_or(-1)];
    ++s.first;
    for (const auto& ev : t.processes) s.second += ev.size();
  }
  std::cout << "type,trials,events,events_per_trial\n";
  for (const auto& [label, s] : summary)
    std::cout << label << ',' << s.first << ',' << s.second << ','
              << number(static_cast<double>(s.second) / static_cast<double>(s.first)) << '\n';
  spdlog::info("wrote {} trials to {} and the true intensities to {}", syn.data.trials.size(), g.out,
               truth_path.string());
  return 0;
}

json checkpoint_json(const ModelState& state, const RunConfig& cfg, const Split& split) {
  auto j = to_json(state);
  j["run_config"] = to_json(cfg);
  j["split"] = {{"train", split.train}, {"test", split.test}};
  return j;
}

void write_elbo_log(const fs::path& path, const std::vector<double>& log) {
  std::ostringstream s;
  s << "epoch,elbo\n";
  for (std::size_t e = 0; e < log.size(); ++e) s << e + 1 << ',' << number(log[e]) << '\n';
  write_text_file(path, s.str());
}

int cmd_fit(const Globals& g, const std::string& data_path, const std::string& resume,
            std::optional<int> epochs, const std::string& log_out) {
  require_out(g.out);
  require_file(data_path, "data file");
  if (!resume.empty()) require_file(resume, "checkpoint");
  const auto data = trial_set_from_json(read_json_file(data_path));

  std::optional<json> prior;
  if (!resume.empty()) prior = read_json_file(resume);
  auto cfg = resolve_config(g, prior ? std::optional<json>(prior->at("run_config")) : std::nullopt);
  if (epochs) cfg.train.epochs = *epochs;
  cfg.decoder.n_processes = data.n_processes;
  if (data.t_start != cfg.spline.t_start() || data.t_end != cfg.spline.t_end())
    throw IoError("data window does not match the spline domain in the config");

  Split split;
  ModelState state;
  if (prior) {
    split.train = prior->at("split").at("train").get<std::vector<std::size_t>>();
    split.test = prior->at("split").at("test").get<std::vector<std::size_t>>();
    state = model_state_from_json(*prior);
  } else {
    split = make_split(data.trials.size(), cfg.n_train, cfg.seed);
  }
  for (auto i : split.train)
    if (i >= data.trials.size()) throw IoError("checkpoint split does not match the data");
  const auto train_data = data.subset(split.train);
  if (!prior) state = init_state(train_data, cfg.spline, cfg.decoder, cfg.train);

  const fs::path log_path = log_out.empty() ? sibling(g.out, ".elbo.csv") : fs::path(log_out);
  spdlog::info("fitting {} trials ({} held out), epochs {} -> {}", split.train.size(), split.test.size(),
               state.epochs_done, cfg.train.epochs);
  try {
    train(state, train_data, cfg.train, [](const ModelState& s) {
      spdlog::info("epoch {} mean ELBO {:.4f}", s.epochs_done, s.train_log.back());
    });
  } catch (const TrainingError& e) {
    write_json_file(g.out, checkpoint_json(e.last_good(), cfg, split));
    write_elbo_log(log_path, e.last_good().train_log);
    spdlog::error("{}; last good state written to {}", e.what(), g.out);
    return kExitNumerical;
  }
  write_json_file(g.out, checkpoint_json(state, cfg, split));
  write_elbo_log(log_path, state.train_log);
  spdlog::info("checkpoint written to {}", g.out);
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& data_path, const std::string& ckpt_path,
                 const std::string& truth_path) {
  require_out(g.out);
  require_file(data_path, "data file");
  require_file(ckpt_path, "checkpoint");
  if (!truth_path.empty()) require_file(truth_path, "truth file");
  const auto data = trial_set_from_json(read_json_file(data_path));
  const auto ckpt = read_json_file(ckpt_path);
  const auto state = model_state_from_json(ckpt);
  const auto cfg = resolve_config(g, ckpt.contains("run_config") ? std::optional<json>(ckpt.at("run_config"))
                                                                 : std::nullopt);
  Split split;
  try {
    split.train = ckpt.at("split").at("train").get<std::vector<std::size_t>>();
    split.test = ckpt.at("split").at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception&) {
    throw IoError("checkpoint has no train/test split");
  }
  for (const auto& idx : {split.train, split.test})
    for (auto i : idx)
      if (i >= data.trials.size()) throw IoError("checkpoint split does not match the data");
  if (split.test.empty()) throw IoError("checkpoint has no held-out trials to evaluate");
  std::optional<std::vector<std::vector<GridIntensity>>> truth;
  if (!truth_path.empty()) truth = truth_from_json(read_json_file(truth_path));

  EvalReport rep;
  try {
    rep = evaluate_model(state, data, split.train, split.test, cfg.train, cfg.eval,
                         truth ? &*truth : nullptr);
  } catch (const std::invalid_argument& e) {
    throw IoError(e.what());
  }

  const fs::path dir = g.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());

  std::ostringstream qq;
  qq << "theoretical,empirical\n";
  for (const auto& [a, b] : rep.qq) qq << number(a) << ',' << number(b) << '\n';

  const Decoder dec(state.spline, state.decoder);
  std::ostringstream curves;
  curves << "trial,process,t,intensity" << (truth ? ",truth" : "") << '\n';
  const std::size_t n_curves = std::min<std::size_t>(static_cast<std::size_t>(cfg.curves), split.test.size());
  for (std::size_t r = 0; r < n_curves; ++r) {
    const auto polys = dec.intensities(state.theta, rep.test_means[r], cfg.eval.reporting_cycles, cfg.train.cycle);
    const auto& trial = data.trials[split.test[r]];
    for (std::size_t n = 0; n < polys.size(); ++n)
      for (int k = 0; k < kMetricGrid; ++k) {
        const double t = k == kMetricGrid - 1
                             ? data.t_end
                             : data.t_start + (data.t_end - data.t_start) * k / (kMetricGrid - 1);
        curves << split.test[r] << ',' << n << ',' << number(t) << ',' << number(eval_closed(polys[n], t));
        if (truth) curves << ',' << number((*truth).at(static_cast<std::size_t>(*trial.label)).at(n)(t));
        curves << '\n';
      }
  }

  auto metrics = to_json(rep);
  metrics["test_trials"] = split.test;
  write_json_file(dir / "metrics.json", metrics);
  write_text_file(dir / "qq.csv", qq.str());
  write_text_file(dir / "intensity.csv", curves.str());
  std::cout << metrics.dump(2) << '\n';
  return 0;
}

int cmd_project(const Globals& g, const std::string& psi_path, int cycles, const std::string& cycle,
                std::optional<double> dykstra_tol, int max_iter) {
  require_out(g.out);
  require_file(psi_path, "psi file");
  const auto doc = read_json_file(psi_path);
  const auto cfg = psi_config_from_json(doc);
  const auto psi = psi_from_json(doc, cfg);
  if (cfg.mode != ConstraintMode::nonnegative)
    spdlog::info("mode {}: projecting the derivative parameters", to_string(cfg.mode));
  if (cycles < 1) throw IoError("--cycles must be >= 1");

  auto report = [&](const PsdPairParams& p) {
    return json{{"max_residual", smoothness_residual(p, cfg).max_abs()}, {"min_eigenvalue", min_eigenvalue(p)}};
  };
  json rep;
  rep["before"] = report(psi);
  PsdPairParams out;
  if (dykstra_tol) {
    const auto res = dykstra(psi, cfg, *dykstra_tol, max_iter);
    out = res.psi;
    rep["method"] = "dykstra";
    rep["iterations"] = res.iterations;
    rep["converged"] = res.converged;
  } else {
    const auto kind = cycle == "per_order" ? CycleKind::per_order : CycleKind::stacked;
    out = alternating_projections(psi, cfg, cycles, kind);
    rep["method"] = "alternating_projections";
    rep["cycles"] = cycles;
    rep["cycle"] = cycle;
  }
  rep["after"] = report(out);
  write_json_file(g.out, psi_to_json(out, cfg));
  std::cout << rep.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Deep Random Splines: simulate, fit, evaluate, project"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run config");
  app.add_option("--seed", g.seed, "64-bit seed (overrides the config)");
  app.add_option("--threads", g.threads, "worker threads (overrides the config)");
  app.add_option("--out", g.out, "output path");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset and its true intensities");
  std::string truth_out;
  sim->add_option("--truth-out", truth_out, "true intensity file (default: <out>.truth.json)");

  auto* fit = app.add_subcommand("fit", "train the model, write a checkpoint and an ELBO log");
  std::string data_path, resume, log_out;
  std::optional<int> epochs;
  fit->add_option("--data", data_path, "dataset JSON")->required();
  fit->add_option("--resume", resume, "continue from this checkpoint");
  fit->add_option("--epochs", epochs, "total epochs (overrides the config)");
  fit->add_option("--log", log_out, "ELBO CSV (default: <out>.elbo.csv)");

  auto* ev = app.add_subcommand("evaluate", "metrics, QQ and intensity CSVs for held-out trials");
  std::string ev_data, ckpt, truth;
  ev->add_option("--data", ev_data, "dataset JSON")->required();
  ev->add_option("--checkpoint", ckpt, "checkpoint JSON")->required();
  ev->add_option("--truth", truth, "true intensity JSON");

  auto* proj = app.add_subcommand("project", "project psi onto the constraint set");
  std::string psi_path, cycle = "stacked";
  int cycles = 200, max_iter = 100000;
  std::optional<double> dykstra_tol;
  proj->add_option("--psi", psi_path, "psi JSON")->required();
  proj->add_option("--cycles,-M", cycles, "alternating projection cycles");
  proj->add_option("--cycle", cycle, "cycle kind")->check(CLI::IsMember({"stacked", "per_order"}));
  proj->add_option("--dykstra", dykstra_tol, "run Dykstra's algorithm with this tolerance instead");
  proj->add_option("--max-iter", max_iter, "Dykstra iteration cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(g, truth_out);
    if (*fit) return cmd_fit(g, data_path, resume, epochs, log_out);
    if (*ev) return cmd_evaluate(g, ev_data, ckpt, truth);
    if (*proj) return cmd_project(g, psi_path, cycles, cycle, dykstra_tol, max_iter);
  } catch (const NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const json::exception& e) {
    spdlog::error("malformed input: {}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  }
  return kExitUsage;
}
