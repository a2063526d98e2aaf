#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "drs/io.hpp"
#include "drs/run_config.hpp"
#include "oracles.hpp"

using namespace drs;

namespace {

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / "drs_io_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("spline documents round trip") {
  const auto cfg = SplineConfig{{0.0, 1.0, 2.5, 4.0}, 4, 3, ConstraintMode::nonnegative};
  CHECK(spline_config_from_json(to_json(cfg)) == cfg);
  Rng rng(601);
  const auto psi = oracle::random_psi(cfg, rng, true);
  const auto back = psi_from_json(psi_to_json(psi, cfg), cfg);
  CHECK(back == psi);
  CHECK(psi_config_from_json(psi_to_json(psi, cfg)) == cfg);
  const auto poly = to_spline(psi, cfg);
  CHECK(piecewise_poly_from_json(to_json(poly)) == poly);
  // through text
  const auto text = to_json(poly).dump();
  CHECK(piecewise_poly_from_json(json::parse(text)) == poly);

  auto bad = psi_to_json(psi, cfg);
  bad["q1"][0][0][1] = 123.0;
  CHECK_THROWS_AS(psi_from_json(bad, cfg), IoError);
  bad = psi_to_json(psi, cfg);
  bad["q2"].erase(0);
  CHECK_THROWS_AS(psi_from_json(bad, cfg), IoError);
}

TEST_CASE("trial sets, truth and model states round trip") {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.trials_per_type = 6;
  const auto syn = gen_synthetic(spec);
  CHECK(trial_set_from_json(json::parse(to_json(syn.data).dump())) == syn.data);

  const auto truth = truth_from_json(json::parse(truth_to_json(syn.truth).dump()));
  REQUIRE(truth.size() == syn.truth.size());
  for (std::size_t c = 0; c < truth.size(); ++c)
    for (std::size_t n = 0; n < truth[c].size(); ++n) {
      CHECK(truth[c][n].grid() == syn.truth[c][n].grid());
      CHECK(truth[c][n].values() == syn.truth[c][n].values());
    }

  DecoderConfig dc;
  dc.n_processes = 2;
  dc.hidden = {4};
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.seed = 5;
  const auto state = train(syn.data, SplineConfig::uniform(0, 10, 10, 3, 2), dc, tc);
  CHECK(model_state_from_json(json::parse(to_json(state).dump())) == state);

  auto broken = to_json(syn.data);
  broken["trials"][0]["processes"][0] = {3.0, 1.0};
  CHECK_THROWS(trial_set_from_json(broken));
}

TEST_CASE("file helpers") {
  const auto dir = scratch_dir();
  const auto p = dir / "doc.json";
  write_json_file(p, json{{"a", 1}});
  CHECK(read_json_file(p) == json{{"a", 1}});
  CHECK_THROWS_AS(read_json_file(dir / "missing.json"), IoError);
  {
    std::ofstream out(dir / "junk.json");
    out << "{not json";
  }
  CHECK_THROWS_AS(read_json_file(dir / "junk.json"), IoError);
  CHECK_THROWS_AS(write_text_file(dir / "no_such_dir" / "x.txt", "x"), IoError);
  CHECK_FALSE(std::filesystem::exists(dir / "no_such_dir"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("run configuration") {
  const auto cfg = parse_run_config(json::parse(R"({"seed": 7, "synthetic": {"trials_per_type": 600},
      "train": {"epochs": 200, "batch_size": 50}, "split": {"n_train": 1000}})"));
  CHECK(cfg.seed == 7);
  CHECK(cfg.train.seed == 7);
  CHECK(cfg.synthetic.seed == 7);
  CHECK(cfg.train.epochs == 200);
  CHECK(cfg.n_train == 1000);
  CHECK(cfg.decoder.n_processes == 2);

  const auto again = parse_run_config(to_json(cfg));
  CHECK(to_json(again) == to_json(cfg));

  const auto defaults = parse_run_config(json::object());
  CHECK(defaults.spline == SplineConfig::uniform(0.0, 10.0, 10, 3, 2));
  CHECK_FALSE(defaults.n_train.has_value());

  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"sed": 1})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"train": {"epoch": 1}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"train": {"epochs": "ten"}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"train": {"batch_size": 0}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"spline": {"degree": 3, "smoothness": 3}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"spline": {"knots": [0, 1], "intervals": 3}})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"threads": 0})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse("[1, 2]")), ConfigError);
}
