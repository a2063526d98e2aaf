#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>

#include "json.hpp"

#include "drs/eval.hpp"
#include "drs/model.hpp"
#include "drs/spline.hpp"

namespace drs {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything one CLI run needs. Parsed from a single JSON document whose
/// sections are "spline", "decoder", "train", "synthetic", "split", "eval",
/// plus top-level "seed" and "threads". Unknown keys are rejected.
struct RunConfig {
  SplineConfig spline = SplineConfig::uniform(0.0, 10.0, 10, 3, 2);
  DecoderConfig decoder;
  TrainConfig train;
  SyntheticSpec synthetic;
  EvalOptions eval;
  /// Trials used for fitting; the rest are held out. Defaults to 5/6 of the data.
  std::optional<int> n_train;
  /// Test trials written to the intensity-curve CSV.
  int curves = 5;
  std::uint64_t seed = 0;
  int threads = 1;

  /// Propagates seed and threads into the sections and checks every field.
  void finalize();
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace drs
