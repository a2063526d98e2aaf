#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "drs/eval.hpp"
#include "drs/model.hpp"
#include "drs/point_process.hpp"
#include "drs/spline.hpp"

namespace drs {

using json = nlohmann::json;

/// Unreadable/unwritable files and malformed documents.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames, so a failed write leaves no partial file.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const json& doc);

json to_json(const SplineConfig& cfg);
SplineConfig spline_config_from_json(const json& j);

json to_json(const PiecewisePoly& poly);
PiecewisePoly piecewise_poly_from_json(const json& j);

json to_json(const TrialSet& data);
TrialSet trial_set_from_json(const json& j);

/// {"spline_config": ..., "q1": [dense matrices], "q2": [...], "intercept": x}
json psi_to_json(const PsdPairParams& psi, const SplineConfig& cfg);
PsdPairParams psi_from_json(const json& j, const SplineConfig& cfg);
SplineConfig psi_config_from_json(const json& j);

/// {"types": [[{"grid": [...], "values": [...]}, ... per process], ... per type]}
json truth_to_json(const std::vector<std::vector<GridIntensity>>& truth);
std::vector<std::vector<GridIntensity>> truth_from_json(const json& j);

json to_json(const ModelState& state);
ModelState model_state_from_json(const json& j);

json to_json(const EvalReport& rep);

}  // namespace drs
