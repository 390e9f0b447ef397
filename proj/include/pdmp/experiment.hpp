#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pdmp/models.hpp"
#include "pdmp/solver.hpp"

namespace pdmp {

// Process exit codes of a run.
enum class ExitCode : int {
  Ok = 0,
  Usage = 1,
  Config = 2,
  Inconclusive = 3,
  Internal = 4,
};

struct RunOutput {
  ExitCode status {ExitCode::Ok};
  std::string message;
  nlohmann::json manifest;
  // (path, content), written together after the run completes.
  std::vector<std::pair<std::string, std::string>> files;
};

/// Schema check plus materialization of every default. Throws ConfigError.
nlohmann::json validate_config(const nlohmann::json& raw);

// Model referenced by a validated config.
std::shared_ptr<ModelSpec> model_for_config(const nlohmann::json& config);

// The computation only; nothing touches the disk.
RunOutput run_experiment(const nlohmann::json& config);

/// Parse, validate, run, then write all artifacts. Never throws; failures
/// leave no output files behind.
RunOutput run_config_file(const std::string& path);

// Validation only; status Ok or Config.
RunOutput validate_config_file(const std::string& path);

// ∫ f u dm on the grid.
double functional(const GridDensity& u, const std::function<double(const Point&)>& f);

nlohmann::json diagnostics_to_json(const Diagnostics& d);

// Parameters, grid sizes, kernel report and known answers.
nlohmann::json model_to_json(const ModelSpec& m);

const char* library_version();

} // namespace pdmp
