#pragma once

// Structured configuration file driving the CLI, plus run-directory
// manifest helpers. Validation aggregates every violation into one error.

#include "hoda/calibration.hpp"
#include "hoda/eval.hpp"
#include "hoda/monitor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace hoda {

/// Configuration error listing every violation found.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& message)
      : std::runtime_error(message) {}
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  SyntheticDatasetSpec dataset;
  TrainConfig train;
  CalibrationConfig calibration;
  std::string sequence = "full";  // sequence used by single-stage commands
  WindowPolicy window_policy = WindowPolicy::tumbling;
  FlagAction action_on_flag = FlagAction::flag_only;
  ExperimentPlan experiment;

  /// Parses and cross-validates; throws ValidationError with the full list
  /// of violations.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);

  nlohmann::ordered_json to_json() const;

  /// FNV-1a hex digest of the canonical JSON dump.
  std::string digest() const;
};

/// Creates the run directory and writes manifest.json (tool version, seed,
/// config digest, command). Refuses to reuse a directory that already holds
/// a manifest: artifacts are immutable once written.
void init_run_dir(const std::filesystem::path& dir, const PipelineConfig& cfg,
                  const std::string& command);

}  // namespace hoda
