#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "recapfx/config.hpp"

namespace recapfx {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Stages in execution order; a run stops after `until`.
enum class Stage { ingest, features, recap, train, stack };
std::string to_string(Stage s);

struct RunReport {
  /// Deterministic content: written as report.json.
  nlohmann::json report;
  /// Wall-clock seconds per stage: written as timings.json.
  nlohmann::json timings;
  std::vector<Finding> findings;
  /// Paths relative to the output directory.
  std::vector<std::string> artifacts;
};

/// Validates the config (errors abort before any compute), runs the stages
/// and writes the artifacts. Files are staged in a sibling directory and
/// moved into place only when every stage succeeds. Stage failures keep
/// their error kind and name the stage.
RunReport run_pipeline(const PipelineConfig& config, Stage until = Stage::stack);

}  // namespace recapfx
