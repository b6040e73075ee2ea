#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "config.hpp"
#include "json.hpp"

namespace roadside::app {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::string_view kManifestName = "manifest.json";

struct StageOutput {
  std::vector<std::filesystem::path> files;  // relative to the output dir
  nlohmann::json inputs = nlohmann::json::object();
};

StageOutput cmd_synth(const PipelineConfig& cfg);
StageOutput cmd_train(const PipelineConfig& cfg);
StageOutput cmd_screen(const PipelineConfig& cfg);
StageOutput cmd_robustness(const PipelineConfig& cfg);
StageOutput cmd_explain(const PipelineConfig& cfg);
StageOutput cmd_report(const PipelineConfig& cfg);

/// Runs one stage by name, times it and refreshes the manifest. Throws
/// ConfigError for unknown stage names.
void run_stage(std::string_view stage, const PipelineConfig& cfg);

/// Rewrites manifest.json: the stage record is replaced and the file
/// inventory rescanned, so every file in the output dir is listed with its hash.
void update_manifest(const PipelineConfig& cfg, std::string_view stage, double seconds,
                     const StageOutput& out);

}  // namespace roadside::app
