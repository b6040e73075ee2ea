#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "roadside/core/qc.hpp"
#include "roadside/ensemble/stacking.hpp"
#include "roadside/screen/met_window.hpp"
#include "roadside/screen/screening.hpp"
#include "roadside/synth/fleet.hpp"

namespace roadside::app {

inline constexpr std::string_view kOutputDirEnv = "ROADSIDE_OUTPUT_DIR";

struct Paths {
  std::filesystem::path output_dir;
  std::filesystem::path orrs;  // default <output_dir>/orrs.jsonl
  std::filesystem::path im;    // default <output_dir>/im.csv
  /// Screening inputs; default to the training inputs.
  std::filesystem::path screen_orrs;
  std::filesystem::path screen_im;
  std::filesystem::path model;   // default <output_dir>/model.json
  std::filesystem::path policy;  // empty: derive thresholds from the data
};

struct RobustnessOptions {
  screen::MonteCarloConfig monte_carlo;
  std::vector<std::size_t> sizes;
  std::size_t sweep_t = 100;
  double knee_fraction = 0.1;
};

struct ExplainOptions {
  std::size_t samples = 100;
  std::vector<std::size_t> rows;  // explicit row indices win over `samples`
  std::size_t background = 256;
  std::size_t n_permutations = 2000;
  std::size_t top_k = 10;
};

struct PipelineConfig {
  nlohmann::json document;  // merged and validated, canonical key order
  std::uint64_t seed = 1;
  unsigned workers = 0;
  Paths paths;
  synth::FleetSpec fleet;
  QcPolicy qc;
  MetWindow window;
  std::size_t cv_k = 10;
  double test_fraction = 0.2;
  ensemble::BaseSpecs bases;
  ensemble::StackOptions stack;
  screen::StandardSet standards;
  screen::CurveOptions curve;
  RobustnessOptions robustness;
  ExplainOptions explain;
  std::size_t report_bins = 10;

  /// SHA-256 of the canonical document without paths and worker count, so
  /// relocating a run does not change its identity.
  std::string hash() const;
};

nlohmann::json default_document();

/// YAML (or JSON, which is a YAML subset) to JSON. Quoted scalars stay
/// strings; plain scalars become null, bool, integer or float when they parse
/// as one. Throws ConfigError with the file name on syntax errors.
nlohmann::json yaml_to_json(std::string_view text, const std::string& origin);
nlohmann::json load_document(const std::filesystem::path& path);

/// Deep merge: objects merge key-wise, everything else is replaced.
void merge_into(nlohmann::json& base, const nlohmann::json& overlay);

/// Applies "a.b.c=value"; the value is read as a YAML scalar or flow node.
void apply_assignment(nlohmann::json& doc, std::string_view assignment);

/// Checks keys and types against the defaults, then ranges, naming the
/// offending key path in the ConfigError.
PipelineConfig parse_config(const nlohmann::json& user_document);

}  // namespace roadside::app
