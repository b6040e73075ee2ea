// roadside: synthetic fleets, stacked emission models and I/M screening policy.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 training error, 5 I/O error.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "app/commands.hpp"
#include "app/config.hpp"
#include "roadside/errors.hpp"
#include "roadside/util/parallel.hpp"

namespace {

using nlohmann::json;
using namespace roadside;

enum Exit { kOk = 0, kConfig = 2, kData = 3, kTraining = 4, kIo = 5 };

struct Flags {
  std::string config_file;
  std::vector<std::string> assignments;
  std::string output_dir;
  std::optional<long long> seed;
  std::optional<long long> workers;
  bool verbose = false;
  bool quiet = false;
  bool print_config = false;
  // per command
  std::optional<long long> n_vehicles;
  std::optional<long long> k;
  std::optional<double> test_fraction;
  std::string model;
  std::string policy;
  std::optional<long long> t;
  std::optional<long long> n;
  std::optional<long long> samples;
  std::vector<long long> rows;
};

json flag_overlay(const Flags& f) {
  json o = json::object();
  if (!f.output_dir.empty()) o["paths"]["output_dir"] = f.output_dir;
  if (!f.model.empty()) o["paths"]["model"] = f.model;
  if (!f.policy.empty()) o["paths"]["policy"] = f.policy;
  if (f.seed) o["seed"] = *f.seed;
  if (f.workers) o["workers"] = *f.workers;
  if (f.n_vehicles) o["synth"]["n_vehicles"] = *f.n_vehicles;
  if (f.k) o["cv"]["k"] = *f.k;
  if (f.test_fraction) o["cv"]["test_fraction"] = *f.test_fraction;
  if (f.t) o["robustness"]["t"] = *f.t;
  if (f.n) o["robustness"]["n"] = *f.n;
  if (f.samples) o["explain"]["samples"] = *f.samples;
  if (!f.rows.empty()) o["explain"]["rows"] = f.rows;
  return o;
}

// defaults < config file < environment < --set < dedicated flags
app::PipelineConfig resolve(const Flags& f) {
  json doc = json::object();
  if (!f.config_file.empty()) doc = app::load_document(f.config_file);
  if (const char* env = std::getenv(app::kOutputDirEnv.data()); env && *env) doc["paths"]["output_dir"] = env;
  for (const auto& a : f.assignments) app::apply_assignment(doc, a);
  app::merge_into(doc, flag_overlay(f));
  return app::parse_config(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Roadside remote sensing emission screening pipeline"};
  cli.set_version_flag("--version", std::string(app::kVersion));
  cli.fallthrough();
  cli.require_subcommand(0, 1);
  Flags f;
  cli.add_option("-c,--config", f.config_file, "YAML or JSON config file")->check(CLI::ExistingFile);
  cli.add_option("-s,--set", f.assignments, "Override a config key: key.path=value (repeatable)");
  cli.add_option("-o,--output-dir", f.output_dir, "Output directory (overrides $ROADSIDE_OUTPUT_DIR)");
  cli.add_option("--seed", f.seed, "Run seed");
  cli.add_option("-j,--workers", f.workers, "Worker threads, 0 = all cores");
  cli.add_flag("-v,--verbose", f.verbose, "Debug logging");
  cli.add_flag("-q,--quiet", f.quiet, "Warnings and errors only");
  cli.add_flag("--print-config", f.print_config, "Print the resolved config and its hash, then exit");

  auto* synth = cli.add_subcommand("synth", "Generate a synthetic fleet (ORRS, I/M and truth files)");
  synth->add_option("--n-vehicles", f.n_vehicles, "Fleet size");
  auto* train = cli.add_subcommand("train", "Fit the stacked model and write CV / held-out metrics");
  train->add_option("-k,--folds", f.k, "Cross-validation folds");
  train->add_option("--test-fraction", f.test_fraction, "Vehicle share held out before CV");
  auto* screen = cli.add_subcommand("screen", "Rate curves, Free/Re thresholds and fleet classification");
  screen->add_option("--policy", f.policy, "Apply thresholds from a policy JSON instead of deriving them");
  auto* robust = cli.add_subcommand("robustness", "Monte Carlo threshold robustness and sample-size sweep");
  robust->add_option("-t,--repetitions", f.t, "Monte Carlo repetitions");
  robust->add_option("-n,--subsample", f.n, "Records per repetition");
  auto* explain = cli.add_subcommand("explain", "Shapley attributions and MS/MAS summaries");
  explain->add_option("--samples", f.samples, "Number of randomly selected records");
  explain->add_option("--rows", f.rows, "Explicit record indices")->delimiter(',');
  auto* report = cli.add_subcommand("report", "Per-bin evaluation and run summary");
  for (auto* sub : {screen, robust, explain, report}) sub->add_option("-m,--model", f.model, "Model file");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  auto logger = spdlog::stderr_color_mt("roadside");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_level(f.verbose ? spdlog::level::debug : f.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    const auto cfg = resolve(f);
    if (f.print_config) {
      std::cout << cfg.document.dump(2) << "\nconfig_hash: " << cfg.hash() << "\n";
      return kOk;
    }
    if (cli.get_subcommands().empty()) {
      std::cerr << cli.help();
      return kConfig;
    }
    set_worker_count(cfg.workers);
    app::run_stage(cli.get_subcommands().front()->get_name(), cfg);
    return kOk;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfig;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kData;
  } catch (const TrainingError& e) {
    spdlog::error("training error: {}", e.what());
    return kTraining;
  } catch (const IoError& e) {
    spdlog::error("I/O error: {}", e.what());
    return kIo;
  } catch (const std::exception& e) {
    spdlog::critical("unexpected error: {}", e.what());
    return 1;
  }
}
