#include "config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <set>

#include "roadside/errors.hpp"
#include "roadside/util/hash.hpp"
#include "roadside/util/text.hpp"

namespace roadside::app {

using nlohmann::json;

namespace {

json learner_defaults(const json& full) {
  json out = full;
  out.erase("seed");  // filled from the run seed unless set
  return out;
}

json scalar_to_json(const YAML::Node& node) {
  const std::string& s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  {
    std::size_t pos = 0;
    const bool has_digit_only = s.find_first_not_of("+-0123456789") == std::string::npos;
    if (has_digit_only) {
      try {
        const long long v = std::stoll(s, &pos);
        if (pos == s.size()) return v;
      } catch (const std::exception&) {
      }
    }
  }
  if (const auto d = parse_double(s)) return *d;
  return s;
}

json node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(node_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = node_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

std::string type_name(const json& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "list";
  return "mapping";
}

bool compatible(const json& def, const json& user) {
  if (def.is_null()) return user.is_null() || user.is_string();
  if (def.is_boolean()) return user.is_boolean();
  if (def.is_number_float()) return user.is_number();
  if (def.is_number_integer()) return user.is_number_integer();
  if (def.is_string()) return user.is_string();
  if (def.is_array()) return user.is_array();
  return user.is_object();
}

// Subtrees validated by their own parsers.
const std::set<std::string> kFreeForm = {"learners.mlp", "learners.rf", "learners.gbt",
                                         "learners.meta", "learners.grids"};

void check_structure(const json& def, const json& user, const std::string& path) {
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!def.contains(key)) throw ConfigError(where + ": unknown key");
    const json& d = def.at(key);
    if (!compatible(d, value))
      throw ConfigError(where + ": expected " + type_name(d) + ", got " + type_name(value));
    if (d.is_object() && !kFreeForm.contains(where)) check_structure(d, value, where);
  }
}

std::filesystem::path path_or(const json& v, const std::filesystem::path& fallback) {
  return v.is_string() && !v.get<std::string>().empty() ? std::filesystem::path(v.get<std::string>())
                                                        : fallback;
}

std::vector<std::size_t> index_list(const json& arr, const std::string& where) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& v = arr[i];
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw ConfigError(where + "[" + std::to_string(i) + "]: expected a non-negative integer");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

template <typename Fn>
void within(const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::size_t at_least(const json& doc, const json::json_pointer& ptr, const std::string& where,
                     long long lo) {
  const auto v = doc.at(ptr).get<long long>();
  if (v < lo) throw ConfigError(where + " must be >= " + std::to_string(lo));
  return static_cast<std::size_t>(v);
}

std::size_t positive(const json& doc, const json::json_pointer& ptr, const std::string& where) {
  return at_least(doc, ptr, where, 1);
}

template <typename Config>
json learner_config(const json& section, std::uint64_t seed, const std::string& where) {
  json cfg = section;
  if (!cfg.contains("seed")) cfg["seed"] = seed;
  within(where, [&] { cfg.get<Config>().validate(); });
  return cfg;
}

}  // namespace

json default_document() {
  const synth::FleetSpec fleet;
  const QcPolicy qc;
  const MetWindow window;
  const screen::StandardSet standards;
  const screen::MonteCarloConfig mc;
  const ensemble::StackOptions stack;
  return {
      {"seed", 1},
      {"workers", 0},
      {"paths",
       {{"output_dir", "out"},
        {"orrs", nullptr},
        {"im", nullptr},
        {"screen_orrs", nullptr},
        {"screen_im", nullptr},
        {"model", nullptr},
        {"policy", nullptr}}},
      {"synth",
       {{"n_vehicles", fleet.n_vehicles},
        {"top_decile_share", fleet.top_decile_share},
        {"orrs_records_per_vehicle", fleet.orrs_records_per_vehicle},
        {"qc_violation_rate", fleet.qc_violation_rate},
        {"out_of_window_rate", fleet.met_regime.out_of_window_rate},
        {"unregistered_rate", fleet.unregistered_rate}}},
      {"qc", {{"max_relative_humidity", qc.max_relative_humidity},
              {"max_temperature", qc.max_temperature}}},
      {"met_window",
       {{"temp_min", window.temp_min},
        {"temp_max", window.temp_max},
        {"rh_max", window.rh_max},
        {"wind_max", window.wind_max},
        {"vsp_max", window.vsp_max}}},
      {"cv", {{"k", 10}, {"test_fraction", 0.2}}},
      {"learners",
       {{"mlp", learner_defaults(json(learn::MlpConfig{}))},
        {"rf", learner_defaults(json(learn::ForestConfig{}))},
        {"gbt", learner_defaults(json(learn::GbtConfig{}))},
        {"meta", learner_defaults(json(stack.meta))},
        {"grids", json::object()},
        {"passthrough", stack.passthrough},
        {"clamp_negative", stack.clamp_negative}}},
      {"standards", {{"co", standards.co}, {"hc", standards.hc}, {"no", standards.no}}},
      {"screening", {{"n_bins", 50}, {"basis", "predicted"}, {"eps", 0.0}}},
      {"robustness",
       {{"t", mc.t},
        {"n", mc.n},
        {"stratified", mc.stratified},
        {"sizes", {2000, 5000, 10000, 15000}},
        {"sweep_t", 100},
        {"knee_fraction", 0.1}}},
      {"explain",
       {{"samples", 100},
        {"rows", json::array()},
        {"background", 256},
        {"n_permutations", 2000},
        {"top_k", 10}}},
      {"report", {{"n_bins", 10}}},
  };
}

json yaml_to_json(std::string_view text, const std::string& origin) {
  try {
    const YAML::Node root = YAML::Load(std::string(text));
    return node_to_json(root);
  } catch (const YAML::Exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

json load_document(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  json doc = yaml_to_json(text, path.string());
  if (doc.is_null()) return json::object();
  if (!doc.is_object()) throw ConfigError(path.string() + ": top level must be a mapping");
  return doc;
}

void merge_into(json& base, const json& overlay) {
  if (!base.is_object() || !overlay.is_object()) {
    base = overlay;
    return;
  }
  for (const auto& [key, value] : overlay.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object())
      merge_into(base[key], value);
    else
      base[key] = value;
  }
}

void apply_assignment(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("--set expects key.path=value, got '" + std::string(assignment) + "'");
  const std::string key(trim(assignment.substr(0, eq)));
  const std::string raw(assignment.substr(eq + 1));
  json value = yaml_to_json(raw, "--set " + key);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set: malformed key '" + key + "'");
    if (!node->is_object()) *node = json::object();
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

std::string PipelineConfig::hash() const {
  json identity = document;
  identity.erase("paths");
  identity.erase("workers");
  return sha256_hex(identity.dump());
}

PipelineConfig parse_config(const json& user_document) {
  const json defaults = default_document();
  if (!user_document.is_object()) throw ConfigError("config: top level must be a mapping");
  check_structure(defaults, user_document, "");

  PipelineConfig cfg;
  cfg.document = defaults;
  merge_into(cfg.document, user_document);
  const json& d = cfg.document;

  const auto seed = d.at("seed").get<long long>();
  if (seed < 0) throw ConfigError("seed must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  const auto workers = d.at("workers").get<long long>();
  if (workers < 0) throw ConfigError("workers must be >= 0");
  cfg.workers = static_cast<unsigned>(workers);

  const auto& p = d.at("paths");
  cfg.paths.output_dir = path_or(p.at("output_dir"), "out");
  cfg.paths.orrs = path_or(p.at("orrs"), cfg.paths.output_dir / "orrs.jsonl");
  cfg.paths.im = path_or(p.at("im"), cfg.paths.output_dir / "im.csv");
  cfg.paths.screen_orrs = path_or(p.at("screen_orrs"), cfg.paths.orrs);
  cfg.paths.screen_im = path_or(p.at("screen_im"), cfg.paths.im);
  cfg.paths.model = path_or(p.at("model"), cfg.paths.output_dir / "model.json");
  cfg.paths.policy = path_or(p.at("policy"), {});

  const auto& s = d.at("synth");
  cfg.fleet.seed = cfg.seed;
  cfg.fleet.n_vehicles = positive(d, "/synth/n_vehicles"_json_pointer, "synth.n_vehicles");
  cfg.fleet.top_decile_share = s.at("top_decile_share").get<double>();
  cfg.fleet.orrs_records_per_vehicle = s.at("orrs_records_per_vehicle").get<double>();
  cfg.fleet.qc_violation_rate = s.at("qc_violation_rate").get<double>();
  cfg.fleet.met_regime.out_of_window_rate = s.at("out_of_window_rate").get<double>();
  cfg.fleet.unregistered_rate = s.at("unregistered_rate").get<double>();
  within("synth", [&] { cfg.fleet.validate(); });

  cfg.qc.max_relative_humidity = d.at("/qc/max_relative_humidity"_json_pointer).get<double>();
  cfg.qc.max_temperature = d.at("/qc/max_temperature"_json_pointer).get<double>();
  within("qc", [&] { cfg.qc.validate(); });

  const auto& w = d.at("met_window");
  cfg.window.temp_min = w.at("temp_min").get<double>();
  cfg.window.temp_max = w.at("temp_max").get<double>();
  cfg.window.rh_max = w.at("rh_max").get<double>();
  cfg.window.wind_max = w.at("wind_max").get<double>();
  cfg.window.vsp_max = w.at("vsp_max").get<double>();
  within("met_window", [&] { cfg.window.validate(); });

  cfg.cv_k = at_least(d, "/cv/k"_json_pointer, "cv.k", 2);
  cfg.test_fraction = d.at("/cv/test_fraction"_json_pointer).get<double>();
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0))
    throw ConfigError("cv.test_fraction must lie in [0, 1)");

  const auto& l = d.at("learners");
  cfg.bases.mlp.config = learner_config<learn::MlpConfig>(l.at("mlp"), cfg.seed, "learners.mlp");
  cfg.bases.rf.config = learner_config<learn::ForestConfig>(l.at("rf"), cfg.seed, "learners.rf");
  cfg.bases.gbt.config = learner_config<learn::GbtConfig>(l.at("gbt"), cfg.seed, "learners.gbt");
  const json meta = learner_config<learn::GbtConfig>(l.at("meta"), cfg.seed, "learners.meta");
  cfg.stack.meta = meta.get<learn::GbtConfig>();
  cfg.stack.passthrough = l.at("passthrough").get<bool>();
  cfg.stack.clamp_negative = l.at("clamp_negative").get<bool>();
  for (const auto& [name, axes] : l.at("grids").items()) {
    const std::string where = "learners.grids." + name;
    learn::LearnerKind kind;
    within(where, [&] { kind = learn::learner_from_name(name); });
    if (!axes.is_object()) throw ConfigError(where + ": expected a mapping of axis -> values");
    ensemble::LearnerSpec* spec = kind == learn::LearnerKind::kMlp      ? &cfg.bases.mlp
                                  : kind == learn::LearnerKind::kForest ? &cfg.bases.rf
                                                                        : &cfg.bases.gbt;
    learn::HyperGrid grid;
    grid.base = spec->config;
    for (const auto& [axis, values] : axes.items()) {
      if (!values.is_array())
        throw ConfigError(where + "." + axis + ": expected a list of candidate values");
      grid.axes[axis] = values.get<std::vector<json>>();
    }
    learn::validate_grid(grid, kind, where);
    spec->grid = std::move(grid);
  }

  cfg.standards.co = d.at("/standards/co"_json_pointer).get<double>();
  cfg.standards.hc = d.at("/standards/hc"_json_pointer).get<double>();
  cfg.standards.no = d.at("/standards/no"_json_pointer).get<double>();
  within("standards", [&] { cfg.standards.validate(); });

  const auto& sc = d.at("screening");
  cfg.curve.n_bins = at_least(d, "/screening/n_bins"_json_pointer, "screening.n_bins", 2);
  const auto basis = sc.at("basis").get<std::string>();
  if (basis == "predicted")
    cfg.curve.basis = screen::BinBasis::kPredicted;
  else if (basis == "truth")
    cfg.curve.basis = screen::BinBasis::kTruth;
  else
    throw ConfigError("screening.basis must be 'predicted' or 'truth', got '" + basis + "'");
  cfg.curve.eps = sc.at("eps").get<double>();
  if (!(cfg.curve.eps >= 0.0 && cfg.curve.eps < 0.5))
    throw ConfigError("screening.eps must lie in [0, 0.5)");

  auto& r = cfg.robustness;
  r.monte_carlo.t = positive(d, "/robustness/t"_json_pointer, "robustness.t");
  r.monte_carlo.n = positive(d, "/robustness/n"_json_pointer, "robustness.n");
  r.monte_carlo.stratified = d.at("/robustness/stratified"_json_pointer).get<bool>();
  r.monte_carlo.seed = cfg.seed;
  r.monte_carlo.curve = cfg.curve;
  r.sizes = index_list(d.at("/robustness/sizes"_json_pointer), "robustness.sizes");
  if (r.sizes.empty()) throw ConfigError("robustness.sizes must not be empty");
  for (std::size_t i = 0; i < r.sizes.size(); ++i) {
    if (r.sizes[i] == 0) throw ConfigError("robustness.sizes[" + std::to_string(i) + "] must be >= 1");
    if (i > 0 && r.sizes[i] <= r.sizes[i - 1])
      throw ConfigError("robustness.sizes must be strictly ascending");
  }
  r.sweep_t = positive(d, "/robustness/sweep_t"_json_pointer, "robustness.sweep_t");
  r.knee_fraction = d.at("/robustness/knee_fraction"_json_pointer).get<double>();
  if (!(r.knee_fraction > 0.0 && r.knee_fraction < 1.0))
    throw ConfigError("robustness.knee_fraction must lie in (0, 1)");

  auto& e = cfg.explain;
  e.samples = at_least(d, "/explain/samples"_json_pointer, "explain.samples", 0);
  e.rows = index_list(d.at("/explain/rows"_json_pointer), "explain.rows");
  e.background = positive(d, "/explain/background"_json_pointer, "explain.background");
  e.n_permutations = positive(d, "/explain/n_permutations"_json_pointer, "explain.n_permutations");
  e.top_k = positive(d, "/explain/top_k"_json_pointer, "explain.top_k");

  cfg.report_bins = positive(d, "/report/n_bins"_json_pointer, "report.n_bins");
  return cfg;
}

}  // namespace roadside::app
