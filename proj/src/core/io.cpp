#include "roadside/core/io.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "roadside/errors.hpp"
#include "roadside/util/text.hpp"

namespace roadside {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

using json = nlohmann::json;

double json_number(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return kMissing;
  if (!it->is_number())
    throw DataError("orrs line " + std::to_string(line) + ": field '" + key + "' is not numeric");
  return it->get<double>();
}

struct CsvColumns {
  const CsvTable& table;
  std::string source;

  std::size_t require(const char* name) const {
    auto c = table.column(name);
    if (!c) throw DataError(source + ": missing column '" + name + "'");
    return *c;
  }
};

double csv_number(const std::vector<std::string>& row, std::size_t col, const char* name,
                  std::size_t line, const std::string& source) {
  const auto& cell = row[col];
  if (trim(cell).empty()) return kMissing;
  auto v = parse_double(cell);
  if (!v)
    throw DataError(source + " line " + std::to_string(line) + ": field '" + name +
                    "' is not numeric: '" + cell + "'");
  return *v;
}

std::int64_t csv_integer(const std::vector<std::string>& row, std::size_t col, const char* name,
                         std::size_t line, const std::string& source) {
  const double v = csv_number(row, col, name, line, source);
  if (!std::isfinite(v) || v != std::floor(v))
    throw DataError(source + " line " + std::to_string(line) + ": field '" + name +
                    "' must be an integer");
  return static_cast<std::int64_t>(v);
}

bool has_suffix(const std::filesystem::path& p, std::string_view ext) {
  return p.extension() == ext;
}

}  // namespace

std::vector<OrrsRecord> parse_orrs_jsonl(std::string_view text) {
  std::vector<OrrsRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("orrs line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) throw DataError("orrs line " + std::to_string(line_no) + ": not an object");
    OrrsRecord r;
    if (!obj.contains("plate") || !obj["plate"].is_string())
      throw DataError("orrs line " + std::to_string(line_no) + ": missing 'plate'");
    r.plate = obj["plate"].get<std::string>();
    if (!obj.contains("timestamp") || !obj["timestamp"].is_number_integer())
      throw DataError("orrs line " + std::to_string(line_no) + ": 'timestamp' must be integer seconds");
    r.timestamp = obj["timestamp"].get<std::int64_t>();
    r.rs_co = json_number(obj, "rs_co", line_no);
    r.rs_hc = json_number(obj, "rs_hc", line_no);
    r.rs_no = json_number(obj, "rs_no", line_no);
    r.velocity = json_number(obj, "velocity", line_no);
    r.acceleration = json_number(obj, "acceleration", line_no);
    r.temperature = json_number(obj, "temperature", line_no);
    r.relative_humidity = json_number(obj, "relative_humidity", line_no);
    r.wind_speed = json_number(obj, "wind_speed", line_no);
    r.pressure = json_number(obj, "pressure", line_no);
    if (!obj.contains("site_id") || !obj["site_id"].is_number_integer())
      throw DataError("orrs line " + std::to_string(line_no) + ": 'site_id' must be an integer");
    r.site_id = obj["site_id"].get<int>();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<OrrsRecord> parse_orrs_csv(std::string_view text) {
  const auto table = parse_csv(text);
  const std::string src = "orrs csv";
  CsvColumns cols{table, src};
  const auto c_plate = cols.require("plate"), c_ts = cols.require("timestamp"),
             c_co = cols.require("rs_co"), c_hc = cols.require("rs_hc"),
             c_no = cols.require("rs_no"), c_v = cols.require("velocity"),
             c_a = cols.require("acceleration"), c_t = cols.require("temperature"),
             c_rh = cols.require("relative_humidity"), c_w = cols.require("wind_speed"),
             c_p = cols.require("pressure"), c_site = cols.require("site_id");
  std::vector<OrrsRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto line = i + 2;
    OrrsRecord r;
    r.plate = row[c_plate];
    r.timestamp = csv_integer(row, c_ts, "timestamp", line, src);
    r.rs_co = csv_number(row, c_co, "rs_co", line, src);
    r.rs_hc = csv_number(row, c_hc, "rs_hc", line, src);
    r.rs_no = csv_number(row, c_no, "rs_no", line, src);
    r.velocity = csv_number(row, c_v, "velocity", line, src);
    r.acceleration = csv_number(row, c_a, "acceleration", line, src);
    r.temperature = csv_number(row, c_t, "temperature", line, src);
    r.relative_humidity = csv_number(row, c_rh, "relative_humidity", line, src);
    r.wind_speed = csv_number(row, c_w, "wind_speed", line, src);
    r.pressure = csv_number(row, c_p, "pressure", line, src);
    r.site_id = static_cast<int>(csv_integer(row, c_site, "site_id", line, src));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<OrrsRecord> read_orrs(const std::filesystem::path& path) {
  const auto text = read_file(path);
  if (has_suffix(path, ".jsonl") || has_suffix(path, ".json")) return parse_orrs_jsonl(text);
  return parse_orrs_csv(text);
}

std::string orrs_to_jsonl(const std::vector<OrrsRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    // Keys in declaration order; json::dump would sort them.
    out += "{\"plate\":" + json(r.plate).dump();
    out += ",\"timestamp\":" + std::to_string(r.timestamp);
    out += ",\"rs_co\":" + format_double(r.rs_co);
    out += ",\"rs_hc\":" + format_double(r.rs_hc);
    out += ",\"rs_no\":" + format_double(r.rs_no);
    out += ",\"velocity\":" + format_double(r.velocity);
    out += ",\"acceleration\":" + format_double(r.acceleration);
    out += ",\"temperature\":" + format_double(r.temperature);
    out += ",\"relative_humidity\":" + format_double(r.relative_humidity);
    out += ",\"wind_speed\":" + format_double(r.wind_speed);
    out += ",\"pressure\":" + format_double(r.pressure);
    out += ",\"site_id\":" + std::to_string(r.site_id) + "}\n";
  }
  return out;
}

std::string orrs_to_csv(const std::vector<OrrsRecord>& records) {
  CsvWriter w({"plate", "timestamp", "rs_co", "rs_hc", "rs_no", "velocity", "acceleration",
               "temperature", "relative_humidity", "wind_speed", "pressure", "site_id"});
  for (const auto& r : records) {
    w.cell(r.plate).cell(static_cast<long long>(r.timestamp)).cell(r.rs_co).cell(r.rs_hc)
        .cell(r.rs_no).cell(r.velocity).cell(r.acceleration).cell(r.temperature)
        .cell(r.relative_humidity).cell(r.wind_speed).cell(r.pressure).cell(r.site_id);
    w.end_row();
  }
  return w.str();
}

std::vector<ImRecord> parse_im_csv(std::string_view text) {
  const auto table = parse_csv(text);
  const std::string src = "im csv";
  CsvColumns cols{table, src};
  struct NumericColumn {
    const char* name;
    double ImRecord::*field;
  };
  static constexpr NumericColumn kNumeric[] = {
      {"model_year", &ImRecord::model_year},
      {"accumulated_mileage", &ImRecord::accumulated_mileage},
      {"capacity", &ImRecord::capacity},
      {"wheel_base", &ImRecord::wheel_base},
      {"maximum_horsepower", &ImRecord::maximum_horsepower},
      {"torsion", &ImRecord::torsion},
      {"total_mass", &ImRecord::total_mass},
      {"fuel_tank_capacity", &ImRecord::fuel_tank_capacity},
      {"vehicle_volume", &ImRecord::vehicle_volume},
      {"press_ratio", &ImRecord::press_ratio},
      {"im_co", &ImRecord::im_co},
      {"im_hc", &ImRecord::im_hc},
      {"im_no", &ImRecord::im_no},
  };
  std::vector<std::size_t> numeric_cols;
  for (const auto& n : kNumeric) numeric_cols.push_back(cols.require(n.name));
  const auto c_vin = cols.require("vin"), c_plate = cols.require("plate"),
             c_engine = cols.require("engine_type"), c_brand = cols.require("vehicle_brand"),
             c_fuel = cols.require("fuel_type"), c_date = cols.require("inspection_date");

  std::vector<ImRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto line = i + 2;
    ImRecord r;
    r.vin = trim(row[c_vin]);
    if (r.vin.empty()) throw DataError(src + " line " + std::to_string(line) + ": empty vin");
    r.plate = row[c_plate];
    for (std::size_t k = 0; k < std::size(kNumeric); ++k)
      r.*(kNumeric[k].field) = csv_number(row, numeric_cols[k], kNumeric[k].name, line, src);
    r.engine_type = row[c_engine];
    r.vehicle_brand = row[c_brand];
    r.fuel_type = row[c_fuel];
    try {
      r.inspection_date = parse_date(row[c_date]);
    } catch (const DataError& e) {
      throw DataError(src + " line " + std::to_string(line) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ImRecord> read_im(const std::filesystem::path& path) {
  return parse_im_csv(read_file(path));
}

std::string im_to_csv(const std::vector<ImRecord>& records) {
  CsvWriter w({"vin", "plate", "model_year", "accumulated_mileage", "capacity", "wheel_base",
               "maximum_horsepower", "torsion", "total_mass", "fuel_tank_capacity",
               "vehicle_volume", "press_ratio", "engine_type", "vehicle_brand", "fuel_type",
               "im_co", "im_hc", "im_no", "inspection_date"});
  for (const auto& r : records) {
    w.cell(r.vin).cell(r.plate).cell(r.model_year).cell(r.accumulated_mileage).cell(r.capacity)
        .cell(r.wheel_base).cell(r.maximum_horsepower).cell(r.torsion).cell(r.total_mass)
        .cell(r.fuel_tank_capacity).cell(r.vehicle_volume).cell(r.press_ratio)
        .cell(r.engine_type).cell(r.vehicle_brand).cell(r.fuel_type).cell(r.im_co)
        .cell(r.im_hc).cell(r.im_no).cell(format_date(r.inspection_date));
    w.end_row();
  }
  return w.str();
}

}  // namespace roadside
