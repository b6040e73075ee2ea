#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace roadside {

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

/// Parses a full string as a double; nullopt on empty or malformed input.
std::optional<double> parse_double(std::string_view text);

std::string trim(std::string_view text);
std::string to_upper(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// RFC-4180 CSV table: header row plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; nullopt when absent.
  std::optional<std::size_t> column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& cell(std::string_view value);
  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  CsvWriter& cell(std::size_t value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(const char* value) { return cell(std::string_view(value)); }
  CsvWriter& cell(const std::string& value) { return cell(std::string_view(value)); }
  /// Empty cell (missing value).
  CsvWriter& blank();
  void end_row();

  const std::string& str() const { return out_; }
  void save(const std::filesystem::path& path) const;

 private:
  void separator();

  std::string out_;
  std::size_t width_;
  std::size_t col_ = 0;
};

}  // namespace roadside
