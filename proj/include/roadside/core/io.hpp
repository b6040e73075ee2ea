#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "roadside/core/records.hpp"

namespace roadside {

/// ORRS records from JSON-lines (.jsonl/.json) or CSV (anything else).
std::vector<OrrsRecord> read_orrs(const std::filesystem::path& path);
std::vector<OrrsRecord> parse_orrs_jsonl(std::string_view text);
std::vector<OrrsRecord> parse_orrs_csv(std::string_view text);
std::string orrs_to_jsonl(const std::vector<OrrsRecord>& records);
std::string orrs_to_csv(const std::vector<OrrsRecord>& records);

std::vector<ImRecord> read_im(const std::filesystem::path& path);
std::vector<ImRecord> parse_im_csv(std::string_view text);
std::string im_to_csv(const std::vector<ImRecord>& records);

}  // namespace roadside
