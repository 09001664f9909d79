#pragma once

#include <string>

#include <json.hpp>

namespace percmap {

// Parse errors are reported as IoError carrying the file path.
nlohmann::json read_json_file(const std::string& path);

// Canonical formatting (2-space indent, trailing newline) so re-runs are
// byte-identical.
void write_json_file(const std::string& path, const nlohmann::json& j);
std::string dump_canonical(const nlohmann::json& j);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace percmap
