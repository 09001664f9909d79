#include "percmap/json_io.hpp"

#include <fstream>
#include <sstream>

#include "percmap/errors.hpp"

namespace percmap {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

std::string dump_canonical(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, dump_canonical(j));
}

}  // namespace percmap
