#include "percmap/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "percmap/errors.hpp"
#include "percmap/json_io.hpp"

namespace percmap {
namespace {

constexpr const char* kFormat = "percmap-tensors/1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors, const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& nt : tensors) {
    PERCMAP_REQUIRE(nt.tensor.defined(), "checkpoint: undefined tensor '" + nt.name + "'");
    manifest["tensors"].push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}, {"offset", offset}});
    offset += nt.tensor.numel();
  }
  manifest["meta"] = meta;
  const std::string text = manifest.dump();

  std::string out;
  out.reserve(8 + text.size() + offset * 8);
  put_u64(out, text.size());
  out += text;
  for (const auto& nt : tensors) {
    for (double v : nt.tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes, nlohmann::json* meta) {
  if (bytes.size() < 8) throw IoError("checkpoint truncated (no header)");
  const std::uint64_t len = get_u64(bytes, 0);
  if (len > bytes.size() - 8) throw IoError("checkpoint truncated (manifest)");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(8, len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", std::string{}) != kFormat) throw IoError("checkpoint: unknown format");
  const std::size_t payload = 8 + len;
  const std::size_t total_doubles = (bytes.size() - payload) / 8;
  if ((bytes.size() - payload) % 8 != 0) throw IoError("checkpoint payload misaligned");

  std::vector<NamedTensor> out;
  for (const auto& entry : manifest.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t n = shape_numel(shape);
    if (offset + n > total_doubles) throw IoError("checkpoint payload truncated");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_u64(bytes, payload + 8 * (offset + i)));
    out.push_back({entry.at("name").get<std::string>(), Tensor::from_data(std::move(shape), std::move(data))});
  }
  if (meta) *meta = manifest.value("meta", nlohmann::json::object());
  return out;
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& meta) {
  write_text_file(path, encode_checkpoint(tensors, meta));
}

std::vector<NamedTensor> load_checkpoint(const std::string& path, nlohmann::json* meta) {
  try {
    return decode_checkpoint(read_text_file(path), meta);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& nt : tensors)
    if (nt.name == name) return nt.tensor;
  throw ContractError("tensor '" + name + "' not found");
}

}  // namespace percmap
