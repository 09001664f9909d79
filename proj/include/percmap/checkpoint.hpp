#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "percmap/tensor.hpp"

namespace percmap {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// On-disk layout:
//   u64 little-endian   manifest byte length
//   manifest            UTF-8 JSON {"format", "tensors": [{name, shape, offset}], "meta"}
//   payload             little-endian IEEE-754 doubles, tensors back to back
// Offsets count doubles from the start of the payload. Round trips are
// bit-exact.
std::string encode_checkpoint(const std::vector<NamedTensor>& tensors,
                              const nlohmann::json& meta = nlohmann::json::object());
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes, nlohmann::json* meta = nullptr);

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& meta = nlohmann::json::object());
std::vector<NamedTensor> load_checkpoint(const std::string& path, nlohmann::json* meta = nullptr);

// Throws ContractError when the name is absent.
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace percmap
