#pragma once

// Binary container for named tensors plus a JSON metadata block. Used for
// network checkpoints and for optional perceptual-extractor weights.
//
// Layout (little-endian):
//   8 bytes   magic "SLBRTNS1"
//   u64       header length in bytes
//   header    UTF-8 JSON {"meta": {...}, "tensors": [{"name", "shape": [n,c,h,w]}, ...]}
//   payload   float64 values of every tensor, in header order

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slbr/tensor.hpp"

namespace slbr {

struct TensorFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  // LoadError naming the key when absent.
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace slbr
