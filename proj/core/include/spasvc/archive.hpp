#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "spasvc/autograd.hpp"

namespace spasvc {

/// Single-file container of named float64 matrices plus a JSON metadata block.
///
/// Layout (little-endian):
///   8 bytes   magic "SVCARCH\0"
///   u32       schema version (kArchiveSchema)
///   u64       header length H
///   H bytes   UTF-8 JSON: {"meta": {...}, "tensors": [{"name","rows","cols","offset"}]}
///   payload   row-major float64 data; "offset" counts doubles from payload start
///
/// Used for both checkpoints and preprocessed feature records.
struct TensorArchive {
  static constexpr std::uint32_t kArchiveSchema = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, ag::Mat> tensors;

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

  const ag::Mat& at(const std::string& name) const;
};

}  // namespace spasvc
