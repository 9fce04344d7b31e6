#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cva/params.hpp"

namespace cva {

/// Parameter checkpoint file:
///
///   u64 little-endian header length N
///   N bytes of JSON: {"__metadata__": {...}, "<name>": {"shape": [...], "offset": <bytes>}, ...}
///   raw little-endian float64 data, tensors back to back in registration order
///
/// Offsets are relative to the start of the data section.
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cva
