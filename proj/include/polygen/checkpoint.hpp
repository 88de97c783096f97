#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "polygen/params.hpp"

namespace polygen {

// File layout (little-endian):
//   bytes 0-3   magic "PGCK"
//   bytes 4-7   uint32 format version (1)
//   bytes 8-15  uint64 header length H
//   next H      UTF-8 JSON header
//   rest        float32 blob
// The header holds "config", "config_hash", "step", "extra" and "tensors", a
// list of {name, kind: value|m|v, rows, cols, offset} where offset counts
// float32 elements from the start of the blob.

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  nlohmann::ordered_json config;
  std::string config_hash;
  nlohmann::ordered_json extra;
  ParamStore<float> params;
};

/// Writes atomically (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const ParamStore<float>& params,
                     const nlohmann::ordered_json& config, const std::string& config_hash,
                     const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace polygen
