#pragma once

// Parameter checkpoints: `manifest.json` maps each parameter name to its
// shape, dtype and byte offset; `params.bin` holds the little-endian float32
// values back to back in manifest order.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "maeast/layers.hpp"

namespace maeast::nn {

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "params.bin";

struct ManifestEntry {
  std::string name;
  std::vector<Index> shape;
  std::string dtype;
  std::uint64_t offset = 0;
};

template <typename T>
void save_parameters(const ParameterStore<T>& store, const std::filesystem::path& dir);

/// Loads values into an already-built store; names and shapes must match.
template <typename T>
void load_parameters(ParameterStore<T>& store, const std::filesystem::path& dir);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);
nlohmann::ordered_json read_manifest_json(const std::filesystem::path& dir);

/// Reads one parameter's raw float32 values from a checkpoint directory.
std::vector<float> read_parameter(const std::filesystem::path& dir, const std::string& name);

}  // namespace maeast::nn
