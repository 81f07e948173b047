#include "maeast/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace maeast::nn {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void save_parameters(const ParameterStore<T>& store, const fs::path& dir) {
  fs::create_directories(dir);
  ordered_json params = ordered_json::object();
  std::ofstream blob(dir / kBlobFile, std::ios::binary | std::ios::trunc);
  if (!blob) throw std::runtime_error("cannot write " + (dir / kBlobFile).string());
  std::uint64_t offset = 0;
  std::vector<float> buf;
  for (const auto& p : store) {
    params[p->name] = {{"shape", p->value.shape()}, {"dtype", "float32"}, {"offset", offset}};
    buf.resize(static_cast<std::size_t>(p->value.size()));
    for (Index i = 0; i < p->value.size(); ++i) buf[i] = static_cast<float>(p->value[i]);
    blob.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    offset += buf.size() * 4;
  }
  if (!blob) throw std::runtime_error("short write to " + (dir / kBlobFile).string());
  ordered_json manifest = {{"format", "maeast-params-v1"}, {"byte_order", "little"},
                           {"total_bytes", offset}, {"parameters", params}};
  std::ofstream(dir / kManifestFile) << manifest.dump(2) << "\n";
}

ordered_json read_manifest_json(const fs::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw std::runtime_error("missing checkpoint manifest in " + dir.string());
  return ordered_json::parse(in);
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  const ordered_json manifest = read_manifest_json(dir);
  std::vector<ManifestEntry> out;
  for (const auto& [name, entry] : manifest.at("parameters").items()) {
    ManifestEntry e;
    e.name = name;
    e.shape = entry.at("shape").get<std::vector<Index>>();
    e.dtype = entry.at("dtype").get<std::string>();
    e.offset = entry.at("offset").get<std::uint64_t>();
    if (e.dtype != "float32") throw std::runtime_error("unsupported checkpoint dtype " + e.dtype);
    out.push_back(std::move(e));
  }
  return out;
}

namespace {
Index element_count(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::vector<float> read_blob_range(const fs::path& dir, std::uint64_t offset, Index count) {
  std::ifstream blob(dir / kBlobFile, std::ios::binary);
  if (!blob) throw std::runtime_error("missing checkpoint blob in " + dir.string());
  blob.seekg(static_cast<std::streamoff>(offset));
  std::vector<float> values(static_cast<std::size_t>(count));
  blob.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * 4));
  if (blob.gcount() != static_cast<std::streamsize>(count * 4))
    throw std::runtime_error("checkpoint blob truncated in " + dir.string());
  return values;
}
}  // namespace

std::vector<float> read_parameter(const fs::path& dir, const std::string& name) {
  for (const auto& e : read_manifest(dir))
    if (e.name == name) return read_blob_range(dir, e.offset, element_count(e.shape));
  throw std::runtime_error("parameter not in checkpoint: " + name);
}

template <typename T>
void load_parameters(ParameterStore<T>& store, const fs::path& dir) {
  const auto entries = read_manifest(dir);
  if (entries.size() != store.size())
    throw std::runtime_error("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Param<T>& p = store[i];
    const auto& e = entries[i];
    if (e.name != p.name || e.shape != p.value.shape())
      throw std::runtime_error("checkpoint entry " + e.name + " does not match model parameter " + p.name);
    const auto values = read_blob_range(dir, e.offset, p.value.size());
    for (Index k = 0; k < p.value.size(); ++k) p.value[k] = static_cast<T>(values[k]);
  }
}

template void save_parameters<float>(const ParameterStore<float>&, const fs::path&);
template void save_parameters<double>(const ParameterStore<double>&, const fs::path&);
template void load_parameters<float>(ParameterStore<float>&, const fs::path&);
template void load_parameters<double>(ParameterStore<double>&, const fs::path&);

}  // namespace maeast::nn
