#include "polygen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace polygen {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& path, const ParamStore<float>& params,
                     const nlohmann::ordered_json& config, const std::string& config_hash,
                     const nlohmann::ordered_json& extra) {
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (int i = 0; i < params.size(); ++i) {
    for (const char* kind : {"value", "m", "v"}) {
      const Tensor<float>& t = params.value(i);
      tensors.push_back({{"name", params.name(i)},
                         {"kind", kind},
                         {"rows", t.rows()},
                         {"cols", t.cols()},
                         {"offset", offset}});
      offset += t.size();
    }
  }
  nlohmann::ordered_json header;
  header["config"] = config;
  header["config_hash"] = config_hash;
  header["step"] = params.step();
  header["extra"] = extra;
  header["tensors"] = tensors;
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write("PGCK", 4);
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (int i = 0; i < params.size(); ++i) {
      for (const Tensor<float>* t : {&params.value(i), &params.m(i), &params.v(i)}) {
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->size() * sizeof(float)));
      }
    }
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, "PGCK", 4) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("truncated checkpoint header in " + path.string());
  const auto header = nlohmann::ordered_json::parse(text);
  const std::streamoff blob_start = in.tellg();

  Checkpoint ck;
  ck.config = header.at("config");
  ck.config_hash = header.at("config_hash").get<std::string>();
  ck.extra = header.value("extra", nlohmann::ordered_json::object());
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto kind = entry.at("kind").get<std::string>();
    Tensor<float> t(entry.at("rows").get<int>(), entry.at("cols").get<int>());
    const auto offset = entry.at("offset").get<std::uint64_t>();
    in.seekg(blob_start + static_cast<std::streamoff>(offset * sizeof(float)));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw CheckpointError("truncated tensor " + name + " in " + path.string());
    if (kind == "value") {
      ck.params.add(name, std::move(t));
    } else {
      const int i = ck.params.index(name);
      Tensor<float>& dst = kind == "m" ? ck.params.m(i) : ck.params.v(i);
      if (!dst.same_shape(t)) throw CheckpointError("moment shape mismatch for " + name);
      dst = std::move(t);
    }
  }
  ck.params.set_step(header.at("step").get<std::int64_t>());
  return ck;
}

}  // namespace polygen
