#pragma once

// Single-file checkpoint:
//   8 bytes   magic "PLTCKPT1"
//   8 bytes   manifest length, little-endian uint64
//   manifest  JSON: format_version, config, tensors [{name, shape, dtype,
//             offset, nbytes}], buffer_bytes, crc32, meta
//   buffer    raw little-endian tensor data in manifest order

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <boost/crc.hpp>
#include "json.hpp"

#include "plt/config.hpp"
#include "plt/errors.hpp"
#include "plt/parameters.hpp"

namespace plt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'P', 'L', 'T', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

enum class StorageDtype { f64, f32 };

inline const char* to_string(StorageDtype d) { return d == StorageDtype::f64 ? "f64" : "f32"; }

inline StorageDtype parse_dtype(const std::string& s) {
  if (s == "f64") return StorageDtype::f64;
  if (s == "f32") return StorageDtype::f32;
  throw ConfigError("unknown dtype '" + s + "'");
}

struct Checkpoint {
  ModelConfig cfg;
  Parameters params;
  nlohmann::json meta = nlohmann::json::object();
};

inline std::uint32_t crc32_of(const std::vector<char>& bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

inline std::vector<char> encode_checkpoint(const ModelConfig& cfg, const Parameters& params,
                                           const nlohmann::json& meta = nlohmann::json::object(),
                                           StorageDtype dtype = StorageDtype::f64) {
  const std::size_t elem = dtype == StorageDtype::f64 ? 8 : 4;
  std::vector<char> buffer;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : params.named()) {
    const std::size_t offset = buffer.size();
    buffer.resize(offset + t.size() * elem);
    char* out = buffer.data() + offset;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (dtype == StorageDtype::f64) {
        const double d = t[i];
        std::memcpy(out + i * 8, &d, 8);
      } else {
        const auto f = static_cast<float>(t[i]);
        std::memcpy(out + i * 4, &f, 4);
      }
    }
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", to_string(dtype)}, {"offset", offset},
                       {"nbytes", t.size() * elem}});
  }
  const nlohmann::json manifest = {{"format_version", kCheckpointVersion},
                                   {"config", cfg},
                                   {"tensors", tensors},
                                   {"buffer_bytes", buffer.size()},
                                   {"crc32", crc32_of(buffer)},
                                   {"meta", meta}};
  const std::string text = manifest.dump();
  const std::uint64_t len = text.size();
  std::vector<char> out(16 + text.size() + buffer.size());
  std::memcpy(out.data(), kCheckpointMagic, 8);
  std::memcpy(out.data() + 8, &len, 8);
  std::memcpy(out.data() + 16, text.data(), text.size());
  if (!buffer.empty()) std::memcpy(out.data() + 16 + text.size(), buffer.data(), buffer.size());
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError("checkpoint: bad magic");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (len > bytes.size() - 16) throw CheckpointError("checkpoint: manifest length exceeds file size");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: unreadable manifest: ") + e.what());
  }
  Checkpoint ck;
  try {
    if (manifest.at("format_version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("checkpoint: unsupported format version");
    }
    ck.cfg = manifest.at("config").get<ModelConfig>();
    ck.cfg.validate();
    ck.meta = manifest.value("meta", nlohmann::json::object());
    const std::vector<char> buffer(bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len), bytes.end());
    if (buffer.size() != manifest.at("buffer_bytes").get<std::size_t>()) {
      throw CheckpointError("checkpoint: buffer size mismatch");
    }
    if (crc32_of(buffer) != manifest.at("crc32").get<std::uint32_t>()) {
      throw CheckpointError("checkpoint: checksum mismatch");
    }
    const auto layout = parameter_layout(ck.cfg);
    const auto& index = manifest.at("tensors");
    if (index.size() != layout.size()) throw CheckpointError("checkpoint: tensor count does not match config");
    std::vector<Tensor> flat;
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& entry = index[i];
      const auto shape = entry.at("shape").get<Shape>();
      if (entry.at("name").get<std::string>() != layout[i].first || shape != layout[i].second) {
        throw CheckpointError("checkpoint: tensor '" + entry.at("name").get<std::string>() + "' does not match config");
      }
      const StorageDtype dtype = parse_dtype(entry.at("dtype").get<std::string>());
      const std::size_t elem = dtype == StorageDtype::f64 ? 8 : 4;
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t count = shape_size(shape);
      if (entry.at("nbytes").get<std::size_t>() != count * elem || offset + count * elem > buffer.size()) {
        throw CheckpointError("checkpoint: tensor extent out of range");
      }
      std::vector<double> data(count);
      for (std::size_t j = 0; j < count; ++j) {
        if (dtype == StorageDtype::f64) {
          std::memcpy(&data[j], buffer.data() + offset + j * 8, 8);
        } else {
          float f = 0;
          std::memcpy(&f, buffer.data() + offset + j * 4, 4);
          data[j] = f;
        }
      }
      flat.emplace_back(shape, std::move(data));
    }
    ck.params = assemble_parameters(ck.cfg, std::move(flat));
  } catch (const CheckpointError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed manifest: ") + e.what());
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const Parameters& params,
                            const nlohmann::json& meta = nlohmann::json::object(),
                            StorageDtype dtype = StorageDtype::f64) {
  const std::vector<char> bytes = encode_checkpoint(cfg, params, meta, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace plt
