#pragma once

// RMCK checkpoints: magic, u32 version, u32 tensor count, then per tensor
// u16 name length, name, u8 rank, u32 extents, float64 values; finally a
// u32-length-prefixed JSON block with the config and training history.

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmen/binary.hpp"
#include "rmen/model/config.hpp"
#include "rmen/model/network.hpp"
#include "rmen/model/parameters.hpp"
#include "rmen/model/train.hpp"

namespace rmen::model {

inline constexpr std::string_view kCheckpointMagic = "RMCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParameterSet params;
  RmenConfig config;
  std::vector<EpochRecord> history;
};

/// JSON has no NaN; it is written as null.
inline double json_number(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  binary::Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& e : ck.params.entries()) {
    if (e.name.size() > 0xFFFF) throw ConfigError("tensor name too long: " + e.name.substr(0, 32));
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.u8(static_cast<std::uint8_t>(e.value.rank()));
    for (std::size_t d : e.value.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : e.value.data()) w.f64(v);
  }
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : ck.history) {
    history.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_mse", r.val_mse}});
  }
  const std::string meta = nlohmann::json{{"config", ck.config}, {"history", history}}.dump();
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta);
  return w.buffer();
}

inline Checkpoint decode_checkpoint(const std::vector<char>& data) {
  binary::Reader r(data, "checkpoint");
  if (r.bytes(4) != kCheckpointMagic) throw FormatError("checkpoint: bad magic");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  }
  Checkpoint ck;
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.bytes(r.u16());
    const std::uint8_t rank = r.u8();
    if (rank == 0) throw FormatError("checkpoint: tensor '" + name + "' has rank 0");
    Dims dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = r.u32();
      if (d == 0) throw FormatError("checkpoint: tensor '" + name + "' has a zero extent");
      n *= d;
    }
    r.need(n * 8);
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    try {
      ck.params.add(std::move(name), Tensor(std::move(dims), std::move(values)));
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
  }
  const std::string meta_text = r.bytes(r.u32());
  r.expect_end();
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    ck.config = meta.at("config").get<RmenConfig>();
    for (const auto& h : meta.at("history")) {
      ck.history.push_back({h.at("epoch").get<std::size_t>(), json_number(h.at("train_loss")),
                            json_number(h.at("val_mse"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  binary::write_file_atomic(path, encode_checkpoint(ck));
}

/// Loads and verifies that the stored tensors fit the stored config.
inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = decode_checkpoint(binary::read_file(path));
  check_parameters(ck.params, ck.config);
  return ck;
}

/// Loads and verifies the tensors against an externally supplied config.
inline Checkpoint load_checkpoint(const std::filesystem::path& path, const RmenConfig& expected) {
  Checkpoint ck = decode_checkpoint(binary::read_file(path));
  check_parameters(ck.params, expected);
  return ck;
}

}  // namespace rmen::model
