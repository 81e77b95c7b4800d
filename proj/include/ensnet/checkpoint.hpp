// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ensnet/config.hpp"
#include "ensnet/model.hpp"
#include "ensnet/sgd.hpp"

namespace ensnet {

/// Binary layout, little-endian throughout:
///   "BNE1" | u32 version | u32 n, n x {u32 klen, key, u32 vlen, value}
///   | records {u32 name_len, name, u8 dtype, u8 rank, u32 dims[rank], payload}
///   | u32 CRC32 of every preceding byte.
/// dtype 0 = float32, 1 = float64. Records hold every parameter, the
/// batch-norm running statistics and, optionally, SGD velocity under
/// "sgd.velocity/<param>".
inline constexpr char kCheckpointMagic[4] = {'B', 'N', 'E', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  EnsembleNetwork<T> net;
  std::optional<Sgd<T>> optimizer;
  KeyValues meta;  // the full config block
};

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const EnsembleNetwork<T>& net, const Sgd<T>* optimizer = nullptr);

template <typename T>
Checkpoint<T> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Throws DataError when the file cannot be written.
template <typename T>
void save_checkpoint(const EnsembleNetwork<T>& net, const std::filesystem::path& path,
                     const Sgd<T>* optimizer = nullptr);

/// Throws FormatError on bad magic, version, dtype, truncation, checksum or
/// a record set that does not match the stored architecture.
template <typename T>
Checkpoint<T> read_checkpoint(const std::filesystem::path& path);

template <typename T>
EnsembleNetwork<T> load_checkpoint(const std::filesystem::path& path) {
  return read_checkpoint<T>(path).net;
}

}  // namespace ensnet
