// SPDX-License-Identifier: Apache-2.0
#include "ensnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

namespace ensnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
constexpr std::uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 0 : 1;
}

std::string bn_stat_name(const std::string& gamma_name, const char* stat) {
  const std::string suffix = ".gamma";
  return gamma_name.substr(0, gamma_name.size() - suffix.size()) + "." + stat;
}

/// Every serialized tensor of `net` in a fixed order. Net may be const.
template <typename Net, typename Fn>
void for_each_tensor(Net& net, Fn&& fn) {
  for (auto* p : net.all_params()) fn(p->name, p->value);
  auto stats = [&](auto& bn) {
    fn(bn_stat_name(bn.gamma.name, "running_mean"), bn.running_mean);
    fn(bn_stat_name(bn.gamma.name, "running_var"), bn.running_var);
  };
  for (auto& block : net.trunk()) stats(block.bn);
  for (auto& br : net.branches()) stats(br.block.bn);
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename T>
  void tensor(const std::string& name, const Tensor<T>& t) {
    str(name);
    u8(dtype_code<T>());
    u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) u32(static_cast<std::uint32_t>(d));
    bytes(t.data(), t.size() * sizeof(T));
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  std::size_t remaining() const { return n_ - pos_; }
  void bytes(void* out, std::size_t n) {
    if (n > remaining()) throw FormatError("checkpoint truncated");
    std::memcpy(out, p_ + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > remaining()) throw FormatError("checkpoint truncated");
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

const std::string* find_value(const KeyValues& kv, const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return &v;
  return nullptr;
}

std::uint64_t meta_u64(const KeyValues& kv, const std::string& key) {
  const std::string* v = find_value(kv, key);
  if (!v) throw FormatError("checkpoint config block lacks '" + key + "'");
  try {
    std::size_t used = 0;
    const auto x = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return x;
  } catch (const std::exception&) {
    throw FormatError("checkpoint config '" + key + "' is not an integer: " + *v);
  }
}

double meta_double(const KeyValues& kv, const std::string& key) {
  const std::string* v = find_value(kv, key);
  if (!v) throw FormatError("checkpoint config block lacks '" + key + "'");
  try {
    std::size_t used = 0;
    const double x = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return x;
  } catch (const std::exception&) {
    throw FormatError("checkpoint config '" + key + "' is not a number: " + *v);
  }
}

std::string exact_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const EnsembleNetwork<T>& net, const Sgd<T>* optimizer) {
  KeyValues meta;
  for (auto& [k, v] : arch_to_key_values(net.config())) meta.emplace_back("arch." + k, v);
  meta.emplace_back("net.seed", std::to_string(net.seed()));
  meta.emplace_back("sgd.present", optimizer ? "1" : "0");
  if (optimizer) {
    meta.emplace_back("sgd.base_lr", exact_double(optimizer->config().base_lr));
    meta.emplace_back("sgd.decay", exact_double(optimizer->config().decay));
    meta.emplace_back("sgd.momentum", exact_double(optimizer->config().momentum));
    meta.emplace_back("sgd.step_count", std::to_string(optimizer->step_count()));
  }

  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  for_each_tensor(net, [&](const std::string& name, const Tensor<T>& t) { w.tensor(name, t); });
  if (optimizer)
    for (const auto& [name, v] : optimizer->velocity()) w.tensor("sgd.velocity/" + name, v);
  const std::uint32_t crc = crc_of(w.buffer().data(), w.buffer().size());
  w.u32(crc);
  return std::move(w.buffer());
}

template <typename T>
Checkpoint<T> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw FormatError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  Reader r(bytes.data() + 4, bytes.size() - 8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc_of(bytes.data(), bytes.size() - 4) != stored_crc) throw FormatError("checkpoint checksum mismatch");

  KeyValues meta;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    meta.emplace_back(std::move(k), r.str());
  }
  KeyValues arch_kv;
  for (const auto& [k, v] : meta)
    if (k.rfind("arch.", 0) == 0) arch_kv.emplace_back(k.substr(5), v);
  ArchConfig arch;
  try {
    arch = arch_from_key_values(arch_kv);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint architecture invalid: ") + e.what());
  }

  Checkpoint<T> ck{EnsembleNetwork<T>(arch, meta_u64(meta, "net.seed")), std::nullopt, meta};
  if (meta_u64(meta, "sgd.present")) {
    SgdConfig sc{meta_double(meta, "sgd.base_lr"), meta_double(meta, "sgd.decay"),
                 meta_double(meta, "sgd.momentum")};
    ck.optimizer.emplace(sc);
    ck.optimizer->set_step_count(meta_u64(meta, "sgd.step_count"));
  }

  std::map<std::string, Tensor<T>*> slots;
  for_each_tensor(ck.net, [&](const std::string& name, Tensor<T>& t) { slots.emplace(name, &t); });
  std::map<std::string, Shape> param_shapes;
  for (auto* p : ck.net.all_params()) param_shapes.emplace(p->name, p->value.shape());
  const std::string vel_prefix = "sgd.velocity/";

  while (r.remaining() > 0) {
    const std::string name = r.str();
    const std::uint8_t dtype = r.u8();
    if (dtype != dtype_code<T>())
      throw FormatError("record '" + name + "' has dtype " + std::to_string(dtype) + ", expected " +
                        std::to_string(dtype_code<T>()));
    const std::uint8_t rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    Tensor<T>* dst = nullptr;
    if (name.rfind(vel_prefix, 0) == 0) {
      const std::string pname = name.substr(vel_prefix.size());
      const auto it = param_shapes.find(pname);
      if (!ck.optimizer || it == param_shapes.end())
        throw FormatError("unexpected velocity record '" + name + "'");
      dst = &ck.optimizer->velocity().try_emplace(pname, it->second).first->second;
    } else {
      const auto it = slots.find(name);
      if (it == slots.end()) throw FormatError("unknown record '" + name + "'");
      dst = it->second;
      slots.erase(it);
    }
    if (dst->shape() != shape)
      throw FormatError("record '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(dst->shape()));
    r.bytes(dst->data(), dst->size() * sizeof(T));
  }
  if (!slots.empty()) throw FormatError("checkpoint lacks record '" + slots.begin()->first + "'");
  return ck;
}

template <typename T>
void save_checkpoint(const EnsembleNetwork<T>& net, const std::filesystem::path& path, const Sgd<T>* optimizer) {
  const auto bytes = serialize_checkpoint(net, optimizer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

template <typename T>
Checkpoint<T> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint<T>(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

#define ENSNET_INSTANTIATE_CHECKPOINT(T)                                                          \
  template std::vector<std::uint8_t> serialize_checkpoint(const EnsembleNetwork<T>&, const Sgd<T>*); \
  template Checkpoint<T> deserialize_checkpoint(const std::vector<std::uint8_t>&);                \
  template void save_checkpoint(const EnsembleNetwork<T>&, const std::filesystem::path&, const Sgd<T>*); \
  template Checkpoint<T> read_checkpoint(const std::filesystem::path&);

ENSNET_INSTANTIATE_CHECKPOINT(float)
ENSNET_INSTANTIATE_CHECKPOINT(double)

#undef ENSNET_INSTANTIATE_CHECKPOINT

}  // namespace ensnet
