#ifndef SMARTPASTE_CHECKPOINT_HPP
#define SMARTPASTE_CHECKPOINT_HPP

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "models.hpp"
#include "tensor.hpp"

namespace smartpaste {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Self-describing binary container: magic, format version, a plain-text
// metadata block (JSON configuration), then named arrays (name, shape, raw
// little-endian float32 data) and a trailing CRC32 of everything before it.

namespace ckpt_detail {

constexpr char kMagic[4] = {'S', 'P', 'C', 'K'};
constexpr uint32_t kVersion = 1;

inline void put_u32(std::string& buf, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  buf.append(b, 4);
}

inline void put_u64(std::string& buf, uint64_t v) {
  put_u32(buf, uint32_t(v & 0xffffffffu));
  put_u32(buf, uint32_t(v >> 32));
}

inline void put_f32(std::string& buf, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(buf, u);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw CheckpointError("checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | uint8_t(buf[pos + size_t(i)]);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    uint64_t lo = u32();
    uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() {
    uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

inline void put_named_tensor(std::string& buf, const std::string& name,
                             const Tensor& t) {
  put_u32(buf, uint32_t(name.size()));
  buf.append(name);
  put_u32(buf, uint32_t(t.shape.size()));
  for (int d : t.shape) put_u32(buf, uint32_t(d));
  for (double v : t.data) put_f32(buf, float(v));
}

inline std::pair<std::string, Tensor> get_named_tensor(Reader& r) {
  uint32_t nlen = r.u32();
  std::string name = r.bytes(nlen);
  uint32_t rank = r.u32();
  if (rank == 0 || rank > 8) throw CheckpointError("bad tensor rank");
  std::vector<int> shape;
  for (uint32_t i = 0; i < rank; ++i) shape.push_back(int(r.u32()));
  Tensor t(shape);
  for (double& v : t.data) v = double(r.f32());
  return {std::move(name), std::move(t)};
}

}  // namespace ckpt_detail

/// Quantize a store to float32 in place. Training applies this after every
/// optimizer step, so checkpoints (which hold float32 arrays) restore the
/// live state exactly and resumed runs match uninterrupted ones.
inline void quantize_store_f32(ParamStore& store) {
  for (auto& [name, p] : store.params) {
    for (double& v : p.value.data) v = double(float(v));
    for (double& v : p.m.data) v = double(float(v));
    for (double& v : p.v.data) v = double(float(v));
  }
}

inline void save_checkpoint(const std::string& path,
                            const std::string& metadata_json,
                            const std::vector<const ParamStore*>& stores,
                            const std::vector<std::string>& prefixes) {
  using namespace ckpt_detail;
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u64(buf, metadata_json.size());
  buf.append(metadata_json);

  uint64_t count = 0;
  for (const auto* s : stores) count += 3 * s->params.size() + 1;
  put_u64(buf, count);
  for (size_t i = 0; i < stores.size(); ++i) {
    const std::string& pre = prefixes[i];
    put_named_tensor(buf, pre + "__step",
                     Tensor::scalar(double(stores[i]->step)));
    for (const auto& [name, p] : stores[i]->params) {
      put_named_tensor(buf, pre + name, p.value);
      put_named_tensor(buf, pre + "adam.m." + name, p.m);
      put_named_tensor(buf, pre + "adam.v." + name, p.v);
    }
  }
  uint32_t crc = uint32_t(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size())));
  put_u32(buf, crc);

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

/// Loads metadata and raw named arrays; the caller maps names back into
/// stores. Verifies magic, version, and checksum.
inline std::pair<std::string, std::vector<std::pair<std::string, Tensor>>>
load_checkpoint_raw(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw CheckpointError("checkpoint truncated");
  uint32_t stored_crc;
  {
    Reader tail{buf, buf.size() - 4};
    stored_crc = tail.u32();
  }
  uint32_t crc =
      uint32_t(crc32(0, reinterpret_cast<const Bytef*>(buf.data()),
                     uInt(buf.size() - 4)));
  if (crc != stored_crc) throw CheckpointError("checkpoint checksum mismatch");

  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4))
    throw CheckpointError("not a checkpoint file");
  if (r.u32() != kVersion) throw CheckpointError("checkpoint version mismatch");
  uint64_t mlen = r.u64();
  std::string metadata = r.bytes(size_t(mlen));
  uint64_t count = r.u64();
  std::vector<std::pair<std::string, Tensor>> arrays;
  for (uint64_t i = 0; i < count; ++i) arrays.push_back(get_named_tensor(r));
  return {std::move(metadata), std::move(arrays)};
}

inline void restore_store(ParamStore& store, const std::string& prefix,
                          const std::vector<std::pair<std::string, Tensor>>&
                              arrays) {
  for (const auto& [name, t] : arrays) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    if (rest == "__step") {
      store.step = int64_t(t.data[0]);
    } else if (rest.rfind("adam.m.", 0) == 0) {
      store.params.at(rest.substr(7)).m = t;
    } else if (rest.rfind("adam.v.", 0) == 0) {
      store.params.at(rest.substr(7)).v = t;
    } else {
      store.params.at(rest).value = t;
    }
  }
}

}  // namespace smartpaste

#endif  // SMARTPASTE_CHECKPOINT_HPP
