#include "cbldm/pipeline/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace cbldm {

namespace {

constexpr char kMagic[4] = {'C', 'B', 'L', 'D'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_bytes(std::FILE* f, const void* p, size_t n, const std::string& path) {
  require(std::fwrite(p, 1, n, f) == n, "checkpoint write failed: " + path);
}

void put_u16(std::FILE* f, uint16_t v, const std::string& path) {
  unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
  put_bytes(f, b, 2, path);
}

void put_u32(std::FILE* f, uint32_t v, const std::string& path) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  put_bytes(f, b, 4, path);
}

void put_u64(std::FILE* f, uint64_t v, const std::string& path) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  put_bytes(f, b, 8, path);
}

[[noreturn]] void truncated(const std::string& path, const std::string& where) {
  fail(strfmt("checkpoint corruption error: %s is truncated (while reading %s)",
              path.c_str(), where.c_str()));
}

void get_bytes(std::FILE* f, void* p, size_t n, const std::string& path,
               const std::string& where) {
  if (std::fread(p, 1, n, f) != n) truncated(path, where);
}

uint16_t get_u16(std::FILE* f, const std::string& path, const std::string& where) {
  unsigned char b[2];
  get_bytes(f, b, 2, path, where);
  return uint16_t(b[0] | (uint16_t(b[1]) << 8));
}

uint32_t get_u32(std::FILE* f, const std::string& path, const std::string& where) {
  unsigned char b[4];
  get_bytes(f, b, 4, path, where);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::FILE* f, const std::string& path, const std::string& where) {
  unsigned char b[8];
  get_bytes(f, b, 8, path, where);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, "cannot open checkpoint for writing: " + path);
  put_bytes(f.get(), kMagic, 4, path);
  put_u32(f.get(), ck.version, path);
  put_u64(f.get(), ck.profile_hash, path);
  put_u32(f.get(), uint32_t(ck.tensors.size()), path);
  for (const auto& [name, t] : ck.tensors) {
    require(name.size() <= 0xffff, "checkpoint: tensor name too long: " + name);
    require(t.shape.size() <= 0xff, "checkpoint: tensor rank too large: " + name);
    put_u16(f.get(), uint16_t(name.size()), path);
    put_bytes(f.get(), name.data(), name.size(), path);
    unsigned char rank = (unsigned char)(t.shape.size());
    put_bytes(f.get(), &rank, 1, path);
    size_t count = 1;
    for (int d : t.shape) {
      require(d > 0, "checkpoint: nonpositive dim in tensor " + name);
      put_u32(f.get(), uint32_t(d), path);
      count *= size_t(d);
    }
    require(count == t.data.size(), "checkpoint: shape/data mismatch in " + name);
    // float32 little-endian; memcpy per element keeps this alias-safe
    for (float v : t.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(f.get(), bits, path);
    }
  }
  require(std::fflush(f.get()) == 0, "checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, "cannot open checkpoint: " + path);

  char magic[4];
  get_bytes(f.get(), magic, 4, path, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    fail(strfmt("checkpoint format error: %s failed the magic check "
                "(expected CBLD)",
                path.c_str()));

  Checkpoint ck;
  ck.version = get_u32(f.get(), path, "version");
  if (ck.version != kCheckpointVersion)
    fail(strfmt("checkpoint version error: %s has version %u, this build "
                "reads version %u",
                path.c_str(), ck.version, kCheckpointVersion));

  ck.profile_hash = get_u64(f.get(), path, "profile hash");
  uint32_t count = get_u32(f.get(), path, "tensor count");
  require(count <= 100000,
          strfmt("checkpoint corruption error: %s declares %u tensors",
                 path.c_str(), count));
  ck.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string where = strfmt("tensor %u", i);
    uint16_t name_len = get_u16(f.get(), path, where + " name length");
    std::string name(name_len, '\0');
    get_bytes(f.get(), name.data(), name_len, path, where + " name");
    unsigned char rank;
    get_bytes(f.get(), &rank, 1, path, name + " rank");
    std::vector<int> shape(rank);
    size_t total = 1;
    for (int d = 0; d < int(rank); ++d) {
      uint32_t dim = get_u32(f.get(), path, name + " dims");
      if (dim == 0 || dim > (1u << 28))
        fail(strfmt("checkpoint corruption error: %s tensor %s has dim %u",
                    path.c_str(), name.c_str(), dim));
      shape[size_t(d)] = int(dim);
      total *= dim;
    }
    require(total <= (size_t(1) << 31),
            strfmt("checkpoint corruption error: %s tensor %s is implausibly "
                   "large",
                   path.c_str(), name.c_str()));
    TensorT<float> t = TensorT<float>::zeros(shape);
    for (size_t j = 0; j < total; ++j) {
      uint32_t bits = get_u32(f.get(), path, name + " data");
      std::memcpy(&t.data[j], &bits, 4);
    }
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void require_profile_hash(const Checkpoint& ck, uint64_t expected,
                          const std::string& what) {
  if (ck.profile_hash != expected)
    fail(strfmt("checkpoint profile mismatch: %s was written under profile "
                "hash %016llx but the active profile hashes to %016llx",
                what.c_str(), (unsigned long long)ck.profile_hash,
                (unsigned long long)expected));
}

Checkpoint checkpoint_from_store(const ParamStoreT<float>& store,
                                 uint64_t profile_hash) {
  Checkpoint ck;
  ck.profile_hash = profile_hash;
  ck.tensors.reserve(store.size());
  for (int i = 0; i < int(store.size()); ++i)
    ck.tensors.emplace_back(store.item(i).name, store.item(i).value);
  return ck;
}

void load_into_store(const Checkpoint& ck, ParamStoreT<float>& store) {
  require(ck.tensors.size() == store.size(),
          strfmt("checkpoint holds %d tensors, model expects %d",
                 int(ck.tensors.size()), int(store.size())));
  for (const auto& [name, t] : ck.tensors) {
    int idx = store.find(name);
    require(idx >= 0, "checkpoint tensor has no model parameter: " + name);
    TensorT<float>& dst = store.item(idx).value;
    require(t.shape == dst.shape, "checkpoint shape mismatch for " + name);
    dst.data = t.data;
  }
}

}  // namespace cbldm
