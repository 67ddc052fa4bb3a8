#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cbldm/nn/optim.hpp"
#include "cbldm/nn/tensor.hpp"

namespace cbldm {

// On-disk model snapshot. Little-endian throughout:
//   "CBLD" | version u32 | profile hash u64 | tensor count u32 | tensors...
// each tensor being name_len u16, name bytes, rank u8, dims u32 each, then
// raw float32 data. The three load failure modes are kept distinct: a wrong
// magic is a format error, an unsupported version a version error, and a
// short file a corruption error.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  uint64_t profile_hash = 0;
  std::vector<std::pair<std::string, TensorT<float>>> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Throws unless the file was written under the same profile hash. Every
// consumer calls this before touching shapes; there is no coercion path.
void require_profile_hash(const Checkpoint& ck, uint64_t expected,
                          const std::string& what);

Checkpoint checkpoint_from_store(const ParamStoreT<float>& store,
                                 uint64_t profile_hash);

// Strict: the checkpoint must carry exactly the store's names with matching
// shapes. Values are copied over in store order.
void load_into_store(const Checkpoint& ck, ParamStoreT<float>& store);

}  // namespace cbldm
