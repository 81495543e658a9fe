#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dygrag/tensor.hpp"

namespace dygrag {

// Binary parameter container. Layout (little-endian):
//   magic "DYGC", uint32 version, uint32 entry_count, then per entry:
//   uint32 name_len, name bytes, uint32 ndim, uint64 dims..., float64 payload
// Writing the same parameters in the same order is byte-for-byte stable.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const NamedParams& params);

// Returns (name, tensor) entries in file order.
NamedParams load_checkpoint(const std::string& path);

// Copies payloads from `from` into matching names of `into`; throws on a
// missing name or shape mismatch.
void restore_params(NamedParams& into, const NamedParams& from);

}  // namespace dygrag
