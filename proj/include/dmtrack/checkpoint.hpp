#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dmtrack/tensor.hpp"

namespace dmtrack {

// Flat binary tensor container: magic "DMTK", format version u32, then
// back-to-back records of {name length u32, UTF-8 name, rank u32, dims u64...,
// raw f64 data}. All integers and doubles little-endian. Round trips are
// bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& records);

// Reads every record. Throws DataError on unopenable, truncated, or malformed
// files and on unknown format versions.
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

// Copies stored values into the given live tensors, matched by name. Records
// in the file that no destination asks for are ignored (a trainer checkpoint
// carries optimizer state alongside model weights); a destination name missing
// from the file or stored with a different shape is a DataError.
void load_checkpoint_into(const std::string& path,
                          const std::vector<std::pair<std::string, Tensor>>& dest);

}  // namespace dmtrack
