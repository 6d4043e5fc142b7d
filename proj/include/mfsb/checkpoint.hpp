#pragma once

#include <cstdint>
#include <string>

#include "mfsb/net.hpp"

namespace mfsb {

struct CheckpointMeta {
  std::string scenario;
  std::uint64_t seed = 0;
  int stage = 0;  // alternating stage pairs completed when saved
  int dim = 2;
  int hidden = 0;
};

// FNV-1a 64-bit hash; also used to checksum checkpoint payloads.
std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t seed = 14695981039346656037ULL);

// Binary snapshot of all five networks plus run metadata, checksummed and
// written atomically (temp file + rename).
void save_checkpoint(const std::string& path, const NetBundle& nets,
                     const CheckpointMeta& meta);

// Loads a snapshot, replacing `nets` (fresh optimizer moments, preserved step
// counters). Throws on missing file, bad magic, or checksum mismatch.
CheckpointMeta load_checkpoint(const std::string& path, NetBundle& nets);

}  // namespace mfsb
