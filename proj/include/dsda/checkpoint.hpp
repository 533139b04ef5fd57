#pragma once

#include <filesystem>

#include "dsda/mkmmd.hpp"
#include "dsda/siamese.hpp"

namespace dsda {

/// Network parameters plus the kernel family they were trained against.
struct Checkpoint {
  DsdaParams params;
  KernelFamily family;
};

// DSCK v1 layout (little-endian):
//   "DSCK" | u32 version=1 | u32 record count
//   per record: u32 name length | name bytes | u32 rank | u32 dims[rank] | f64 payload
//   u32 kernel count | f64 bandwidths | f64 beta
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dsda
