#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "strucdec/adam.hpp"
#include "strucdec/hybrid_sampler.hpp"
#include "strucdec/model.hpp"

namespace strucdec {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "SDAE", u32 version, u32 header length + JSON header (config, step,
/// optimizer scalars, bank layout, tensor count), then per tensor: u32 name
/// length + name, u32 rank, u32 extents, little-endian f32 values.
struct Checkpoint {
  Model<float> model;
  AdamState<float> adam;
  std::uint64_t step = 0;
  std::optional<LatentBank> bank;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace strucdec
