#pragma once

// Experiment checkpoint container. Layout (little-endian):
//
//   "SMCK" | u16 version | string config echo | u64 tasks done
//   model: per maskable layer weights + bias, per normalization layer
//          running mean/var + scale/shift, per head weights + bias,
//          u8 normalization frozen, u8 head frozen
//   scores | blob mask bank (SMCL) | blob statistics bank
//   accuracy matrices (oracle, inferred, latest) | per-task epoch logs
//
// Real vectors are u64 length + f64 values. No timestamps are stored, so
// identical runs give identical files.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "subnetcl/evalkit.hpp"

namespace subnetcl::checkpoint {

inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::byte> encode(const evalkit::Experiment& experiment);
evalkit::Experiment decode(std::span<const std::byte> bytes);

void save(const evalkit::Experiment& experiment, const std::filesystem::path& path);
evalkit::Experiment load(const std::filesystem::path& path);

}  // namespace subnetcl::checkpoint
