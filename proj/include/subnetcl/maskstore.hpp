#pragma once

// Bitplane mask bank: task k's mask lives in bit (k mod 32) of plane k/32,
// so C[i] = sum_k M_k[i] * 2^(k mod 32) within each plane.
//
// Container layout (all integers little-endian):
//   "SMCL" | version u16 | T u32 | layer count u32
//   | per layer: rank u8, dims u32[rank]
//   | per layer, per plane: u32 elements, row-major

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "subnetcl/tensor.hpp"

namespace subnetcl::maskstore {

inline constexpr std::size_t kPlaneBits = 32;
inline constexpr std::uint16_t kFormatVersion = 1;

enum class ContainerErrorCode { truncated, bad_magic, bad_version, malformed, io };

class ContainerError : public std::runtime_error {
public:
    ContainerError(ContainerErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
    ContainerErrorCode code() const { return code_; }

private:
    ContainerErrorCode code_;
};

class CompressedMaskBank {
public:
    CompressedMaskBank() = default;
    explicit CompressedMaskBank(std::vector<Shape> layer_shapes);

    // Packs T >= 1 masks. Shapes default to flat vectors when omitted.
    static CompressedMaskBank compress(std::span<const MaskSet> masks, std::vector<Shape> layer_shapes = {});

    // Installs raw planes ([layer][plane][element]); throws std::invalid_argument
    // if they are inconsistent with the shapes or task count.
    static CompressedMaskBank from_planes(std::vector<Shape> layer_shapes,
                                          std::vector<std::vector<std::vector<std::uint32_t>>> planes,
                                          std::size_t task_count);

    std::size_t task_count() const { return task_count_; }
    std::size_t plane_count() const { return planes_.empty() ? 0 : planes_.front().size(); }
    std::size_t layer_count() const { return shapes_.size(); }
    const std::vector<Shape>& layer_shapes() const { return shapes_; }
    std::size_t element_total() const;
    const std::vector<std::uint32_t>& plane(std::size_t layer, std::size_t p) const { return planes_.at(layer).at(p); }

    MaskSet extract(std::size_t task) const;
    LayerMask extract_layer(std::size_t task, std::size_t layer) const;

    void append(const MaskSet& mask);
    CompressedMaskBank appended(const MaskSet& mask) const;

    // Bytes of plane data only (no header).
    std::size_t payload_bytes() const;

    // Empty string when every plane respects its bit budget.
    std::string audit() const;

    bool operator==(const CompressedMaskBank&) const = default;

private:
    void check_mask(const MaskSet& mask) const;

    std::vector<Shape> shapes_;
    // planes_[layer][plane][element]
    std::vector<std::vector<std::vector<std::uint32_t>>> planes_;
    std::size_t task_count_ = 0;
};

std::vector<std::byte> serialize(const CompressedMaskBank& bank);
CompressedMaskBank deserialize(std::span<const std::byte> bytes);

void save(const CompressedMaskBank& bank, const std::filesystem::path& path);
CompressedMaskBank load(const std::filesystem::path& path);

// Header bytes for a bank with the given layer shapes.
std::size_t header_bytes(const std::vector<Shape>& shapes);

// Payload size ratios against storing every task's mask uncompressed.
struct StorageRatios {
    double vs_float32 = 0.0;  // one 32-bit value per element per task
    double vs_uint8 = 0.0;    // one byte per element per task
    // vs_float32 with every allocated plane fully occupied (32 tasks per plane)
    double plane_capacity = 0.0;
};

StorageRatios storage_ratios(const CompressedMaskBank& bank);

}  // namespace subnetcl::maskstore
