#include "subnetcl/maskstore.hpp"

#include <string_view>

#include "subnetcl/binio.hpp"

namespace subnetcl::maskstore {

namespace {

constexpr std::string_view kMagic = "SMCL";

}  // namespace

CompressedMaskBank::CompressedMaskBank(std::vector<Shape> layer_shapes)
    : shapes_(std::move(layer_shapes)), planes_(shapes_.size())
{
}

CompressedMaskBank CompressedMaskBank::compress(std::span<const MaskSet> masks, std::vector<Shape> layer_shapes)
{
    if (masks.empty()) {
        throw std::invalid_argument("compress: at least one mask is required");
    }
    if (layer_shapes.empty()) {
        for (const auto& layer : masks.front()) {
            layer_shapes.push_back({layer.size()});
        }
    }
    CompressedMaskBank bank(std::move(layer_shapes));
    for (const auto& mask : masks) {
        bank.append(mask);
    }
    return bank;
}

CompressedMaskBank CompressedMaskBank::from_planes(std::vector<Shape> layer_shapes,
                                                   std::vector<std::vector<std::vector<std::uint32_t>>> planes,
                                                   std::size_t task_count)
{
    if (planes.size() != layer_shapes.size()) {
        throw std::invalid_argument("plane layer count does not match shape manifest");
    }
    CompressedMaskBank bank(std::move(layer_shapes));
    bank.planes_ = std::move(planes);
    bank.task_count_ = task_count;
    if (auto problem = bank.audit(); !problem.empty()) {
        throw std::invalid_argument(problem);
    }
    return bank;
}

std::size_t CompressedMaskBank::element_total() const
{
    std::size_t total = 0;
    for (const auto& shape : shapes_) {
        total += element_count(shape);
    }
    return total;
}

void CompressedMaskBank::check_mask(const MaskSet& mask) const
{
    if (mask.size() != shapes_.size()) {
        throw std::invalid_argument("mask has " + std::to_string(mask.size()) + " layers, bank expects "
                                    + std::to_string(shapes_.size()));
    }
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        const std::size_t expected = element_count(shapes_[l]);
        if (mask[l].size() != expected) {
            throw std::invalid_argument("mask shape mismatch in layer " + std::to_string(l) + ": expected "
                                        + std::to_string(expected) + " elements, got "
                                        + std::to_string(mask[l].size()));
        }
        for (std::size_t i = 0; i < mask[l].size(); ++i) {
            if (mask[l][i] > 1) {
                throw std::invalid_argument("non-binary mask value " + std::to_string(mask[l][i]) + " at layer "
                                            + std::to_string(l) + " position " + std::to_string(i));
            }
        }
    }
}

void CompressedMaskBank::append(const MaskSet& mask)
{
    check_mask(mask);
    const std::size_t bit = task_count_ % kPlaneBits;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        auto& layer_planes = planes_[l];
        if (bit == 0) {
            layer_planes.emplace_back(mask[l].size(), 0u);
        }
        auto& plane = layer_planes.back();
        for (std::size_t i = 0; i < plane.size(); ++i) {
            plane[i] |= static_cast<std::uint32_t>(mask[l][i]) << bit;
        }
    }
    ++task_count_;
}

CompressedMaskBank CompressedMaskBank::appended(const MaskSet& mask) const
{
    CompressedMaskBank out = *this;
    out.append(mask);
    return out;
}

LayerMask CompressedMaskBank::extract_layer(std::size_t task, std::size_t layer) const
{
    if (task >= task_count_) {
        throw std::out_of_range("task id " + std::to_string(task) + " out of range (bank holds "
                                + std::to_string(task_count_) + " tasks)");
    }
    const auto& plane = planes_.at(layer).at(task / kPlaneBits);
    const std::size_t bit = task % kPlaneBits;
    LayerMask out(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) {
        out[i] = static_cast<std::uint8_t>((plane[i] >> bit) & 1u);
    }
    return out;
}

MaskSet CompressedMaskBank::extract(std::size_t task) const
{
    if (task >= task_count_) {
        throw std::out_of_range("task id " + std::to_string(task) + " out of range (bank holds "
                                + std::to_string(task_count_) + " tasks)");
    }
    MaskSet out;
    out.reserve(shapes_.size());
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        out.push_back(extract_layer(task, l));
    }
    return out;
}

std::size_t CompressedMaskBank::payload_bytes() const
{
    return element_total() * sizeof(std::uint32_t) * plane_count();
}

std::string CompressedMaskBank::audit() const
{
    const std::size_t expected_planes = (task_count_ + kPlaneBits - 1) / kPlaneBits;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        if (planes_[l].size() != expected_planes) {
            return "layer " + std::to_string(l) + " has " + std::to_string(planes_[l].size()) + " planes, expected "
                   + std::to_string(expected_planes);
        }
        for (std::size_t p = 0; p < planes_[l].size(); ++p) {
            const std::size_t bits = std::min(kPlaneBits, task_count_ - p * kPlaneBits);
            const std::uint64_t bound = std::uint64_t{1} << bits;
            const auto& plane = planes_[l][p];
            if (plane.size() != element_count(shapes_[l])) {
                return "layer " + std::to_string(l) + " plane " + std::to_string(p) + " has wrong element count";
            }
            for (std::size_t i = 0; i < plane.size(); ++i) {
                if (plane[i] >= bound) {
                    return "layer " + std::to_string(l) + " plane " + std::to_string(p) + " element "
                           + std::to_string(i) + " uses bits beyond task count";
                }
            }
        }
    }
    return {};
}

std::size_t header_bytes(const std::vector<Shape>& shapes)
{
    std::size_t bytes = kMagic.size() + 2 + 4 + 4;
    for (const auto& shape : shapes) {
        bytes += 1 + 4 * shape.size();
    }
    return bytes;
}

StorageRatios storage_ratios(const CompressedMaskBank& bank)
{
    StorageRatios ratios;
    const auto payload = static_cast<double>(bank.payload_bytes());
    if (payload == 0.0) {
        return ratios;
    }
    const auto elements = static_cast<double>(bank.element_total());
    const auto tasks = static_cast<double>(bank.task_count());
    ratios.vs_float32 = tasks * elements * 4.0 / payload;
    ratios.vs_uint8 = tasks * elements / payload;
    ratios.plane_capacity = static_cast<double>(kPlaneBits * bank.plane_count()) * elements * 4.0 / payload;
    return ratios;
}

std::vector<std::byte> serialize(const CompressedMaskBank& bank)
{
    binio::ByteWriter out;
    out.put_tag(kMagic);
    out.put(kFormatVersion);
    out.put(static_cast<std::uint32_t>(bank.task_count()));
    out.put(static_cast<std::uint32_t>(bank.layer_count()));
    for (const auto& shape : bank.layer_shapes()) {
        out.put(static_cast<std::uint8_t>(shape.size()));
        for (std::size_t d : shape) {
            out.put(static_cast<std::uint32_t>(d));
        }
    }
    for (std::size_t l = 0; l < bank.layer_count(); ++l) {
        for (std::size_t p = 0; p < bank.plane_count(); ++p) {
            for (std::uint32_t v : bank.plane(l, p)) {
                out.put(v);
            }
        }
    }
    return out.take();
}

CompressedMaskBank deserialize(std::span<const std::byte> bytes)
{
    try {
        binio::ByteReader in(bytes);
        auto magic = in.get_bytes(kMagic.size());
        if (std::string_view(reinterpret_cast<const char*>(magic.data()), magic.size()) != kMagic) {
            throw ContainerError(ContainerErrorCode::bad_magic, "not a mask container");
        }
        const auto version = in.get<std::uint16_t>();
        if (version != kFormatVersion) {
            throw ContainerError(ContainerErrorCode::bad_version,
                                 "unsupported mask container version " + std::to_string(version));
        }
        const auto tasks = in.get<std::uint32_t>();
        const auto layers = in.get<std::uint32_t>();
        std::vector<Shape> shapes;
        for (std::uint32_t l = 0; l < layers; ++l) {
            const auto rank = in.get<std::uint8_t>();
            Shape shape;
            for (std::uint8_t d = 0; d < rank; ++d) {
                shape.push_back(in.get<std::uint32_t>());
            }
            shapes.push_back(std::move(shape));
        }
        const std::size_t plane_count = (tasks + kPlaneBits - 1) / kPlaneBits;
        std::size_t needed = 0;
        for (const auto& shape : shapes) {
            needed += element_count(shape) * plane_count * sizeof(std::uint32_t);
        }
        if (needed > in.remaining()) {
            throw ContainerError(ContainerErrorCode::truncated, "truncated container");
        }

        std::vector<std::vector<std::vector<std::uint32_t>>> planes(layers);
        for (std::uint32_t l = 0; l < layers; ++l) {
            const std::size_t n = element_count(shapes[l]);
            for (std::size_t p = 0; p < plane_count; ++p) {
                std::vector<std::uint32_t> plane(n);
                for (std::size_t i = 0; i < n; ++i) {
                    plane[i] = in.get<std::uint32_t>();
                }
                planes[l].push_back(std::move(plane));
            }
        }
        if (!in.at_end()) {
            throw ContainerError(ContainerErrorCode::malformed, "trailing bytes after mask container payload");
        }
        try {
            return CompressedMaskBank::from_planes(std::move(shapes), std::move(planes), tasks);
        } catch (const std::invalid_argument& err) {
            throw ContainerError(ContainerErrorCode::malformed, err.what());
        }
    } catch (const binio::TruncatedError&) {
        throw ContainerError(ContainerErrorCode::truncated, "truncated container");
    }
}

void save(const CompressedMaskBank& bank, const std::filesystem::path& path)
{
    try {
        binio::write_file(path, serialize(bank));
    } catch (const std::runtime_error& err) {
        throw ContainerError(ContainerErrorCode::io, err.what());
    }
}

CompressedMaskBank load(const std::filesystem::path& path)
{
    std::vector<std::byte> bytes;
    try {
        bytes = binio::read_file(path);
    } catch (const std::runtime_error& err) {
        throw ContainerError(ContainerErrorCode::io, err.what());
    }
    return deserialize(bytes);
}

}  // namespace subnetcl::maskstore
