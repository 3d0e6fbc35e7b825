#pragma once

// Little-endian fixed-width encoding shared by the on-disk containers.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace subnetcl::binio {

// Raised when a reader runs past the end of its buffer.
class TruncatedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ByteWriter {
public:
    void put_bytes(std::span<const std::byte> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }
    void put_tag(std::string_view tag) { put_bytes(std::as_bytes(std::span(tag.data(), tag.size()))); }

    template <typename T>
    void put(T value)
    {
        static_assert(std::is_integral_v<T>);
        using U = std::make_unsigned_t<T>;
        auto bits = static_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            buffer_.push_back(static_cast<std::byte>(bits & 0xFFu));
            if constexpr (sizeof(T) > 1) {
                bits = static_cast<U>(bits >> 8);
            }
        }
    }

    void put_f64(double value) { put(std::bit_cast<std::uint64_t>(value)); }

    void put_string(std::string_view text)
    {
        put(static_cast<std::uint32_t>(text.size()));
        put_tag(text);
    }

    void put_blob(std::span<const std::byte> bytes)
    {
        put(static_cast<std::uint64_t>(bytes.size()));
        put_bytes(bytes);
    }

    const std::vector<std::byte>& bytes() const { return buffer_; }
    std::vector<std::byte> take() { return std::move(buffer_); }

private:
    std::vector<std::byte> buffer_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    std::size_t remaining() const { return bytes_.size() - offset_; }
    bool at_end() const { return offset_ == bytes_.size(); }

    std::span<const std::byte> get_bytes(std::size_t count)
    {
        require(count);
        auto out = bytes_.subspan(offset_, count);
        offset_ += count;
        return out;
    }

    template <typename T>
    T get()
    {
        static_assert(std::is_integral_v<T>);
        using U = std::make_unsigned_t<T>;
        auto raw = get_bytes(sizeof(T));
        U bits = 0;
        for (std::size_t i = sizeof(T); i-- > 0;) {
            if constexpr (sizeof(T) > 1) {
                bits = static_cast<U>(bits << 8);
            }
            bits = static_cast<U>(bits | static_cast<U>(std::to_integer<unsigned>(raw[i])));
        }
        return static_cast<T>(bits);
    }

    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

    std::string get_string()
    {
        const auto length = get<std::uint32_t>();
        auto raw = get_bytes(length);
        return {reinterpret_cast<const char*>(raw.data()), raw.size()};
    }

    std::span<const std::byte> get_blob()
    {
        const auto length = get<std::uint64_t>();
        if (length > remaining()) {
            throw TruncatedError("truncated container");
        }
        return get_bytes(static_cast<std::size_t>(length));
    }

private:
    void require(std::size_t count) const
    {
        if (count > remaining()) {
            throw TruncatedError("truncated container");
        }
    }

    std::span<const std::byte> bytes_;
    std::size_t offset_ = 0;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace subnetcl::binio
