#include <doctest.h>

#include <filesystem>
#include <random>

#include "support.hpp"
#include "subnetcl/binio.hpp"
#include "subnetcl/maskstore.hpp"

using namespace subnetcl;
using namespace subnetcl::maskstore;
using namespace testsupport;

namespace {

std::vector<Shape> random_shapes(std::mt19937_64& rng)
{
    std::vector<Shape> shapes(1 + rng() % 3);
    for (auto& shape : shapes) {
        shape.resize(1 + rng() % 4);
        for (auto& d : shape) {
            d = 1 + rng() % 5;
        }
    }
    return shapes;
}

std::vector<MaskSet> random_bank(const std::vector<Shape>& shapes, std::size_t tasks, std::mt19937_64& rng)
{
    std::vector<MaskSet> masks(tasks);
    for (auto& m : masks) {
        for (const auto& shape : shapes) {
            m.push_back(random_mask(element_count(shape), rng, 0.4));
        }
    }
    return masks;
}

std::vector<std::byte> bytes_of(std::initializer_list<int> values)
{
    std::vector<std::byte> out;
    for (int v : values) {
        out.push_back(static_cast<std::byte>(v));
    }
    return out;
}

}  // namespace

TEST_SUITE("maskstore") {

TEST_CASE("planes hold sum_k M_k[i] * 2^(k mod 32)")
{
    std::mt19937_64 rng(6);
    const std::vector<Shape> shapes{{7}, {2, 3}};
    const auto masks = random_bank(shapes, 70, rng);
    const auto bank = CompressedMaskBank::compress(masks, shapes);
    REQUIRE(bank.plane_count() == 3);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        for (std::size_t p = 0; p < 3; ++p) {
            for (std::size_t i = 0; i < element_count(shapes[l]); ++i) {
                std::uint64_t expected = 0;
                for (std::size_t k = p * 32; k < std::min<std::size_t>(70, (p + 1) * 32); ++k) {
                    expected += static_cast<std::uint64_t>(masks[k][l][i]) << (k % 32);
                }
                REQUIRE(bank.plane(l, p)[i] == expected);
            }
        }
    }
}

TEST_CASE("random roundtrips through the container are lossless")
{
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 150; ++trial) {
        const auto shapes = random_shapes(rng);
        const std::size_t tasks = 1 + rng() % 100;
        const auto masks = random_bank(shapes, tasks, rng);
        const auto bank = CompressedMaskBank::compress(masks, shapes);
        const auto back = deserialize(serialize(bank));
        REQUIRE(back == bank);
        REQUIRE(back.task_count() == tasks);
        for (std::size_t k = 0; k < tasks; ++k) {
            REQUIRE(back.extract(k) == masks[k]);
        }
    }
}

TEST_CASE("append grows planes every 32 tasks")
{
    const std::vector<Shape> shapes{{4}};
    CompressedMaskBank bank(shapes);
    CHECK(bank.plane_count() == 0);
    std::mt19937_64 rng(1);
    for (std::size_t k = 0; k < 33; ++k) {
        bank.append({random_mask(4, rng)});
        CHECK(bank.plane_count() == k / 32 + 1);
    }
    CHECK(bank.audit().empty());
    const auto appended = bank.appended({LayerMask{1, 1, 1, 1}});
    CHECK(appended.task_count() == 34);
    CHECK(bank.task_count() == 33);
}

TEST_CASE("byte layout of a one-task container")
{
    const std::vector<Shape> shapes{{2}};
    const auto bank = CompressedMaskBank::compress(std::vector<MaskSet>{{LayerMask{1, 0}}}, shapes);
    const auto expected = bytes_of({'S', 'M', 'C', 'L', 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 2, 0, 0, 0,
                                    1, 0, 0, 0, 0, 0, 0, 0});
    CHECK(serialize(bank) == expected);
    CHECK(header_bytes(shapes) + bank.payload_bytes() == expected.size());
}

TEST_CASE("storage ratios at T = 32")
{
    std::mt19937_64 rng(3);
    const std::vector<Shape> shapes{{100, 10}};
    const auto bank = CompressedMaskBank::compress(random_bank(shapes, 32, rng), shapes);
    const auto ratios = storage_ratios(bank);
    CHECK(ratios.vs_float32 == 32.0);
    CHECK(ratios.vs_uint8 == 8.0);
    CHECK(ratios.plane_capacity == 32.0);
}

TEST_CASE("malformed containers are rejected with a reason")
{
    const std::vector<Shape> shapes{{3}};
    const auto good = serialize(CompressedMaskBank::compress(std::vector<MaskSet>{{LayerMask{1, 0, 1}}}, shapes));

    auto expect_code = [](std::vector<std::byte> bytes, ContainerErrorCode code, const char* text) {
        try {
            (void)deserialize(bytes);
            FAIL("expected a container error");
        } catch (const ContainerError& err) {
            CHECK(err.code() == code);
            CHECK(std::string(err.what()).find(text) != std::string::npos);
        }
    };
    auto bad_magic = good;
    bad_magic[0] = std::byte{'X'};
    expect_code(bad_magic, ContainerErrorCode::bad_magic, "not a mask container");
    auto truncated = good;
    truncated.pop_back();
    expect_code(truncated, ContainerErrorCode::truncated, "truncated");
    expect_code(std::vector<std::byte>(good.begin(), good.begin() + 3), ContainerErrorCode::truncated, "truncated");
    auto version = good;
    version[4] = std::byte{9};
    expect_code(version, ContainerErrorCode::bad_version, "version");
    auto trailing = good;
    trailing.push_back(std::byte{0});
    expect_code(trailing, ContainerErrorCode::malformed, "trailing");
    // Bit 1 set in a one-task bank.
    auto stray = good;
    stray[stray.size() - 4] = std::byte{2};
    expect_code(stray, ContainerErrorCode::malformed, "");
}

TEST_CASE("invalid masks and task ids")
{
    CompressedMaskBank bank(std::vector<Shape>{{3}});
    try {
        bank.append({LayerMask{1, 2, 0}});
        FAIL("expected a non-binary error");
    } catch (const std::invalid_argument& err) {
        CHECK(std::string(err.what()).find("1") != std::string::npos);
    }
    CHECK_THROWS_AS(bank.append({LayerMask{1, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(bank.append({LayerMask{1, 0, 1}, LayerMask{1}}), std::invalid_argument);
    bank.append({LayerMask{1, 0, 1}});
    CHECK_THROWS_AS((void)bank.extract(1), std::out_of_range);
    CHECK_THROWS_AS((void)bank.extract_layer(0, 1), std::out_of_range);
}

TEST_CASE("save and load through a file")
{
    std::mt19937_64 rng(12);
    const std::vector<Shape> shapes{{5, 5}};
    const auto bank = CompressedMaskBank::compress(random_bank(shapes, 40, rng), shapes);
    const auto path = std::filesystem::temp_directory_path() / "subnetcl_maskstore_test.smcl";
    save(bank, path);
    CHECK(load(path) == bank);
    std::filesystem::remove(path);
    CHECK_THROWS_AS((void)load(path), ContainerError);
}

}
