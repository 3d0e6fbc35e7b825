#include <doctest.h>

#include <cmath>
#include <limits>

#include "subnetcl/binio.hpp"
#include "subnetcl/tensor.hpp"

using namespace subnetcl;

TEST_SUITE("binio") {

TEST_CASE("little-endian integers and doubles roundtrip")
{
    binio::ByteWriter out;
    out.put(std::uint16_t{0x0102});
    out.put(std::uint32_t{0xA1B2C3D4});
    out.put(std::int64_t{-5});
    out.put_f64(-0.0);
    out.put_f64(std::numeric_limits<double>::denorm_min());
    out.put_string("abc");
    const auto bytes = out.take();
    CHECK(bytes[0] == std::byte{0x02});
    CHECK(bytes[1] == std::byte{0x01});
    CHECK(bytes[2] == std::byte{0xD4});
    binio::ByteReader in(bytes);
    CHECK(in.get<std::uint16_t>() == 0x0102);
    CHECK(in.get<std::uint32_t>() == 0xA1B2C3D4u);
    CHECK(in.get<std::int64_t>() == -5);
    const double z = in.get_f64();
    CHECK(z == 0.0);
    CHECK(std::signbit(z));
    CHECK(in.get_f64() == std::numeric_limits<double>::denorm_min());
    CHECK(in.get_string() == "abc");
    CHECK(in.at_end());
    CHECK_THROWS_AS(in.get<std::uint8_t>(), binio::TruncatedError);
}

TEST_CASE("tensor basics")
{
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK(element_count({2, 3, 4}) == 24);
    CHECK(shape_string({2, 3}) .find('3') != std::string::npos);
    CHECK_THROWS(Tensor({2, 2}, std::vector<double>{1.0}));
    CHECK(parse_scenario("domain") == Scenario::domain_incremental);
    CHECK(to_string(Scenario::task_incremental) == "task");
    CHECK_THROWS_AS(parse_scenario("both"), std::invalid_argument);
}

}
