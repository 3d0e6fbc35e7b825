#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace subnetcl {

enum class Scenario { task_incremental, domain_incremental };

std::string_view to_string(Scenario scenario);
// Accepts "task", "domain", "task_incremental", "domain_incremental".
Scenario parse_scenario(std::string_view text);

// One binary value (0 or 1) per weight of a maskable layer, row-major.
using LayerMask = std::vector<std::uint8_t>;
// One LayerMask per maskable layer, in layer order.
using MaskSet = std::vector<LayerMask>;
// Real-valued importance scores, one vector per maskable layer.
using ScoreSet = std::vector<std::vector<double>>;

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);

// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    const std::vector<double>& storage() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

std::string shape_string(const Shape& shape);

}  // namespace subnetcl
