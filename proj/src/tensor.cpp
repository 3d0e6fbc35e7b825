#include "subnetcl/tensor.hpp"

#include <functional>
#include <numeric>
#include <stdexcept>

namespace subnetcl {

std::string_view to_string(Scenario scenario)
{
    return scenario == Scenario::task_incremental ? "task" : "domain";
}

Scenario parse_scenario(std::string_view text)
{
    if (text == "task" || text == "task_incremental") {
        return Scenario::task_incremental;
    }
    if (text == "domain" || text == "domain_incremental") {
        return Scenario::domain_incremental;
    }
    throw std::invalid_argument("unknown scenario '" + std::string(text) + "' (expected task|domain)");
}

std::size_t element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill)
{
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values))
{
    if (values_.size() != element_count(shape_)) {
        throw std::invalid_argument("tensor value count " + std::to_string(values_.size())
                                    + " does not match shape " + shape_string(shape_));
    }
}

std::string shape_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            out += "x";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

}  // namespace subnetcl
