#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "rppgm/ad/tensor.hpp"

namespace rppgm::ad {

enum class ParamKind { Weight, Bias, LogStd };

// Location of one parameter array inside a flat vector.
struct ParamBlock {
    std::size_t layer = 0;
    ParamKind kind = ParamKind::Weight;
    std::size_t offset = 0;
    Shape shape;

    std::size_t size() const { return element_count(shape); }
    bool operator==(const ParamBlock&) const = default;
};

// All trainable parameters of one network, flattened in a fixed order
// (layer by layer: weight then bias; log-std last).
struct ParamVector {
    std::vector<double> values;
    std::vector<ParamBlock> blocks;

    std::size_t size() const noexcept { return values.size(); }
    // Same layout, all zeros.
    ParamVector zeros_like() const;
    Tensor block_tensor(std::size_t block) const;
    void set_block(std::size_t block, std::span<const double> data);

    bool operator==(const ParamVector&) const = default;
};

double l2_norm(const std::vector<double>& v);

// Central differences (f(x + step e_i) - f(x - step e_i)) / (2 step) for every
// coordinate i. Throws NumericError naming the coordinate when f is not finite.
ParamVector finite_difference_grad(const std::function<double(const ParamVector&)>& f, const ParamVector& at,
                                   double step);

} // namespace rppgm::ad
