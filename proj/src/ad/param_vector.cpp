#include "rppgm/ad/param_vector.hpp"

#include <algorithm>
#include <cmath>

namespace rppgm::ad {

ParamVector ParamVector::zeros_like() const {
    ParamVector out;
    out.values.assign(values.size(), 0.0);
    out.blocks = blocks;
    return out;
}

Tensor ParamVector::block_tensor(std::size_t block) const {
    const ParamBlock& b = blocks.at(block);
    auto first = values.begin() + static_cast<std::ptrdiff_t>(b.offset);
    return Tensor(b.shape, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(b.size())));
}

void ParamVector::set_block(std::size_t block, std::span<const double> data) {
    const ParamBlock& b = blocks.at(block);
    if (data.size() != b.size()) throw ShapeError("ParamVector::set_block: size mismatch");
    std::copy(data.begin(), data.end(), values.begin() + static_cast<std::ptrdiff_t>(b.offset));
}

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

ParamVector finite_difference_grad(const std::function<double(const ParamVector&)>& f, const ParamVector& at,
                                   double step) {
    if (!(step > 0.0)) throw Error("finite_difference_grad: step must be positive");
    ParamVector grad = at.zeros_like();
    ParamVector probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double x = at.values[i];
        probe.values[i] = x + step;
        const double fp = f(probe);
        probe.values[i] = x - step;
        const double fm = f(probe);
        probe.values[i] = x;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_difference_grad: non-finite evaluation at coordinate " + std::to_string(i));
        }
        grad.values[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

} // namespace rppgm::ad
