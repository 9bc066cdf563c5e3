#include "rppgm/ad/tensor.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "rppgm/ad/tape.hpp"

namespace rppgm::ad {

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (element_count(shape_) != values_.size()) {
        throw ShapeError("tensor: shape " + to_string(shape_) + " does not match " + std::to_string(values_.size()) +
                         " values");
    }
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = element_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows(): tensor of shape " + to_string(shape_) + " is not rank-2");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols(): tensor of shape " + to_string(shape_) + " is not rank-2");
    return shape_[1];
}

double Tensor::item() const {
    if (values_.size() != 1) throw ShapeError("item(): tensor of shape " + to_string(shape_) + " is not a scalar");
    return values_[0];
}

namespace {

Tape* common_tape(std::span<const Tensor* const> inputs, Op op) {
    Tape* tape = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->tape()) continue;
        if (tape && tape != t->tape()) {
            throw Error(std::string(op_name(op)) + ": inputs belong to different tapes");
        }
        tape = t->tape();
    }
    return tape;
}

Tensor apply_op(Op op, std::span<const Tensor* const> inputs, const OpParams& params = {}) {
    Tape* tape = common_tape(inputs, op);
    std::array<const Shape*, 8> shapes_buf{};
    std::array<const std::vector<double>*, 8> values_buf{};
    std::vector<const Shape*> shapes_vec;
    std::vector<const std::vector<double>*> values_vec;
    std::span<const Shape* const> shapes;
    std::span<const std::vector<double>* const> values;
    if (inputs.size() <= shapes_buf.size()) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            shapes_buf[i] = &inputs[i]->shape();
            values_buf[i] = &inputs[i]->data();
        }
        shapes = std::span(shapes_buf.data(), inputs.size());
        values = std::span(values_buf.data(), inputs.size());
    } else {
        for (const Tensor* t : inputs) {
            shapes_vec.push_back(&t->shape());
            values_vec.push_back(&t->data());
        }
        shapes = shapes_vec;
        values = values_vec;
    }

    Shape out_shape;
    std::vector<double> out;
    evaluate_op(op, params, shapes, values, out_shape, out);

    for (double v : out) {
        if (!std::isfinite(v)) {
            const NodeId id = tape ? tape->size() : kNoNode;
            std::string where = tape ? "node " + std::to_string(id) : std::string("constant expression");
            throw NonFiniteError(std::string(op_name(op)) + ": non-finite value produced at " + where, id);
        }
    }
    if (!tape) return Tensor(std::move(out_shape), std::move(out));
    return tape->record(op, inputs, params, std::move(out_shape), std::move(out));
}

Tensor unary(Op op, const Tensor& a, const OpParams& params = {}) {
    const Tensor* in[] = {&a};
    return apply_op(op, in, params);
}

Tensor binary(Op op, const Tensor& a, const Tensor& b) {
    const Tensor* in[] = {&a, &b};
    return apply_op(op, in);
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(Op::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Op::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Op::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(Op::Div, a, b); }
Tensor scale(const Tensor& a, double factor) { return unary(Op::Scale, a, {.p0 = factor}); }
Tensor neg(const Tensor& a) { return unary(Op::Neg, a); }
Tensor matmul(const Tensor& a, const Tensor& b) { return binary(Op::MatMul, a, b); }

Tensor affine(const Tensor& weight, const Tensor& x, const Tensor& bias) {
    const Tensor* in[] = {&weight, &x, &bias};
    return apply_op(Op::Affine, in);
}

Tensor affine(const Tensor& weight, const Tensor& x) {
    const Tensor* in[] = {&weight, &x};
    return apply_op(Op::Affine, in);
}

Tensor tanh(const Tensor& a) { return unary(Op::Tanh, a); }
Tensor relu(const Tensor& a) { return unary(Op::Relu, a); }
Tensor leaky_relu(const Tensor& a, double slope) { return unary(Op::LeakyRelu, a, {.p0 = slope}); }
Tensor exp(const Tensor& a) { return unary(Op::Exp, a); }
Tensor log(const Tensor& a) { return unary(Op::Log, a); }
Tensor square(const Tensor& a) { return unary(Op::Square, a); }
Tensor sin(const Tensor& a) { return unary(Op::Sin, a); }
Tensor cos(const Tensor& a) { return unary(Op::Cos, a); }
Tensor sum(const Tensor& a) { return unary(Op::Sum, a); }
Tensor mean(const Tensor& a) { return unary(Op::Mean, a); }
Tensor clamp(const Tensor& a, double lo, double hi) { return unary(Op::Clamp, a, {.p0 = lo, .p1 = hi}); }

Tensor concat(std::span<const Tensor> parts) {
    std::vector<const Tensor*> in;
    in.reserve(parts.size());
    for (const auto& p : parts) in.push_back(&p);
    return apply_op(Op::Concat, in);
}

Tensor concat(const Tensor& a, const Tensor& b) { return binary(Op::Concat, a, b); }

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
    return unary(Op::Slice, a, {.i0 = begin, .i1 = end});
}

} // namespace rppgm::ad
