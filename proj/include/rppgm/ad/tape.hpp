#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "rppgm/ad/tensor.hpp"

namespace rppgm::ad {

enum class Op : std::uint8_t {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Neg,
    MatMul,
    Affine,
    Tanh,
    Relu,
    LeakyRelu,
    Exp,
    Log,
    Square,
    Sin,
    Cos,
    Sum,
    Mean,
    Clamp,
    Concat,
    Slice,
};

std::string_view op_name(Op op);

struct OpParams {
    double p0 = 0.0;
    double p1 = 0.0;
    std::size_t i0 = 0;
    std::size_t i1 = 0;
};

struct Node {
    Op op = Op::Constant;
    std::vector<NodeId> inputs;
    OpParams params;
    Shape shape;
    std::vector<double> value;
};

// Records primitive operations in execution order. Every node's inputs have
// smaller ids than the node itself, so a single reverse sweep in tape order is
// a valid (and fixed-order, hence bit-reproducible) backward pass.
//
// A tape is owned by one thread. Tensors it produces point back into it, so
// the tape must outlive them and cannot be moved.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // New differentiable leaf holding a copy of value's data.
    Tensor variable(const Tensor& value);
    // Constant node (no gradient is ever requested for it).
    Tensor constant(const Tensor& value);

    std::size_t size() const noexcept { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_.at(id); }
    bool is_leaf(const Tensor& t) const;

    // Reverse-mode gradient of a single-element output with respect to leaves.
    std::vector<Tensor> gradient(const Tensor& output, std::span<const Tensor> wrt) const;
    // Vector-Jacobian product: seed has the output's element count.
    std::vector<Tensor> vjp(const Tensor& output, std::span<const double> seed, std::span<const Tensor> wrt) const;

    // Re-executes every recorded op from its inputs' recorded values and
    // reports whether all outputs are reproduced bit-for-bit.
    bool replay_matches() const;

    // Internal: appends a node for an op whose inputs are already validated.
    Tensor record(Op op, std::span<const Tensor* const> inputs, const OpParams& params, Shape shape,
                  std::vector<double> value);

private:
    NodeId lift(const Tensor& t);

    std::vector<Node> nodes_;
};

// Free-function form of Tape::gradient.
std::vector<Tensor> backward_grad(const Tape& tape, const Tensor& output, std::span<const Tensor> wrt);

// Jacobian d f / d inputs[i] for each input, as (output size, input size)
// matrices. f receives tape leaves holding copies of the inputs.
std::vector<Tensor> jacobian(const std::function<Tensor(std::span<const Tensor>)>& f, std::span<const Tensor> inputs);

// Evaluates a primitive on raw values; shared by recording and replay.
void evaluate_op(Op op, const OpParams& params, std::span<const Shape* const> in_shapes,
                 std::span<const std::vector<double>* const> in_values, Shape& out_shape,
                 std::vector<double>& out_values);

} // namespace rppgm::ad
