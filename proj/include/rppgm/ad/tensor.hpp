#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rppgm/util/error.hpp"

namespace rppgm::ad {

using Shape = std::vector<std::size_t>;
using NodeId = std::size_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

class Tape;

class ShapeError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public NumericError {
public:
    NonFiniteError(const std::string& message, NodeId node) : NumericError(message), node_(node) {}
    NodeId node() const noexcept { return node_; }

private:
    NodeId node_;
};

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

// Dense row-major array of doubles. A tensor produced on a Tape carries the
// id of the node that recorded it; tensors without a tape are constants and
// may be shared freely across threads.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor zeros(Shape shape);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const noexcept { return values_; }
    const std::vector<double>& data() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
    double item() const;

    bool on_tape() const noexcept { return tape_ != nullptr; }
    Tape* tape() const noexcept { return tape_; }
    NodeId node() const noexcept { return node_; }

    // Copy of the values with no tape attachment.
    Tensor detach() const { return Tensor(shape_, values_); }

private:
    friend class Tape;

    Shape shape_;
    std::vector<double> values_;
    Tape* tape_ = nullptr;
    NodeId node_ = kNoNode;
};

// Elementwise binary ops require identical shapes. div() additionally accepts
// a single-element divisor, and mul() a single-element left or right factor.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);

// (m,k)x(k,n), (m,k)x(k) and (k)x(k,n).
Tensor matmul(const Tensor& a, const Tensor& b);
// weight (out,in) applied to x (in) or a batch X (rows,in); bias (out) optional.
Tensor affine(const Tensor& weight, const Tensor& x, const Tensor& bias);
Tensor affine(const Tensor& weight, const Tensor& x);

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.01);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Gradient passes for lo <= x <= hi and is zero outside.
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor concat(std::span<const Tensor> parts);
Tensor concat(const Tensor& a, const Tensor& b);
// Elements [begin, end) of a rank-1 tensor.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Dot product of two equal-shape tensors, as a scalar.
inline Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

} // namespace rppgm::ad
