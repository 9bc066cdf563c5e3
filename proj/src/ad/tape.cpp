#include "rppgm/ad/tape.hpp"

#include <cmath>
#include <string>

namespace rppgm::ad {

std::string_view op_name(Op op) {
    switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::Neg: return "neg";
    case Op::MatMul: return "matmul";
    case Op::Affine: return "affine";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Clamp: return "clamp";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    }
    return "unknown";
}

namespace {

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

[[noreturn]] void shape_fail(Op op, const Shape& a, const std::string& why) {
    throw ShapeError(std::string(op_name(op)) + ": shape " + to_string(a) + " " + why);
}

template <typename F>
void map_unary(const std::vector<double>& in, std::vector<double>& out, F f) {
    out.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
}

// Output shape of a broadcasting binary op (mul/div): identical shapes, or one
// side holding a single element.
Shape broadcast_shape(Op op, const Shape& a, const Shape& b, bool allow_left_scalar) {
    if (a == b) return a;
    const std::size_t na = element_count(a), nb = element_count(b);
    if (nb == 1) return a;
    if (allow_left_scalar && na == 1) return b;
    shape_fail(op, a, b);
}

struct MatMulDims {
    std::size_t m, k, n;
};

MatMulDims matmul_dims(const Shape& a, const Shape& b) {
    if (a.size() == 2 && b.size() == 2 && a[1] == b[0]) return {a[0], a[1], b[1]};
    if (a.size() == 2 && b.size() == 1 && a[1] == b[0]) return {a[0], a[1], 1};
    if (a.size() == 1 && b.size() == 2 && a[0] == b[0]) return {1, a[0], b[1]};
    shape_fail(Op::MatMul, a, b);
}

Shape matmul_shape(const Shape& a, const Shape& b, const MatMulDims& d) {
    if (a.size() == 2 && b.size() == 2) return {d.m, d.n};
    if (a.size() == 2) return {d.m};
    return {d.n};
}

// Rows of the affine input: 1 for a vector, r for an (r, in) batch.
std::size_t affine_rows(const Shape& w, const Shape& x, const Shape* bias) {
    if (w.size() != 2) shape_fail(Op::Affine, w, "weight is not rank-2");
    std::size_t rows = 0;
    if (x.size() == 1 && x[0] == w[1]) rows = 1;
    else if (x.size() == 2 && x[1] == w[1]) rows = x[0];
    else shape_fail(Op::Affine, w, x);
    if (bias && !(bias->size() == 1 && (*bias)[0] == w[0])) shape_fail(Op::Affine, w, *bias);
    return rows;
}

} // namespace

void evaluate_op(Op op, const OpParams& params, std::span<const Shape* const> in_shapes,
                 std::span<const std::vector<double>* const> in_values, Shape& out_shape,
                 std::vector<double>& out) {
    auto shp = [&](std::size_t i) -> const Shape& { return *in_shapes[i]; };
    auto val = [&](std::size_t i) -> const std::vector<double>& { return *in_values[i]; };

    switch (op) {
    case Op::Leaf:
    case Op::Constant:
        out_shape = shp(0);
        out = val(0);
        return;
    case Op::Add:
    case Op::Sub: {
        if (shp(0) != shp(1)) shape_fail(op, shp(0), shp(1));
        out_shape = shp(0);
        const auto& a = val(0);
        const auto& b = val(1);
        out.resize(a.size());
        if (op == Op::Add)
            for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
        else
            for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
        return;
    }
    case Op::Mul:
    case Op::Div: {
        out_shape = broadcast_shape(op, shp(0), shp(1), op == Op::Mul);
        const auto& a = val(0);
        const auto& b = val(1);
        const std::size_t n = element_count(out_shape);
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = a[a.size() == 1 ? 0 : i];
            const double y = b[b.size() == 1 ? 0 : i];
            out[i] = op == Op::Mul ? x * y : x / y;
        }
        return;
    }
    case Op::Scale:
        out_shape = shp(0);
        map_unary(val(0), out, [c = params.p0](double x) { return c * x; });
        return;
    case Op::Neg:
        out_shape = shp(0);
        map_unary(val(0), out, [](double x) { return -x; });
        return;
    case Op::MatMul: {
        const MatMulDims d = matmul_dims(shp(0), shp(1));
        out_shape = matmul_shape(shp(0), shp(1), d);
        const auto& a = val(0);
        const auto& b = val(1);
        out.assign(d.m * d.n, 0.0);
        for (std::size_t i = 0; i < d.m; ++i)
            for (std::size_t p = 0; p < d.k; ++p) {
                const double aip = a[i * d.k + p];
                for (std::size_t j = 0; j < d.n; ++j) out[i * d.n + j] += aip * b[p * d.n + j];
            }
        return;
    }
    case Op::Affine: {
        const bool has_bias = in_shapes.size() == 3;
        const std::size_t rows = affine_rows(shp(0), shp(1), has_bias ? &shp(2) : nullptr);
        const std::size_t n_out = shp(0)[0], n_in = shp(0)[1];
        const auto& w = val(0);
        const auto& x = val(1);
        out_shape = shp(1).size() == 1 ? Shape{n_out} : Shape{rows, n_out};
        out.resize(rows * n_out);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < n_out; ++o) {
                double acc = has_bias ? val(2)[o] : 0.0;
                for (std::size_t i = 0; i < n_in; ++i) acc += w[o * n_in + i] * x[r * n_in + i];
                out[r * n_out + o] = acc;
            }
        return;
    }
    case Op::Tanh:
        out_shape = shp(0);
        map_unary(val(0), out, [](double x) { return std::tanh(x); });
        return;
    case Op::Relu:
        out_shape = shp(0);
        map_unary(val(0), out, [](double x) { return x > 0.0 ? x : 0.0; });
        return;
    case Op::LeakyRelu:
        out_shape = shp(0);
        map_unary(val(0), out, [s = params.p0](double x) { return x > 0.0 ? x : s * x; });
        return;
    case Op::Exp:
        out_shape = shp(0);
        map_unary(val(0), out, [](double x) { return std::exp(x); });
        return;
    case Op::Log:
        out_shape = shp(0);
        map_unary(val(0), out, [](double x) { return std::log(x); });
        return;
    case Op::Square:
        out_shape = shp(0);
        map_unary(val(0), out, [](double x) { return x * x; });
        return;
    case Op::Sin:
        out_shape = shp(0);
        map_unary(val(0), out, [](double x) { return std::sin(x); });
        return;
    case Op::Cos:
        out_shape = shp(0);
        map_unary(val(0), out, [](double x) { return std::cos(x); });
        return;
    case Op::Sum:
    case Op::Mean: {
        const auto& a = val(0);
        if (op == Op::Mean && a.empty()) shape_fail(op, shp(0), "has no elements");
        double acc = 0.0;
        for (double x : a) acc += x;
        out_shape = {};
        out = {op == Op::Mean ? acc / static_cast<double>(a.size()) : acc};
        return;
    }
    case Op::Clamp:
        out_shape = shp(0);
        map_unary(val(0), out, [lo = params.p0, hi = params.p1](double x) { return x < lo ? lo : (x > hi ? hi : x); });
        return;
    case Op::Concat: {
        out.clear();
        for (std::size_t i = 0; i < in_shapes.size(); ++i) {
            if (shp(i).size() > 1) shape_fail(op, shp(i), "is not rank-0 or rank-1");
            out.insert(out.end(), val(i).begin(), val(i).end());
        }
        out_shape = {out.size()};
        return;
    }
    case Op::Slice: {
        if (shp(0).size() != 1) shape_fail(op, shp(0), "is not rank-1");
        if (params.i0 > params.i1 || params.i1 > shp(0)[0])
            shape_fail(op, shp(0), "cannot be sliced to [" + std::to_string(params.i0) + "," +
                                       std::to_string(params.i1) + ")");
        out.assign(val(0).begin() + static_cast<std::ptrdiff_t>(params.i0),
                   val(0).begin() + static_cast<std::ptrdiff_t>(params.i1));
        out_shape = {params.i1 - params.i0};
        return;
    }
    }
}

Tensor Tape::record(Op op, std::span<const Tensor* const> inputs, const OpParams& params, Shape shape,
                    std::vector<double> value) {
    Node node;
    node.op = op;
    node.params = params;
    node.inputs.reserve(inputs.size());
    for (const Tensor* t : inputs) node.inputs.push_back(t->tape_ == this ? t->node_ : lift(*t));
    node.shape = shape;
    node.value = value;
    nodes_.push_back(std::move(node));

    Tensor out(std::move(shape), std::move(value));
    out.tape_ = this;
    out.node_ = nodes_.size() - 1;
    return out;
}

NodeId Tape::lift(const Tensor& t) {
    Node node;
    node.op = Op::Constant;
    node.shape = t.shape();
    node.value = t.data();
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

Tensor Tape::variable(const Tensor& value) {
    Node node;
    node.op = Op::Leaf;
    node.shape = value.shape();
    node.value = value.data();
    nodes_.push_back(std::move(node));
    Tensor out(value.shape(), value.data());
    out.tape_ = this;
    out.node_ = nodes_.size() - 1;
    return out;
}

Tensor Tape::constant(const Tensor& value) {
    Tensor out(value.shape(), value.data());
    out.tape_ = this;
    out.node_ = lift(value);
    return out;
}

bool Tape::is_leaf(const Tensor& t) const {
    return t.tape_ == this && t.node_ < nodes_.size() && nodes_[t.node_].op == Op::Leaf;
}

std::vector<Tensor> Tape::gradient(const Tensor& output, std::span<const Tensor> wrt) const {
    if (output.size() != 1) {
        throw ShapeError("backward: output of shape " + to_string(output.shape()) + " is not a scalar");
    }
    const double one = 1.0;
    return vjp(output, std::span(&one, 1), wrt);
}

std::vector<Tensor> Tape::vjp(const Tensor& output, std::span<const double> seed, std::span<const Tensor> wrt) const {
    if (seed.size() != output.size()) {
        throw ShapeError("backward: seed has " + std::to_string(seed.size()) + " entries for output of shape " +
                         to_string(output.shape()));
    }
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        if (!is_leaf(wrt[i])) {
            throw Error("backward: wrt[" + std::to_string(i) + "] is not a leaf of this tape");
        }
    }

    std::vector<Tensor> grads;
    grads.reserve(wrt.size());
    // A constant output (or one on another tape) has zero derivative.
    if (output.tape() != this) {
        for (const auto& w : wrt) grads.push_back(Tensor::zeros(w.shape()));
        return grads;
    }

    const NodeId root = output.node();
    std::vector<std::vector<double>> adj(root + 1);
    adj[root].assign(seed.begin(), seed.end());

    auto acc = [&](NodeId id) -> std::vector<double>& {
        auto& a = adj[id];
        if (a.empty()) a.assign(nodes_[id].value.size(), 0.0);
        return a;
    };

    for (NodeId id = root + 1; id-- > 0;) {
        if (adj[id].empty()) continue;
        const Node& node = nodes_[id];
        const std::vector<double>& g = adj[id];
        const auto& in = node.inputs;

        switch (node.op) {
        case Op::Leaf:
        case Op::Constant:
            break;
        case Op::Add: {
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            auto& gb = acc(in[1]);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            break;
        }
        case Op::Sub: {
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            auto& gb = acc(in[1]);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            break;
        }
        case Op::Mul:
        case Op::Div: {
            const auto& a = nodes_[in[0]].value;
            const auto& b = nodes_[in[1]].value;
            auto& ga = acc(in[0]);
            auto& gb = acc(in[1]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const std::size_t ia = a.size() == 1 ? 0 : i;
                const std::size_t ib = b.size() == 1 ? 0 : i;
                if (node.op == Op::Mul) {
                    ga[ia] += g[i] * b[ib];
                    gb[ib] += g[i] * a[ia];
                } else {
                    ga[ia] += g[i] / b[ib];
                    gb[ib] -= g[i] * a[ia] / (b[ib] * b[ib]);
                }
            }
            break;
        }
        case Op::Scale: {
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += node.params.p0 * g[i];
            break;
        }
        case Op::Neg: {
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
            break;
        }
        case Op::MatMul: {
            const Node& na = nodes_[in[0]];
            const Node& nb = nodes_[in[1]];
            const MatMulDims d = matmul_dims(na.shape, nb.shape);
            auto& ga = acc(in[0]);
            auto& gb = acc(in[1]);
            for (std::size_t i = 0; i < d.m; ++i)
                for (std::size_t p = 0; p < d.k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < d.n; ++j) {
                        s += g[i * d.n + j] * nb.value[p * d.n + j];
                        gb[p * d.n + j] += na.value[i * d.k + p] * g[i * d.n + j];
                    }
                    ga[i * d.k + p] += s;
                }
            break;
        }
        case Op::Affine: {
            const Node& nw = nodes_[in[0]];
            const Node& nx = nodes_[in[1]];
            const std::size_t n_out = nw.shape[0], n_in = nw.shape[1];
            const std::size_t rows = nx.value.size() / n_in;
            auto& gw = acc(in[0]);
            auto& gx = acc(in[1]);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t o = 0; o < n_out; ++o) {
                    const double go = g[r * n_out + o];
                    if (go == 0.0) continue;
                    for (std::size_t i = 0; i < n_in; ++i) {
                        gw[o * n_in + i] += go * nx.value[r * n_in + i];
                        gx[r * n_in + i] += go * nw.value[o * n_in + i];
                    }
                }
            if (in.size() == 3) {
                auto& gbias = acc(in[2]);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t o = 0; o < n_out; ++o) gbias[o] += g[r * n_out + o];
            }
            break;
        }
        case Op::Tanh: {
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - node.value[i] * node.value[i]);
            break;
        }
        case Op::Relu: {
            const auto& x = nodes_[in[0]].value;
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x[i] > 0.0) ga[i] += g[i];
            break;
        }
        case Op::LeakyRelu: {
            const auto& x = nodes_[in[0]].value;
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : node.params.p0 * g[i];
            break;
        }
        case Op::Exp: {
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * node.value[i];
            break;
        }
        case Op::Log: {
            const auto& x = nodes_[in[0]].value;
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
            break;
        }
        case Op::Square: {
            const auto& x = nodes_[in[0]].value;
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
            break;
        }
        case Op::Sin: {
            const auto& x = nodes_[in[0]].value;
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * std::cos(x[i]);
            break;
        }
        case Op::Cos: {
            const auto& x = nodes_[in[0]].value;
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * std::sin(x[i]);
            break;
        }
        case Op::Sum:
        case Op::Mean: {
            auto& ga = acc(in[0]);
            const double s = node.op == Op::Mean ? g[0] / static_cast<double>(ga.size()) : g[0];
            for (auto& x : ga) x += s;
            break;
        }
        case Op::Clamp: {
            const auto& x = nodes_[in[0]].value;
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x[i] >= node.params.p0 && x[i] <= node.params.p1) ga[i] += g[i];
            break;
        }
        case Op::Concat: {
            std::size_t offset = 0;
            for (NodeId part : in) {
                auto& gp = acc(part);
                for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
                offset += gp.size();
            }
            break;
        }
        case Op::Slice: {
            auto& ga = acc(in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[node.params.i0 + i] += g[i];
            break;
        }
        }
    }

    for (const auto& w : wrt) {
        const NodeId id = w.node();
        if (id <= root && !adj[id].empty()) grads.emplace_back(w.shape(), adj[id]);
        else grads.push_back(Tensor::zeros(w.shape()));
    }
    return grads;
}

bool Tape::replay_matches() const {
    std::vector<const Shape*> shapes;
    std::vector<const std::vector<double>*> values;
    Shape out_shape;
    std::vector<double> out;
    for (const Node& node : nodes_) {
        if (node.op == Op::Leaf || node.op == Op::Constant) continue;
        shapes.clear();
        values.clear();
        for (NodeId id : node.inputs) {
            shapes.push_back(&nodes_[id].shape);
            values.push_back(&nodes_[id].value);
        }
        evaluate_op(node.op, node.params, shapes, values, out_shape, out);
        if (out_shape != node.shape || out != node.value) return false;
    }
    return true;
}

std::vector<Tensor> jacobian(const std::function<Tensor(std::span<const Tensor>)>& f, std::span<const Tensor> inputs) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& x : inputs) leaves.push_back(tape.variable(x.detach()));
    const Tensor out = f(leaves);
    const std::size_t m = out.size();
    std::vector<std::vector<double>> rows(inputs.size());
    std::vector<double> seed(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        seed[k] = 1.0;
        auto g = tape.vjp(out, seed, leaves);
        seed[k] = 0.0;
        for (std::size_t i = 0; i < inputs.size(); ++i) rows[i].insert(rows[i].end(), g[i].data().begin(), g[i].data().end());
    }
    std::vector<Tensor> jac;
    jac.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) jac.push_back(Tensor::matrix(m, inputs[i].size(), std::move(rows[i])));
    return jac;
}

std::vector<Tensor> backward_grad(const Tape& tape, const Tensor& output, std::span<const Tensor> wrt) {
    return tape.gradient(output, wrt);
}

} // namespace rppgm::ad
