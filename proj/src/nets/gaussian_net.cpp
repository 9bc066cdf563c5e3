#include "rppgm/nets/gaussian_net.hpp"

#include <cmath>
#include <numbers>

namespace rppgm::nets {

using ad::ParamBlock;
using ad::ParamKind;

std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    }
    return "identity";
}

std::string_view to_string(HeadKind h) { return h == HeadKind::Gaussian ? "gaussian" : "scalar"; }
std::string_view to_string(SnMask m) { return m == SnMask::All ? "all" : "all_but_final"; }

Activation parse_activation(std::string_view s) {
    if (s == "identity") return Activation::Identity;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    throw Error("unknown activation '" + std::string(s) + "'");
}

HeadKind parse_head(std::string_view s) {
    if (s == "gaussian") return HeadKind::Gaussian;
    if (s == "scalar") return HeadKind::Scalar;
    throw Error("unknown head kind '" + std::string(s) + "'");
}

SnMask parse_sn_mask(std::string_view s) {
    if (s == "all") return SnMask::All;
    if (s == "all_but_final") return SnMask::AllButFinal;
    throw Error("unknown sn mask '" + std::string(s) + "'");
}

GaussianNet::GaussianNet(const NetSpec& spec, Rng& rng) : spec_(spec) {
    if (spec.input_dim == 0 || spec.output_dim == 0) throw Error("network dimensions must be positive");
    if (spec.head == HeadKind::Scalar && spec.output_dim != 1) throw Error("scalar head requires output_dim 1");
    if (!(spec.log_std_min <= spec.log_std_max)) throw Error("log-std bounds are inverted");

    std::vector<std::size_t> widths{spec.input_dim};
    widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
    widths.push_back(spec.output_dim);
    const std::size_t n = widths.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
        Layer l;
        l.in = widths[i];
        l.out = widths[i + 1];
        l.activation = i + 1 == n ? Activation::Identity : spec.activation;
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
        l.weight.resize(l.in * l.out);
        for (auto& w : l.weight) w = rng.uniform(-bound, bound);
        if (spec.bias) {
            l.bias.resize(l.out);
            for (auto& b : l.bias) b = rng.uniform(-bound, bound);
        }
        l.power = initial_power_vectors(l.out, l.in);
        layers_.push_back(std::move(l));
    }
    const std::size_t masked = masked_layers();
    for (std::size_t i = 0; i < masked; ++i) layers_[i].normalized = true;
    if (gaussian()) log_std_.assign(spec.output_dim, spec.log_std_init);
    if (spec.sn) apply_spectral_normalization(*this, 50);
}

GaussianNet GaussianNet::restore(const NetSpec& spec, GaussianNet net) {
    net.spec_ = spec;
    return net;
}

std::size_t GaussianNet::masked_layers() const {
    if (!spec_.sn) return 0;
    if (spec_.sn_mask == SnMask::All) return layers_.size();
    return layers_.empty() ? 0 : layers_.size() - 1;
}

ParamVector GaussianNet::params() const {
    ParamVector p;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        p.blocks.push_back(ParamBlock{i, ParamKind::Weight, p.values.size(), {l.out, l.in}});
        p.values.insert(p.values.end(), l.weight.begin(), l.weight.end());
        if (!l.bias.empty()) {
            p.blocks.push_back(ParamBlock{i, ParamKind::Bias, p.values.size(), {l.out}});
            p.values.insert(p.values.end(), l.bias.begin(), l.bias.end());
        }
    }
    if (gaussian()) {
        p.blocks.push_back(ParamBlock{layers_.size(), ParamKind::LogStd, p.values.size(), {log_std_.size()}});
        p.values.insert(p.values.end(), log_std_.begin(), log_std_.end());
    }
    return p;
}

std::size_t GaussianNet::param_count() const {
    std::size_t n = log_std_.size();
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

void GaussianNet::set_params(const ParamVector& p) {
    if (p.size() != param_count()) {
        throw Error("set_params: expected " + std::to_string(param_count()) + " values, got " +
                    std::to_string(p.size()));
    }
    std::size_t off = 0;
    auto take = [&](std::vector<double>& dst) {
        std::copy(p.values.begin() + static_cast<std::ptrdiff_t>(off),
                  p.values.begin() + static_cast<std::ptrdiff_t>(off + dst.size()), dst.begin());
        off += dst.size();
    };
    for (auto& l : layers_) {
        take(l.weight);
        take(l.bias);
    }
    take(log_std_);
}

namespace {

double dot_uWv(const Layer& l) {
    double s = 0.0;
    for (std::size_t r = 0; r < l.out; ++r) {
        double wv = 0.0;
        for (std::size_t c = 0; c < l.in; ++c) wv += l.weight[r * l.in + c] * l.power.v[c];
        s += l.power.u[r] * wv;
    }
    return s;
}

// Below this the matrix is treated as zero and left unnormalized.
constexpr double kTinySigma = 1e-12;

} // namespace

double GaussianNet::layer_sigma(std::size_t layer) const {
    const Layer& l = layers_.at(layer);
    if (!l.normalized) return 1.0;
    const double s = dot_uWv(l);
    return std::abs(s) > kTinySigma ? s : 1.0;
}

std::vector<double> GaussianNet::effective_weight(std::size_t layer) const {
    const double s = layer_sigma(layer);
    std::vector<double> w = layers_.at(layer).weight;
    for (auto& x : w) x /= s;
    return w;
}

BoundNet::BoundNet(const GaussianNet& net, ad::Tape* tape, bool trainable) : net_(&net), tape_(tape) {
    auto place = [&](Tensor t) {
        if (!tape) return t;
        if (trainable) {
            Tensor leaf = tape->variable(t);
            leaves_.push_back(leaf);
            return leaf;
        }
        return tape->constant(t);
    };
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const Layer& l = net.layers()[i];
        Tensor w = place(Tensor::matrix(l.out, l.in, l.weight));
        Tensor b = l.bias.empty() ? Tensor() : place(Tensor::vector(l.bias));
        if (l.normalized && std::abs(dot_uWv(l)) > kTinySigma) {
            Tensor sigma = ad::dot(Tensor::vector(l.power.u), ad::matmul(w, Tensor::vector(l.power.v)));
            w = ad::div(w, sigma);
        }
        weights_.push_back(std::move(w));
        biases_.push_back(std::move(b));
    }
    if (net.gaussian()) {
        log_std_ = ad::clamp(place(Tensor::vector(net.log_std())), net.spec().log_std_min, net.spec().log_std_max);
    }
}

namespace {

Tensor activate(const Tensor& x, Activation a) {
    switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Relu: return ad::relu(x);
    case Activation::LeakyRelu: return ad::leaky_relu(x);
    }
    return x;
}

} // namespace

Tensor BoundNet::forward_prefix(const Tensor& x, std::size_t n) const {
    const auto& layers = net_->layers();
    if (n > layers.size()) throw Error("forward_prefix: network has only " + std::to_string(layers.size()) + " layers");
    const std::size_t width = x.rank() == 2 ? x.shape()[1] : x.size();
    if (x.rank() > 2 || width != net_->input_dim()) {
        throw ad::ShapeError("net_forward: input shape " + ad::to_string(x.shape()) + " does not match input width " +
                             std::to_string(net_->input_dim()));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < n; ++i) {
        h = biases_[i].size() ? ad::affine(weights_[i], h, biases_[i]) : ad::affine(weights_[i], h);
        h = activate(h, layers[i].activation);
    }
    return h;
}

NetOutput BoundNet::forward(const Tensor& x) const {
    NetOutput out;
    out.mean = forward_prefix(x, net_->layers().size());
    if (net_->gaussian()) out.log_std = log_std_;
    return out;
}

ParamVector BoundNet::gradient(const Tensor& output) const {
    if (!tape_) throw Error("BoundNet::gradient: network is not bound to a tape");
    ParamVector g = net_->params().zeros_like();
    if (leaves_.empty()) return g;
    auto grads = tape_->gradient(output, leaves_);
    std::size_t off = 0;
    for (const auto& t : grads) {
        std::copy(t.data().begin(), t.data().end(), g.values.begin() + static_cast<std::ptrdiff_t>(off));
        off += t.size();
    }
    return g;
}

NetOutput net_forward(const GaussianNet& net, const Tensor& input) {
    BoundNet bound(net, input.tape(), false);
    return bound.forward(input);
}

Tensor gaussian_sample(const Tensor& mean, const Tensor& log_std, const Tensor& noise) {
    if (mean.shape() != log_std.shape() || mean.shape() != noise.shape()) {
        throw ad::ShapeError("gaussian_sample: shapes " + ad::to_string(mean.shape()) + ", " +
                             ad::to_string(log_std.shape()) + ", " + ad::to_string(noise.shape()) + " disagree");
    }
    return ad::add(mean, ad::mul(ad::exp(log_std), noise.detach()));
}

Tensor gaussian_log_prob(const Tensor& mean, const Tensor& log_std, const Tensor& value) {
    if (mean.shape() != log_std.shape() || mean.shape() != value.shape()) {
        throw ad::ShapeError("gaussian_log_prob: shapes " + ad::to_string(mean.shape()) + ", " +
                             ad::to_string(log_std.shape()) + ", " + ad::to_string(value.shape()) + " disagree");
    }
    const double c = -0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(mean.size());
    Tensor z = ad::mul(ad::sub(value, mean), ad::exp(ad::neg(log_std)));
    Tensor per_dim = ad::sub(ad::scale(ad::square(z), -0.5), log_std);
    return ad::add(ad::sum(per_dim), Tensor::scalar(c));
}

PowerVectors initial_power_vectors(std::size_t rows, std::size_t cols) {
    auto make = [](std::size_t n) {
        std::vector<double> x(n);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = 1.0 + 0.37 * std::sin(1.0 + 2.1 * static_cast<double>(i));
            s += x[i] * x[i];
        }
        for (auto& e : x) e /= std::sqrt(s);
        return x;
    };
    return PowerVectors{make(rows), make(cols)};
}

double spectral_norm_estimate(std::span<const double> w, std::size_t rows, std::size_t cols, std::size_t iters,
                              PowerVectors& pv) {
    if (w.size() != rows * cols) throw ad::ShapeError("spectral_norm_estimate: weight size mismatch");
    if (iters == 0) throw Error("spectral_norm_estimate: iters must be >= 1");
    if (pv.u.size() != rows || pv.v.size() != cols) pv = initial_power_vectors(rows, cols);

    std::vector<double> u = pv.u, v = pv.v;
    double sigma = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        // v <- W^T u / |W^T u|
        double nv = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < rows; ++r) s += w[r * cols + c] * u[r];
            v[c] = s;
            nv += s * s;
        }
        nv = std::sqrt(nv);
        if (nv <= 0.0) return 0.0;
        for (auto& x : v) x /= nv;
        // u <- W v / |W v|
        double nu = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * v[c];
            u[r] = s;
            nu += s * s;
        }
        nu = std::sqrt(nu);
        if (nu <= 0.0) return 0.0;
        for (auto& x : u) x /= nu;
        sigma = nu;
    }
    pv.u = std::move(u);
    pv.v = std::move(v);
    return sigma;
}

double spectral_norm_estimate(const Tensor& weight, std::size_t iters, PowerVectors& pv) {
    if (weight.rank() != 2) {
        throw ad::ShapeError("spectral_norm_estimate: shape " + ad::to_string(weight.shape()) + " is not rank-2");
    }
    return spectral_norm_estimate(weight.values(), weight.rows(), weight.cols(), iters, pv);
}

void apply_spectral_normalization(GaussianNet& net, std::size_t iters) {
    for (auto& l : net.layers()) {
        if (l.normalized) spectral_norm_estimate(l.weight, l.out, l.in, iters, l.power);
    }
}

} // namespace rppgm::nets
