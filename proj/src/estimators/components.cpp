#include "rppgm/estimators/components.hpp"

#include <cmath>

namespace rppgm::est {

namespace {

Tensor place(ad::Tape* tape, Tensor t) { return tape ? tape->constant(t) : t; }

class NetDynamicsBinding : public BoundDynamics {
public:
    NetDynamicsBinding(const nets::GaussianNet& net, ad::Tape* tape) : bound_(net, tape, false) {}
    Tensor step(const Tensor& s, const Tensor& a, const Tensor& xi) const override {
        auto out = bound_.forward(ad::concat(s, a));
        return nets::gaussian_sample(out.mean, out.log_std, xi);
    }

private:
    nets::BoundNet bound_;
};

class EnvDynamicsBinding : public BoundDynamics {
public:
    explicit EnvDynamicsBinding(const envs::EnvSpec& spec) : spec_(spec) {}
    Tensor step(const Tensor& s, const Tensor& a, const Tensor& xi) const override {
        return envs::env_step(spec_, s, a, xi).next_state;
    }

private:
    const envs::EnvSpec& spec_;
};

class NetCriticBinding : public BoundCritic {
public:
    NetCriticBinding(const nets::GaussianNet& net, ad::Tape* tape) : bound_(net, tape, false) {}
    Tensor value(const Tensor& s, const Tensor& a) const override {
        return ad::sum(bound_.forward(ad::concat(s, a)).mean);
    }

private:
    nets::BoundNet bound_;
};

class ConstantCriticBinding : public BoundCritic {
public:
    explicit ConstantCriticBinding(double c) : c_(c) {}
    Tensor value(const Tensor&, const Tensor&) const override { return Tensor::scalar(c_); }

private:
    double c_;
};

class ScaledCriticBinding : public BoundCritic {
public:
    ScaledCriticBinding(std::unique_ptr<BoundCritic> inner, double scale) : inner_(std::move(inner)), scale_(scale) {}
    Tensor value(const Tensor& s, const Tensor& a) const override { return ad::scale(inner_->value(s, a), scale_); }

private:
    std::unique_ptr<BoundCritic> inner_;
    double scale_;
};

class QuadraticCriticBinding : public BoundCritic {
public:
    QuadraticCriticBinding(const std::vector<double>& H, double c, std::size_t dim, ad::Tape* tape)
        : H_(place(tape, Tensor::matrix(dim, dim, H))), c_(c) {}
    Tensor value(const Tensor& s, const Tensor& a) const override {
        Tensor x = ad::concat(s, a);
        return ad::add(ad::dot(x, ad::matmul(H_, x)), Tensor::scalar(c_));
    }

private:
    Tensor H_;
    double c_;
};

} // namespace

RewardFn env_reward_fn(const envs::EnvSpec& spec) {
    return [spec](const Tensor& s, const Tensor& a) { return envs::env_reward(spec, s, a); };
}

std::pair<Tensor, Tensor> Dynamics::jacobians(const std::vector<double>& s, const std::vector<double>& a,
                                              const std::vector<double>& xi) const {
    Tensor in[] = {Tensor::vector(s), Tensor::vector(a)};
    auto jac = ad::jacobian(
        [&](std::span<const Tensor> p) { return bind(p[0].tape())->step(p[0], p[1], Tensor::vector(xi)); }, in);
    return {jac[0], jac[1]};
}

LearnedDynamics::LearnedDynamics(const nets::GaussianNet& model, std::size_t action_dim)
    : model_(&model), action_dim_(action_dim) {
    if (!model.gaussian()) throw Error("dynamics model needs a gaussian head");
    if (model.input_dim() != model.output_dim() + action_dim) {
        throw Error("dynamics model input width must be state_dim + action_dim");
    }
}

std::unique_ptr<BoundDynamics> LearnedDynamics::bind(ad::Tape* tape) const {
    return std::make_unique<NetDynamicsBinding>(*model_, tape);
}

std::vector<double> LearnedDynamics::infer_noise(const std::vector<double>& s, const std::vector<double>& a,
                                                 const std::vector<double>& s_next) const {
    std::vector<double> x = s;
    x.insert(x.end(), a.begin(), a.end());
    auto out = nets::net_forward(*model_, Tensor::vector(x));
    if (s_next.size() != out.mean.size()) throw ad::ShapeError("infer_noise: next-state width mismatch");
    std::vector<double> xi(s_next.size());
    for (std::size_t i = 0; i < xi.size(); ++i) xi[i] = (s_next[i] - out.mean[i]) / std::exp(out.log_std[i]);
    return xi;
}

std::unique_ptr<BoundDynamics> TrueDynamics::bind(ad::Tape*) const {
    return std::make_unique<EnvDynamicsBinding>(spec_);
}

std::vector<double> TrueDynamics::infer_noise(const std::vector<double>& s, const std::vector<double>& a,
                                              const std::vector<double>& s_next) const {
    std::vector<double> zero(spec_.state_dim, 0.0);
    if (spec_.noise_std == 0.0) return zero;
    auto mean = envs::env_step(spec_, Tensor::vector(s), Tensor::vector(a), Tensor::vector(zero)).next_state;
    if (s_next.size() != mean.size()) throw ad::ShapeError("infer_noise: next-state width mismatch");
    std::vector<double> xi(s_next.size());
    for (std::size_t i = 0; i < xi.size(); ++i) xi[i] = (s_next[i] - mean[i]) / spec_.noise_std;
    return xi;
}

double Critic::value(const std::vector<double>& s, const std::vector<double>& a) const {
    return bind(nullptr)->value(Tensor::vector(s), Tensor::vector(a)).item();
}

std::pair<std::vector<double>, std::vector<double>> Critic::gradients(const std::vector<double>& s,
                                                                      const std::vector<double>& a) const {
    ad::Tape tape;
    Tensor leaves[] = {tape.variable(Tensor::vector(s)), tape.variable(Tensor::vector(a))};
    auto g = tape.gradient(bind(&tape)->value(leaves[0], leaves[1]), leaves);
    return {g[0].data(), g[1].data()};
}

std::unique_ptr<BoundCritic> NetCritic::bind(ad::Tape* tape) const {
    return std::make_unique<NetCriticBinding>(*net_, tape);
}

std::unique_ptr<BoundCritic> ConstantCritic::bind(ad::Tape*) const {
    return std::make_unique<ConstantCriticBinding>(c_);
}

std::unique_ptr<BoundCritic> ScaledCritic::bind(ad::Tape* tape) const {
    return std::make_unique<ScaledCriticBinding>(inner_->bind(tape), scale_);
}

QuadraticCritic::QuadraticCritic(std::vector<double> H, double c, std::size_t dim)
    : H_(std::move(H)), c_(c), dim_(dim) {
    if (H_.size() != dim * dim) throw Error("quadratic critic: H must be dim x dim");
}

QuadraticCritic QuadraticCritic::from_lqg(const envs::EnvSpec& spec, const envs::LinearPolicy& policy,
                                          double scale) {
    envs::LqgQFunction q(spec, policy);
    const std::size_t ds = spec.state_dim, da = spec.action_dim, n = ds + da;
    const double g = spec.gamma, k = -(1.0 - g) * scale;
    // [A B] as ds x n.
    std::vector<double> ab(ds * n);
    for (std::size_t r = 0; r < ds; ++r) {
        for (std::size_t c = 0; c < ds; ++c) ab[r * n + c] = spec.linear.A[r * ds + c];
        for (std::size_t c = 0; c < da; ++c) ab[r * n + ds + c] = spec.linear.B[r * da + c];
    }
    const auto& P = q.P();
    std::vector<double> H(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double v = 0.0;
            for (std::size_t r = 0; r < ds; ++r)
                for (std::size_t c = 0; c < ds; ++c) v += ab[r * n + i] * P[r * ds + c] * ab[c * n + j];
            v *= g;
            if (i < ds && j < ds) v += spec.linear.Q[i * ds + j];
            if (i >= ds && j >= ds) v += spec.linear.R[(i - ds) * da + (j - ds)];
            H[i * n + j] = k * v;
        }
    }
    return QuadraticCritic(std::move(H), k * q.offset(), n);
}

std::unique_ptr<BoundCritic> QuadraticCritic::bind(ad::Tape* tape) const {
    return std::make_unique<QuadraticCriticBinding>(H_, c_, dim_, tape);
}

} // namespace rppgm::est
