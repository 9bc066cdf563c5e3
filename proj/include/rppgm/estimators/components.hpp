#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rppgm/envs/env.hpp"
#include "rppgm/envs/lqg.hpp"
#include "rppgm/nets/gaussian_net.hpp"

namespace rppgm::est {

using ad::Tensor;

// Differentiable reward r(s, a) returning a scalar tensor.
using RewardFn = std::function<Tensor(const Tensor& s, const Tensor& a)>;

RewardFn env_reward_fn(const envs::EnvSpec& spec);

// Transition s' = f(s, a, xi) with xi standard normal, placed on one tape.
class BoundDynamics {
public:
    virtual ~BoundDynamics() = default;
    virtual Tensor step(const Tensor& s, const Tensor& a, const Tensor& xi) const = 0;
};

class Dynamics {
public:
    virtual ~Dynamics() = default;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t action_dim() const = 0;
    // tape may be null for plain evaluation.
    virtual std::unique_ptr<BoundDynamics> bind(ad::Tape* tape) const = 0;
    // xi with step(s, a, xi) == s_next (elementwise (s_next - mean) / sigma).
    virtual std::vector<double> infer_noise(const std::vector<double>& s, const std::vector<double>& a,
                                            const std::vector<double>& s_next) const = 0;
    // d s'/d s and d s'/d a at (s, a, xi).
    std::pair<Tensor, Tensor> jacobians(const std::vector<double>& s, const std::vector<double>& a,
                                        const std::vector<double>& xi) const;
};

// Gaussian network over concat(s, a) predicting the next-state mean, with a
// state-independent log-std.
class LearnedDynamics : public Dynamics {
public:
    explicit LearnedDynamics(const nets::GaussianNet& model, std::size_t action_dim);
    std::size_t state_dim() const override { return model_->output_dim(); }
    std::size_t action_dim() const override { return action_dim_; }
    std::unique_ptr<BoundDynamics> bind(ad::Tape* tape) const override;
    std::vector<double> infer_noise(const std::vector<double>& s, const std::vector<double>& a,
                                    const std::vector<double>& s_next) const override;
    const nets::GaussianNet& model() const noexcept { return *model_; }

private:
    const nets::GaussianNet* model_;
    std::size_t action_dim_;
};

class TrueDynamics : public Dynamics {
public:
    explicit TrueDynamics(const envs::EnvSpec& spec) : spec_(spec) {}
    std::size_t state_dim() const override { return spec_.state_dim; }
    std::size_t action_dim() const override { return spec_.action_dim; }
    std::unique_ptr<BoundDynamics> bind(ad::Tape* tape) const override;
    // Zero noise when the env is deterministic.
    std::vector<double> infer_noise(const std::vector<double>& s, const std::vector<double>& a,
                                    const std::vector<double>& s_next) const override;
    const envs::EnvSpec& spec() const noexcept { return spec_; }

private:
    envs::EnvSpec spec_;
};

class BoundCritic {
public:
    virtual ~BoundCritic() = default;
    // Scalar tensor (shape {}).
    virtual Tensor value(const Tensor& s, const Tensor& a) const = 0;
};

class Critic {
public:
    virtual ~Critic() = default;
    virtual std::unique_ptr<BoundCritic> bind(ad::Tape* tape) const = 0;
    double value(const std::vector<double>& s, const std::vector<double>& a) const;
    // dQ/ds and dQ/da at (s, a).
    std::pair<std::vector<double>, std::vector<double>> gradients(const std::vector<double>& s,
                                                                  const std::vector<double>& a) const;
};

// Scalar-head network over concat(s, a).
class NetCritic : public Critic {
public:
    explicit NetCritic(const nets::GaussianNet& net) : net_(&net) {}
    std::unique_ptr<BoundCritic> bind(ad::Tape* tape) const override;

private:
    const nets::GaussianNet* net_;
};

class ConstantCritic : public Critic {
public:
    explicit ConstantCritic(double c) : c_(c) {}
    std::unique_ptr<BoundCritic> bind(ad::Tape* tape) const override;

private:
    double c_;
};

class ZeroCritic : public ConstantCritic {
public:
    ZeroCritic() : ConstantCritic(0.0) {}
};

// scale * inner(s, a). The trainer's TD critic is (1 - gamma)-normalized; the
// expanded value reads it through scale 1 / (1 - gamma).
class ScaledCritic : public Critic {
public:
    ScaledCritic(const Critic& inner, double scale) : inner_(&inner), scale_(scale) {}
    std::unique_ptr<BoundCritic> bind(ad::Tape* tape) const override;

private:
    const Critic* inner_;
    double scale_;
};

// x^T H x + c with x = concat(s, a).
class QuadraticCritic : public Critic {
public:
    QuadraticCritic(std::vector<double> H, double c, std::size_t dim);
    // The closed-form LQG action value, multiplied by scale (1 gives the
    // (1 - gamma)-normalized Q; 1 / (1 - gamma) the unnormalized one).
    static QuadraticCritic from_lqg(const envs::EnvSpec& spec, const envs::LinearPolicy& policy, double scale = 1.0);
    std::unique_ptr<BoundCritic> bind(ad::Tape* tape) const override;

private:
    std::vector<double> H_;
    double c_;
    std::size_t dim_;
};

} // namespace rppgm::est
