#pragma once

#include <cstddef>
#include <string_view>
#include <utility>
#include <vector>

#include "rppgm/ad/tensor.hpp"
#include "rppgm/util/rng.hpp"

namespace rppgm::envs {

using ad::Tensor;

enum class EnvKind { LinearGaussian, Pendulum, Chaotic };

std::string_view to_string(EnvKind k);
EnvKind parse_env_kind(std::string_view s);

// Row-major matrices. s' = A s + B a + noise_std * xi,
// r = -(s^T Q s + a^T R a).
struct LinearParams {
    std::vector<double> A, B, Q, R;
};

// State [angle, velocity], one torque action. Semi-implicit Euler:
// w' = w + dt (-(g/l) sin(angle) + a / (m l^2)), angle' = angle + dt w'.
// r = -(angle^2 + 0.1 w^2 + 0.001 |a|^2).
struct PendulumParams {
    double dt = 0.05;
    double gravity = 9.8;
    double length = 1.0;
    double mass = 1.0;
};

// Elementwise logistic map with additive control (d_a = d_s):
// s' = clamp(lambda s (1 - s) + coupling a + noise_std * xi, -10, 10),
// r = -|s - goal|^2.
struct ChaoticParams {
    double lambda = 3.9;
    double coupling = 0.1;
    std::vector<double> goal;
};

inline constexpr double kChaoticStateBound = 10.0;

struct EnvSpec {
    EnvKind kind = EnvKind::LinearGaussian;
    std::size_t state_dim = 1;
    std::size_t action_dim = 1;
    double gamma = 0.9;
    std::vector<double> init_mean;
    std::vector<double> init_var;
    double noise_std = 0.0;
    LinearParams linear;
    PendulumParams pendulum;
    ChaoticParams chaotic;

    // Throws Error describing the first violated constraint.
    void validate() const;
    // Analytic Lipschitz constant of the noise-free transition in (s, a):
    // sigma_max([A B]) for linear; the maximum over angles of the Jacobian's
    // spectral norm for the pendulum; sqrt(lambda^2 + coupling^2) for the
    // chaotic map on the unit box 0 <= s <= 1.
    double lipschitz() const;
};

// Default parameters for each kind with the given dimensions (pendulum is
// always 2-state/1-action; chaotic uses action_dim = state_dim).
EnvSpec default_env(EnvKind kind, std::size_t state_dim = 1, std::size_t action_dim = 1);

struct StepResult {
    Tensor next_state;
    Tensor reward; // shape {}
};

// Differentiable transition; results are on the tape of s or a when present.
StepResult env_step(const EnvSpec& spec, const Tensor& s, const Tensor& a, const Tensor& noise);
// Reward alone (same expression as env_step).
Tensor env_reward(const EnvSpec& spec, const Tensor& s, const Tensor& a);

// Exact d s'/d s (state x state) and d s'/d a (state x action).
std::pair<Tensor, Tensor> env_jacobians(const EnvSpec& spec, const Tensor& s, const Tensor& a, const Tensor& noise);

std::vector<double> sample_initial_state(const EnvSpec& spec, Rng& rng);

} // namespace rppgm::envs
