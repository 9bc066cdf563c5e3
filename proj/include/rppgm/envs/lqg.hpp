#pragma once

#include <cstddef>
#include <vector>

#include "rppgm/envs/env.hpp"

namespace rppgm::envs {

// Linear Gaussian policy a = K s + exp(log_std) * noise on a linear-gaussian
// env. K is action_dim x state_dim, row-major.
struct LinearPolicy {
    std::vector<double> K;
    std::vector<double> log_std;
};

struct LqgResult {
    // (1 - gamma) * E sum_{i < horizon} gamma^i r_i with s_0 ~ init distribution.
    double value = 0.0;
    std::vector<double> grad_K;       // d value / d K, action_dim x state_dim
    std::vector<double> grad_log_std; // d value / d log_std
    // Exact magnitude of the discarded tail sum_{i >= horizon}; infinite when
    // gamma * rho(A + BK)^2 >= 1. Shrinks monotonically as horizon grows.
    double tail_bound = 0.0;
};

// Second moments E[s_i s_i^T] are propagated forward and the value matrices
// backward (adjoint recursion), giving exact values and gradients of the
// truncated objective.
LqgResult lqg_policy_value_and_gradient(const EnvSpec& spec, const LinearPolicy& policy, std::size_t horizon);

// Closed-form action value of the infinite-horizon problem, normalized by
// (1 - gamma) like every value in the library:
//   Q(s, a) = -(1 - gamma) [s^T Q s + a^T R a + gamma m^T P m + gamma c],
// m = A s + B a, P = Q + K^T R K + gamma M^T P M (M = A + B K), and
// c = noise_std^2 tr(P) + (tr(R D) + gamma tr(P W)) / (1 - gamma),
// W = B D B^T + noise_std^2 I, D = diag(exp(2 log_std)).
class LqgQFunction {
public:
    LqgQFunction(const EnvSpec& spec, const LinearPolicy& policy);

    double value(const std::vector<double>& s, const std::vector<double>& a) const;
    std::vector<double> grad_s(const std::vector<double>& s, const std::vector<double>& a) const;
    std::vector<double> grad_a(const std::vector<double>& s, const std::vector<double>& a) const;
    // Expected normalized value of a state, E_a Q(s, a).
    double state_value(const std::vector<double>& s) const;

    const std::vector<double>& P() const noexcept { return P_; }
    double offset() const noexcept { return offset_; }

private:
    EnvSpec spec_;
    LinearPolicy policy_;
    std::vector<double> P_; // state_dim x state_dim
    double offset_ = 0.0;   // gamma * c
};

} // namespace rppgm::envs
