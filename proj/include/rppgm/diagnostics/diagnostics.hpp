#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rppgm/estimators/components.hpp"

namespace rppgm::diag {

using ad::ParamVector;
using Vec = std::vector<double>;

struct Variance {
    double single = 0.0; // sum ||g_n - mean||^2 / (N - 1)
    double batch = 0.0;  // single / N, the variance of the batch mean
};

Variance estimate_gradient_variance(std::span<const ParamVector> grads);

struct Bias {
    double distance = 0.0;
    double cosine = 0.0; // 0 when either vector is zero
};

Bias estimate_gradient_bias(const std::vector<double>& estimate, const std::vector<double>& oracle);

// Matched probe rollouts: the true env and the model start from the same s_0
// and consume the same noises. Index [m][i] for rollout m, step i = 0..h.
struct Probes {
    std::vector<std::vector<Vec>> s, a;             // true env
    std::vector<std::vector<Vec>> model_s, model_a; // model (copies of s, a without a model)
    std::vector<std::vector<Vec>> xi;               // transition noise for steps 0..h-1
};

// model null reuses the true rollouts for both sets.
Probes probe_rollouts(const envs::EnvSpec& env, const est::Dynamics* model, const nets::GaussianNet& policy,
                      std::size_t h, std::size_t m, Rng& rng);

// max over i in 1..h of the probe mean of ||ds_i/ds_{i-1} - model||_2 +
// ||ds_i/da_{i-1} - model||_2, spectral norms by 20 power iterations. 0 at h = 0.
double estimate_model_error(const est::Dynamics& model, const envs::EnvSpec& env, const Probes& probes,
                            std::size_t h);

// dQ/ds and dQ/da of the true action value.
using QGradOracle = std::function<std::pair<Vec, Vec>(const Vec& s, const Vec& a)>;

// alpha^2 times the probe mean of ||dQ/ds - dQhat/ds|| + ||dQ/da - dQhat/da||
// with alpha = (1 - gamma) / gamma^h; true gradients at the true step-h pairs,
// critic gradients at the model ones.
double estimate_critic_error(const est::Critic& critic, const QGradOracle& oracle, const Probes& probes,
                             std::size_t h, double gamma);

// Unnormalized LQG action-value gradients (the scale the expanded value uses
// for its critic tail).
QGradOracle lqg_q_oracle(const envs::EnvSpec& env, const envs::LinearPolicy& policy);

// Pathwise Monte-Carlo gradients of sum_{i<horizon} gamma^i r_i starting from
// (s, a) in the true env, with `samples` fixed noise draws.
QGradOracle pathwise_q_oracle(const envs::EnvSpec& env, const nets::GaussianNet& policy, std::size_t horizon,
                              std::size_t samples, std::uint64_t seed);

struct OptimalH {
    std::size_t h = 0;
    std::optional<double> h_real; // empty when the quadratic has no real root
};

// H = 1/(1-gamma), c1 = ef + ev + c'. With disc = (4 H ev)^2 - 12 c1 ev H^2 >= 0
// the larger root (4 H ev + sqrt(disc)) / (6 c1) is h_real, and h is whichever
// neighbouring integer gives the smaller g1(h) = h^3 (ef + c') + h (H - h)^2 ev;
// else h = 0.
OptimalH optimal_h(double eps_f, double eps_v, double gamma, double c_prime = 0.0);

// L = r_m L1 / (1-gamma)^2 + (1+gamma) r_m B^2 / (1-gamma)^3.
double smoothness_constant(double r_m, double L1, double B_theta, double gamma);

double kappa_prime(double beta, double kappa);

struct BoundInputs {
    std::vector<double> b;  // b_t per iteration
    std::vector<double> v;  // v_t per iteration
    double eta = 0.0;
    double L = 0.0;
    double delta = 0.0;     // sup ||theta||
    double delta_J = 0.0;   // E[J(theta_T) - J(theta_1)]
};

struct BoundResult {
    double c = 0.0;          // 1 / (eta - L eta^2)
    double rhs = 0.0;        // gradient-norm bound of the convergence proposition
    double corollary = 0.0;  // 16 delta eps / sqrt(T) + 4 eps^2 / T, eps = sum b_t
    double sum_part = 0.0;   // (4/T) sum_t (c (2 delta b_t + eta v_t / 2) + b_t^2 + v_t)
};

// T is the length of b and v.
BoundResult convergence_bound(const BoundInputs& in);
// Same, given c directly.
BoundResult convergence_bound_with_c(const BoundInputs& in, double c);

// Random direction with every parameter block rescaled to that block's norm
// in `params` (blocks with zero norm stay zero).
ParamVector filter_normalized_direction(const ParamVector& params, Rng& rng);

struct Landscape {
    std::vector<double> u, w;      // axis values, 2R+1 each
    std::vector<double> values;    // row-major over (u, w)
};

// -value(theta0 + u d1 + w d2) on a (2R+1)^2 grid spanning [-extent, extent].
Landscape loss_landscape_slice(const ParamVector& theta0, const ParamVector& d1, const ParamVector& d2,
                               double extent, std::size_t resolution,
                               const std::function<double(const ParamVector&)>& value);

// Lower bound on the Lipschitz constant of f over the box [lo, hi]: max over
// m random pairs, m local probes, and a probe along the top right singular
// vector of a finite-difference Jacobian at the box centre.
double probe_lipschitz(const std::function<Vec(const Vec&)>& f, const Vec& lo, const Vec& hi, std::size_t m,
                       Rng& rng);

} // namespace rppgm::diag
