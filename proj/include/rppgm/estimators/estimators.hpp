#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "rppgm/estimators/components.hpp"
#include "rppgm/trainer/replay_buffer.hpp"

namespace rppgm::est {

using ad::ParamVector;
using trainer::ReplayBuffer;

enum class EstimatorKind { DP, DR, LR, APG };

std::string_view to_string(EstimatorKind k);
EstimatorKind parse_estimator_kind(std::string_view s);

struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::DP;
    std::size_t h = 3;
    std::size_t batch_size = 32;
    double gamma = 0.9;
    double beta = 0.0;         // weight of buffer states in the initial-state mixture
    double entropy_coef = 0.0; // adds -coef * log pi(a_0 | s_0) to the expanded value
    std::size_t apg_horizon = 100;
    bool lr_baseline = false;  // subtract the batch-mean weight per step in LR
    bool dr_recursion = false; // compute DR gradients with the explicit backward recursion
};

struct GradientEstimate {
    ParamVector grad;                    // fixed-order mean of per_sample
    std::vector<ParamVector> per_sample;
    std::vector<double> values;          // per-sample objective values
    double value_mean = 0.0;
    double tail_mass = 0.0;              // gamma^horizon for APG, 0 otherwise
};

struct InitialStates {
    std::vector<std::vector<double>> states;
    std::vector<bool> from_buffer;
};

// Each state comes from the buffer (uniform over stored transitions) with
// probability beta, otherwise from the env's initial distribution. One uniform
// is drawn per state regardless of beta, so streams stay aligned across beta.
InitialStates sample_initial_states(double beta, const envs::EnvSpec& env, const ReplayBuffer* buffer,
                                    std::size_t n, Rng& rng);

// Policy noise for steps 0..h and transition noise for steps 0..h-1.
struct RolloutNoise {
    std::vector<std::vector<double>> action;
    std::vector<std::vector<double>> state;
};

RolloutNoise draw_noise(std::size_t h, std::size_t state_dim, std::size_t action_dim, Rng& rng);

// (1 - gamma) (sum_{i<h} gamma^i r(s_i, a_i) + gamma^h Q(s_h, a_h)), minus
// entropy_coef * log pi(a_0 | s_0) when entropy_coef > 0, with
// a_i = mu(s_i) + sigma * action_noise_i and s_{i+1} = f(s_i, a_i, state_noise_i).
Tensor mve_value(const nets::BoundNet& policy, const BoundDynamics& dynamics, const BoundCritic& critic,
                 const RewardFn& reward, const Tensor& s0, const RolloutNoise& noise, std::size_t h, double gamma,
                 double entropy_coef = 0.0);

// Everything an estimator reads. Pointers are non-owning; env is needed for
// the initial distribution and APG; buffer for beta > 0 and DR.
struct EstimatorInputs {
    const nets::GaussianNet* policy = nullptr;
    const Dynamics* dynamics = nullptr;
    const Critic* critic = nullptr;
    RewardFn reward;
    const envs::EnvSpec* env = nullptr;
    const ReplayBuffer* buffer = nullptr;
};

// One frozen sample of the expanded-value objective.
struct PathSample {
    std::vector<double> s0;
    RolloutNoise noise;
};

// One sample per initial state; noise for sample n comes from a generator
// seeded with derive_seed(base, n), base drawn once from rng.
std::vector<PathSample> draw_path_samples(const InitialStates& init, std::size_t h, std::size_t state_dim,
                                          std::size_t action_dim, Rng& rng);

// Pathwise gradient of the mean expanded value over fixed samples.
GradientEstimate pathwise_gradient(const EstimatorInputs& in, const std::vector<PathSample>& samples,
                                   std::size_t h, double gamma, double entropy_coef = 0.0);
// The same objective evaluated without a tape.
double pathwise_objective(const EstimatorInputs& in, const std::vector<PathSample>& samples, std::size_t h,
                          double gamma, double entropy_coef = 0.0);

GradientEstimate rp_dp_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng);

// Noises reproducing a real segment of h + 1 steps under the current policy
// and dynamics: policy noise from each a_i, transition noise from each s_{i+1}.
RolloutNoise infer_noises(const nets::GaussianNet& policy, const Dynamics& dynamics,
                          const std::vector<const trainer::Transition*>& segment, std::size_t h);

// DR samples: consecutive segments from the latest policy's episodes with
// inferred noises.
std::vector<PathSample> dr_samples(const EstimatorInputs& in, std::size_t h, std::size_t n, Rng& rng);

// Per-sample DR gradient through the explicit backward recursion over
// materialized local Jacobians (policy, model, reward and critic).
ParamVector dr_recursion_gradient(const EstimatorInputs& in, const PathSample& sample, std::size_t h,
                                  double gamma);

GradientEstimate rp_dr_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng);

// Frozen trajectory for the score-function estimator.
struct ScoreSample {
    std::vector<std::vector<double>> states;  // s_0..s_h
    std::vector<std::vector<double>> actions; // a_0..a_h
    std::vector<double> weights;              // discounted return-to-go per step
};

std::vector<ScoreSample> lr_samples(const EstimatorInputs& in, const std::vector<PathSample>& paths, std::size_t h,
                                    double gamma, bool baseline);
GradientEstimate score_gradient(const nets::GaussianNet& policy, const std::vector<ScoreSample>& samples);
// Mean over samples of sum_i weight_i log pi(a_i | s_i); its gradient at the
// sampling parameters is the LR estimate.
double score_surrogate(const nets::GaussianNet& policy, const std::vector<ScoreSample>& samples);

GradientEstimate lr_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng);

// Pathwise gradient through the true env for apg_horizon steps from s_0 drawn
// from the initial distribution, with no critic tail.
GradientEstimate apg_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng);

// Dispatches on cfg.kind.
GradientEstimate estimate_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng);

} // namespace rppgm::est
