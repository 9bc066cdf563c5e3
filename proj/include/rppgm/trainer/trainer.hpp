#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rppgm/estimators/estimators.hpp"
#include "rppgm/trainer/replay_buffer.hpp"

namespace rppgm::trainer {

using Json = nlohmann::ordered_json;
using ad::ParamVector;
using nets::GaussianNet;

enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(std::string_view s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Sgd;
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const OptimizerConfig&) const = default;
};

struct OptimizerState {
    std::vector<double> m, v;
    std::size_t step = 0;

    bool operator==(const OptimizerState&) const = default;
};

// params += lr * grad (plain ascent) or the bias-corrected Adam ascent step.
void ascend(ParamVector& params, const ParamVector& grad, const OptimizerConfig& cfg, OptimizerState& state);

// One episode in the true env, tagged with the policy iteration; every
// transition records the standard-normal draws it used.
Episode collect_episode(const envs::EnvSpec& env, const GaussianNet& policy, std::size_t steps, std::size_t tag,
                        Rng& rng);

// Gradient ascent on the mean Gaussian log-likelihood of s' given (s, a),
// `batches` minibatches of `batch_size` uniform transitions. Returns the mean
// negative log-likelihood of each batch before its step.
std::vector<double> update_model(GaussianNet& model, const ReplayBuffer& buffer, std::size_t batches,
                                 std::size_t batch_size, const OptimizerConfig& opt, OptimizerState& state, Rng& rng);

struct CriticUpdate {
    std::size_t batches = 64;
    std::size_t batch_size = 32;
    double gamma = 0.9;
    std::size_t target_interval = 100; // target refresh every this many updates
};

// Semi-gradient TD on (Q(s, a) - [(1 - gamma) r + gamma Q_target(s', a')])^2
// with a' drawn from the policy at s'. Returns the mean squared TD error of
// each batch before its step.
std::vector<double> update_critic(GaussianNet& critic, GaussianNet& target, std::size_t& update_count,
                                  const GaussianNet& policy, const ReplayBuffer& buffer, const CriticUpdate& cfg,
                                  const OptimizerConfig& opt, OptimizerState& state, Rng& rng);

enum class OracleKind { None, Lqg, Apg };

std::string_view to_string(OracleKind k);
OracleKind parse_oracle_kind(std::string_view s);

struct DiagConfig {
    OracleKind oracle = OracleKind::None;
    std::size_t every = 1;            // b_t, eps_f, eps_v every this many iterations
    std::size_t probes = 16;          // probe rollouts for eps_f and eps_v
    std::size_t oracle_samples = 256; // Monte-Carlo samples for APG-based oracles
    std::size_t oracle_horizon = 100;
    std::size_t q_samples = 16;       // pathwise samples per critic-error probe (APG oracle)
    double kappa = 1.0;
    double L1 = 1.0;
    double B_theta = 1.0;
    double c_prime = 0.0;
    bool wall_clock = false;          // wall_ms is 0 unless set, keeping logs reproducible

    bool operator==(const DiagConfig&) const = default;
};

struct TrainConfig {
    envs::EnvSpec env;
    nets::NetSpec policy, model, critic;
    est::EstimatorConfig estimator;
    std::size_t iterations = 100;
    OptimizerConfig policy_opt{OptimizerKind::Sgd, 1e-2};
    OptimizerConfig model_opt{OptimizerKind::Adam, 1e-3};
    OptimizerConfig critic_opt{OptimizerKind::Adam, 1e-3};
    std::size_t episodes_per_iter = 4;
    std::size_t episode_len = 50;
    std::size_t model_batches = 64;
    std::size_t model_batch_size = 32;
    std::size_t critic_batches = 64;
    std::size_t critic_batch_size = 32;
    std::size_t target_interval = 100;
    std::size_t buffer_capacity = 10000;
    std::size_t checkpoint_interval = 10;
    bool true_model = false; // differentiate through the env instead of the learned model
    DiagConfig diag;
    std::uint64_t seed = 0;
};

// Fills input/output widths of the three nets from the env dimensions.
void resolve_net_dims(TrainConfig& cfg);

struct DiagnosticsRow {
    std::size_t t = 0;
    double J_oracle = 0.0;
    double b = 0.0;
    double v = 0.0;
    double eps_f = 0.0;
    double eps_v = 0.0;
    double grad_norm = 0.0;
    double h_star = 0.0;
    double wall_ms = 0.0;

    bool operator==(const DiagnosticsRow&) const;
};

extern const char* const kDiagnosticsHeader;
std::string diagnostics_csv_line(const DiagnosticsRow& row);

struct TrainState {
    GaussianNet policy, model, critic, critic_target;
    OptimizerState policy_opt, model_opt, critic_opt;
    std::size_t t = 0;
    std::size_t critic_updates = 0;
    Rng rng;
    ReplayBuffer buffer;
    std::vector<DiagnosticsRow> history;

    bool operator==(const TrainState&) const = default;
};

// Nets from the config seed, then episodes_per_iter episodes of the initial
// policy (tag 0) in the buffer.
TrainState init_state(const TrainConfig& cfg);

// Estimator inputs for the current state (learned or true dynamics, critic
// read at the unnormalized scale).
struct EstimatorContext {
    std::unique_ptr<est::Dynamics> dynamics;
    std::unique_ptr<est::NetCritic> net_critic;
    std::unique_ptr<est::ScaledCritic> critic;
    est::EstimatorInputs inputs;
    est::EstimatorConfig config;
};
EstimatorContext estimator_context(const TrainConfig& cfg, const TrainState& state);

// Oracle value of the policy and its gradient w.r.t. the policy parameters,
// per cfg.diag.oracle (empty for None). Deterministic in (cfg.seed, salt).
struct OracleEval {
    double value = 0.0;
    std::vector<double> grad;
};
std::optional<OracleEval> oracle_eval(const TrainConfig& cfg, const GaussianNet& policy, std::uint64_t salt,
                                      bool with_gradient);

// Model update, critic update, gradient estimate and policy step, then
// data collection with the new policy. Appends one diagnostics row.
void train_iteration(const TrainConfig& cfg, TrainState& state);

Json state_to_json(const TrainState& state);
TrainState state_from_json(const Json& j);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

// Runs iterations state.t .. cfg.iterations - 1 inside `dir`, writing
// diagnostics.csv (rewritten from the history, then one line per iteration)
// and checkpoints/ckpt_{t}.json at t = 0, every checkpoint_interval, and T.
// Without `resume` the state starts from init_state.
TrainState run_training(const TrainConfig& cfg, const std::filesystem::path& dir,
                        std::optional<TrainState> resume = std::nullopt);

} // namespace rppgm::trainer
