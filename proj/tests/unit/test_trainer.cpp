#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rppgm/diagnostics/diagnostics.hpp"
#include "rppgm/trainer/trainer.hpp"

using namespace rppgm;
using namespace rppgm::trainer;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

ParamVector flat(std::vector<double> v) {
    ParamVector p;
    p.values = std::move(v);
    p.blocks.push_back({0, ad::ParamKind::Weight, 0, {p.values.size()}});
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("rppgm_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.env = envs::default_env(envs::EnvKind::LinearGaussian, 2, 1);
    cfg.policy.hidden = {4};
    cfg.model.hidden = {4};
    cfg.critic.hidden = {4};
    cfg.critic.head = nets::HeadKind::Scalar;
    cfg.estimator.h = 2;
    cfg.estimator.batch_size = 4;
    cfg.iterations = 4;
    cfg.episodes_per_iter = 1;
    cfg.episode_len = 10;
    cfg.model_batches = 2;
    cfg.model_batch_size = 4;
    cfg.critic_batches = 2;
    cfg.critic_batch_size = 4;
    cfg.checkpoint_interval = 2;
    cfg.diag.oracle = OracleKind::Apg;
    cfg.diag.oracle_samples = 8;
    cfg.diag.oracle_horizon = 10;
    cfg.diag.probes = 2;
    cfg.diag.q_samples = 2;
    cfg.seed = 17;
    resolve_net_dims(cfg);
    return cfg;
}

envs::EnvSpec deterministic_linear() {
    auto env = envs::default_env(envs::EnvKind::LinearGaussian, 2, 1);
    env.noise_std = 0.0;
    env.linear.A = {0.9, 0.1, 0.0, 0.8};
    env.linear.B = {0.5, 0.3};
    return env;
}

ReplayBuffer random_buffer(const envs::EnvSpec& env, std::size_t episodes, Rng& rng) {
    nets::NetSpec ps;
    ps.input_dim = env.state_dim;
    ps.output_dim = env.action_dim;
    ps.log_std_init = 0.0;
    nets::GaussianNet pol(ps, rng);
    ReplayBuffer buf(100000);
    for (std::size_t e = 0; e < episodes; ++e) buf.add_episode(collect_episode(env, pol, 20, 0, rng));
    return buf;
}

} // namespace

TEST(Optimizer, SgdZeroRateIsIdentity) {
    auto p = flat({1.0, -2.0, 3.0});
    OptimizerState st;
    ascend(p, flat({5.0, 5.0, 5.0}), {OptimizerKind::Sgd, 0.0}, st);
    EXPECT_EQ(p.values, (std::vector<double>{1.0, -2.0, 3.0}));
    ascend(p, flat({1.0, 0.0, -1.0}), {OptimizerKind::Sgd, 0.5}, st);
    EXPECT_EQ(p.values, (std::vector<double>{1.5, -2.0, 2.5}));
    EXPECT_THROW(ascend(p, flat({1.0}), {OptimizerKind::Sgd, 0.5}, st), ad::ShapeError);
}

TEST(Optimizer, AdamFirstStepIsSignTimesRate) {
    auto p = flat({0.0, 0.0, 0.0});
    OptimizerState st;
    ascend(p, flat({3.0, -0.01, 0.0}), {OptimizerKind::Adam, 0.1}, st);
    EXPECT_NEAR(p.values[0], 0.1, 1e-8);
    EXPECT_NEAR(p.values[1], -0.1, 1e-5);
    EXPECT_EQ(p.values[2], 0.0);
    EXPECT_EQ(st.step, 1u);
}

TEST(Optimizer, AscendsConcaveQuadratic) {
    for (auto kind : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
        auto p = flat({4.0, -3.0});
        OptimizerState st;
        for (int k = 0; k < 2000; ++k) {
            // f = -(x - 1)^2 - (y + 2)^2
            auto g = flat({-2 * (p.values[0] - 1), -2 * (p.values[1] + 2)});
            ascend(p, g, {kind, 0.05}, st);
        }
        EXPECT_NEAR(p.values[0], 1.0, 1e-3);
        EXPECT_NEAR(p.values[1], -2.0, 1e-3);
    }
    EXPECT_EQ(parse_optimizer_kind("adam"), OptimizerKind::Adam);
    EXPECT_THROW(parse_optimizer_kind("rmsprop"), Error);
}

TEST(CollectEpisode, RecordsNoisesThatReproduceTheStep) {
    auto env = envs::default_env(envs::EnvKind::LinearGaussian, 2, 1);
    Rng rng(1);
    nets::NetSpec ps;
    ps.input_dim = 2;
    ps.output_dim = 1;
    nets::GaussianNet pol(ps, rng);
    auto ep = collect_episode(env, pol, 5, 3, rng);
    ASSERT_EQ(ep.steps.size(), 5u);
    EXPECT_EQ(ep.policy_tag, 3u);
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
        const auto& tr = ep.steps[i];
        auto out = nets::net_forward(pol, Tensor::vector(tr.s));
        auto a = nets::gaussian_sample(out.mean, out.log_std, Tensor::vector(tr.policy_noise));
        EXPECT_EQ(a.data(), tr.a);
        auto st = envs::env_step(env, Tensor::vector(tr.s), a, Tensor::vector(tr.env_noise));
        EXPECT_EQ(st.next_state.data(), tr.s_next);
        EXPECT_EQ(st.reward.item(), tr.r);
        if (i + 1 < ep.steps.size()) EXPECT_EQ(ep.steps[i + 1].s, tr.s_next);
    }
}

TEST(ModelUpdate, ZeroRateLeavesModelUnchanged) {
    auto env = deterministic_linear();
    Rng rng(2);
    auto buf = random_buffer(env, 2, rng);
    nets::NetSpec ms;
    ms.input_dim = 3;
    ms.output_dim = 2;
    ms.hidden = {4};
    nets::GaussianNet model(ms, rng);
    auto before = model.params();
    OptimizerState st;
    update_model(model, buf, 3, 8, {OptimizerKind::Sgd, 0.0}, st, rng);
    EXPECT_EQ(model.params().values, before.values);
}

TEST(ModelUpdate, RepeatedTransitionLossDecreases) {
    ReplayBuffer buf(10);
    Episode ep;
    ep.steps.push_back({{0.5, -0.2}, {0.3}, -1.0, {0.4, 0.1}, {0.0, 0.0}, {0.0}});
    buf.add_episode(ep);
    Rng rng(3);
    nets::NetSpec ms;
    ms.input_dim = 3;
    ms.output_dim = 2;
    ms.hidden = {4};
    nets::GaussianNet model(ms, rng);
    OptimizerState st;
    auto losses = update_model(model, buf, 30, 1, {OptimizerKind::Sgd, 0.01}, st, rng);
    for (std::size_t k = 1; k < losses.size(); ++k) EXPECT_LT(losses[k], losses[k - 1]);
}

TEST(ModelUpdate, LinearModelRecoversLinearDynamics) {
    auto env = deterministic_linear();
    Rng rng(4);
    auto buf = random_buffer(env, 20, rng);
    nets::NetSpec ms;
    ms.input_dim = 3;
    ms.output_dim = 2;
    nets::GaussianNet model(ms, rng);
    OptimizerState st;
    update_model(model, buf, 3000, 32, {OptimizerKind::Adam, 5e-2}, st, rng);
    est::LearnedDynamics dyn(model, 1);
    nets::NetSpec ps;
    ps.input_dim = 2;
    ps.output_dim = 1;
    nets::GaussianNet pol(ps, rng);
    auto probes = diag::probe_rollouts(env, &dyn, pol, 3, 8, rng);
    EXPECT_LT(diag::estimate_model_error(dyn, env, probes, 3), 0.05);
}

TEST(CriticUpdate, ZeroRewardDrivesCriticToZero) {
    auto env = deterministic_linear();
    env.linear.Q = {0, 0, 0, 0};
    env.linear.R = {0};
    Rng rng(5);
    auto buf = random_buffer(env, 5, rng);
    nets::NetSpec cs;
    cs.input_dim = 3;
    cs.output_dim = 1;
    cs.hidden = {8};
    cs.head = nets::HeadKind::Scalar;
    nets::GaussianNet critic(cs, rng), target = critic;
    nets::NetSpec ps;
    ps.input_dim = 2;
    ps.output_dim = 1;
    nets::GaussianNet pol(ps, rng);
    std::size_t count = 0;
    OptimizerState st;
    update_critic(critic, target, count, pol, buf, {2000, 16, 0.9, 50}, {OptimizerKind::Adam, 3e-3}, st, rng);
    EXPECT_EQ(count, 2000u);
    for (std::size_t k = 0; k < 20; ++k) {
        const auto& tr = buf.transition(k);
        std::vector<double> x = tr.s;
        x.push_back(tr.a[0]);
        EXPECT_LT(std::abs(nets::net_forward(critic, Tensor::vector(x)).mean[0]), 0.01);
    }
}

TEST(CriticUpdate, GammaZeroFitsReward) {
    ReplayBuffer buf(10);
    Episode ep;
    ep.steps.push_back({{0.5, -0.2}, {0.3}, -0.7, {0.4, 0.1}, {0.0, 0.0}, {0.0}});
    buf.add_episode(ep);
    Rng rng(6);
    nets::NetSpec cs;
    cs.input_dim = 3;
    cs.output_dim = 1;
    cs.head = nets::HeadKind::Scalar;
    nets::GaussianNet critic(cs, rng), target = critic;
    nets::NetSpec ps;
    ps.input_dim = 2;
    ps.output_dim = 1;
    nets::GaussianNet pol(ps, rng);
    std::size_t count = 0;
    OptimizerState st;
    auto losses = update_critic(critic, target, count, pol, buf, {500, 1, 0.0, 10}, {OptimizerKind::Adam, 1e-2}, st, rng);
    EXPECT_NEAR(nets::net_forward(critic, Tensor::vector({0.5, -0.2, 0.3})).mean[0], -0.7, 1e-3);
    EXPECT_LT(losses.back(), losses.front());
    EXPECT_EQ(target.params().values, critic.params().values);
}

TEST(TrainIteration, ZeroPolicyRateKeepsPolicy) {
    auto cfg = small_config();
    cfg.policy_opt.lr = 0.0;
    auto state = init_state(cfg);
    auto before = state.policy.params().values;
    train_iteration(cfg, state);
    train_iteration(cfg, state);
    EXPECT_EQ(state.policy.params().values, before);
    EXPECT_EQ(state.t, 2u);
    ASSERT_EQ(state.history.size(), 2u);
    EXPECT_TRUE(std::isfinite(state.history[0].J_oracle));
    EXPECT_TRUE(std::isfinite(state.history[0].b));
    EXPECT_TRUE(std::isfinite(state.history[0].eps_f));
    EXPECT_EQ(state.history[0].wall_ms, 0.0);
    EXPECT_EQ(state.buffer.latest_tag(), 2u);
}

TEST(TrainIteration, OracleDisabledLeavesNaN) {
    auto cfg = small_config();
    cfg.diag.oracle = OracleKind::None;
    auto state = init_state(cfg);
    train_iteration(cfg, state);
    EXPECT_TRUE(std::isnan(state.history[0].J_oracle));
    EXPECT_TRUE(std::isnan(state.history[0].b));
    EXPECT_TRUE(std::isnan(state.history[0].eps_v));
    EXPECT_TRUE(std::isfinite(state.history[0].eps_f));
    EXPECT_NE(diagnostics_csv_line(state.history[0]).find("nan"), std::string::npos);
}

TEST(RunTraining, ZeroIterationsWritesHeaderAndInitialCheckpoint) {
    TempDir dir("t0");
    auto cfg = small_config();
    cfg.iterations = 0;
    run_training(cfg, dir.path);
    EXPECT_EQ(slurp(dir.path / "diagnostics.csv"), std::string(kDiagnosticsHeader) + "\n");
    EXPECT_TRUE(fs::exists(dir.path / "checkpoints" / "ckpt_0.json"));
    EXPECT_EQ(std::distance(fs::directory_iterator(dir.path / "checkpoints"), fs::directory_iterator{}), 1);
}

TEST(RunTraining, SameSeedGivesIdenticalLogs) {
    TempDir a("same_a"), b("same_b");
    auto cfg = small_config();
    run_training(cfg, a.path);
    run_training(cfg, b.path);
    const auto csv = slurp(a.path / "diagnostics.csv");
    EXPECT_EQ(csv, slurp(b.path / "diagnostics.csv"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    for (int t : {0, 2, 4}) EXPECT_TRUE(fs::exists(a.path / "checkpoints" / ("ckpt_" + std::to_string(t) + ".json")));
    EXPECT_FALSE(fs::exists(a.path / "checkpoints" / "ckpt_3.json"));

    TempDir c("same_c");
    cfg.seed = 18;
    run_training(cfg, c.path);
    EXPECT_NE(csv, slurp(c.path / "diagnostics.csv"));
}

TEST(RunTraining, ResumeMatchesUninterruptedRun) {
    TempDir full("resume_full"), part("resume_part");
    auto cfg = small_config();
    auto end_full = run_training(cfg, full.path);
    run_training(cfg, part.path);
    auto mid = load_checkpoint(part.path / "checkpoints" / "ckpt_2.json");
    EXPECT_EQ(mid.t, 2u);
    auto end_resumed = run_training(cfg, part.path, mid);
    EXPECT_TRUE(end_resumed == end_full);
    EXPECT_EQ(slurp(part.path / "diagnostics.csv"), slurp(full.path / "diagnostics.csv"));
}

TEST(Checkpoint, RoundTripAndErrors) {
    TempDir dir("ckpt");
    auto cfg = small_config();
    auto state = init_state(cfg);
    train_iteration(cfg, state);
    const auto path = dir.path / "c.json";
    save_checkpoint(state, path);
    auto back = load_checkpoint(path);
    EXPECT_TRUE(back == state);
    EXPECT_TRUE(back.rng == state.rng);
    EXPECT_TRUE(state_from_json(state_to_json(state)) == state);

    const auto text = slurp(path);
    {
        std::ofstream out(dir.path / "trunc.json");
        out << text.substr(0, text.size() / 2);
    }
    EXPECT_THROW(load_checkpoint(dir.path / "trunc.json"), Error);

    auto j = state_to_json(state);
    j["version"] = 99;
    EXPECT_THROW(state_from_json(j), Error);
    EXPECT_THROW(load_checkpoint(dir.path / "missing.json"), Error);
}
