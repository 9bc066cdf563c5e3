// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Usage: acceptance [criterion numbers...]   (all when none are given)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "rppgm/diagnostics/diagnostics.hpp"
#include "rppgm/envs/lqg.hpp"
#include "rppgm/trainer/trainer.hpp"
#include "support/oracles.hpp"

using namespace rppgm;
using namespace rppgm::est;
using ad::ParamVector;
using ad::Tensor;
using nets::GaussianNet;
using nets::NetSpec;
using trainer::ReplayBuffer;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

NetSpec mlp(std::size_t in, std::size_t out, std::vector<std::size_t> hidden, bool gaussian = true) {
    NetSpec s;
    s.input_dim = in;
    s.output_dim = out;
    s.hidden = std::move(hidden);
    s.head = gaussian ? nets::HeadKind::Gaussian : nets::HeadKind::Scalar;
    return s;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

ParamVector fd_policy(const GaussianNet& policy, const std::function<double(const GaussianNet&)>& f) {
    return ad::finite_difference_grad(
        [&](const ParamVector& p) {
            GaussianNet copy = policy;
            copy.set_params(p);
            return f(copy);
        },
        policy.params(), 1e-5);
}

// Random small nets on the 2-d linear-gaussian env.
struct Problem {
    envs::EnvSpec env = envs::default_env(envs::EnvKind::LinearGaussian, 2, 2);
    GaussianNet policy, model, critic_net;

    explicit Problem(std::uint64_t seed) {
        Rng rng(seed);
        policy = GaussianNet(mlp(2, 2, {6}), rng);
        model = GaussianNet(mlp(4, 2, {6}), rng);
        critic_net = GaussianNet(mlp(4, 1, {6}, false), rng);
        policy.log_std().assign(2, -0.7);
        model.log_std().assign(2, -2.0);
    }
};

ReplayBuffer rollouts(const envs::EnvSpec& env, const GaussianNet& policy, std::size_t episodes, std::size_t len,
                      Rng& rng) {
    ReplayBuffer buf(100000);
    for (std::size_t e = 0; e < episodes; ++e) buf.add_episode(trainer::collect_episode(env, policy, len, 0, rng));
    return buf;
}

// Mean gradient of each estimator against central differences of the same
// frozen-noise objective.
Outcome c1_gradient_correctness() {
    double worst = 0.0;
    std::string where;
    for (auto kind : {EstimatorKind::DP, EstimatorKind::DR, EstimatorKind::LR, EstimatorKind::APG}) {
        for (std::size_t h : {0u, 1u, 3u, 5u}) {
            Problem p(1000 + 10 * static_cast<std::uint64_t>(kind) + h);
            LearnedDynamics dyn(p.model, 2);
            NetCritic critic(p.critic_net);
            Rng data(h + 7);
            ReplayBuffer buf = rollouts(p.env, p.policy, 4, 12, data);
            EstimatorInputs in{&p.policy, &dyn, &critic, env_reward_fn(p.env), &p.env, &buf};
            EstimatorConfig cfg;
            cfg.kind = kind;
            cfg.h = h;
            cfg.batch_size = 8;
            cfg.gamma = p.env.gamma;
            cfg.apg_horizon = std::max<std::size_t>(h, 1);
            Rng r1(h + 31), r2(h + 31);
            auto est = estimate_gradient(in, cfg, r1);

            std::function<double(const GaussianNet&)> objective;
            std::vector<PathSample> samples;
            std::vector<ScoreSample> scores;
            EstimatorInputs frozen = in;
            TrueDynamics truth(p.env);
            ZeroCritic zero;
            std::size_t horizon = h;
            switch (kind) {
            case EstimatorKind::DP: {
                auto init = sample_initial_states(0.0, p.env, nullptr, cfg.batch_size, r2);
                samples = draw_path_samples(init, h, 2, 2, r2);
                break;
            }
            case EstimatorKind::DR: samples = dr_samples(in, h, cfg.batch_size, r2); break;
            case EstimatorKind::LR: {
                auto init = sample_initial_states(0.0, p.env, nullptr, cfg.batch_size, r2);
                scores = lr_samples(in, draw_path_samples(init, h, 2, 2, r2), h, cfg.gamma, false);
                break;
            }
            case EstimatorKind::APG: {
                horizon = cfg.apg_horizon;
                frozen.dynamics = &truth;
                frozen.critic = &zero;
                auto init = sample_initial_states(0.0, p.env, nullptr, cfg.batch_size, r2);
                samples = draw_path_samples(init, horizon, 2, 2, r2);
                break;
            }
            }
            if (kind == EstimatorKind::LR) {
                objective = [&](const GaussianNet& q) { return score_surrogate(q, scores); };
            } else {
                objective = [&](const GaussianNet& q) {
                    EstimatorInputs qi = frozen;
                    qi.policy = &q;
                    return pathwise_objective(qi, samples, horizon, cfg.gamma);
                };
            }
            const double err = rel_err(est.grad.values, fd_policy(p.policy, objective).values);
            if (err > worst || where.empty()) {
                worst = std::max(worst, err);
                where = std::string(to_string(kind)) + " h=" + std::to_string(h);
            }
        }
    }
    return {worst <= 1e-5, "max relative error " + fmt(worst) + " (" + where + "), tolerance 1e-5"};
}

// One-step Gaussian bandit: RP and LR means agree, RP has lower variance.
Outcome c2_rp_lr_equivalence() {
    Rng rng(4);
    GaussianNet pol(mlp(1, 1, {}), rng);
    pol.layers()[0].weight = {0.5};
    pol.layers()[0].bias = {0.2};
    pol.log_std() = {-0.5};
    auto env = envs::default_env(envs::EnvKind::LinearGaussian, 1, 1);
    TrueDynamics dyn(env);
    ZeroCritic critic;
    RewardFn bandit = [](const Tensor& s, const Tensor& a) {
        return ad::neg(ad::sum(ad::square(ad::sub(a, ad::scale(s, 2.0)))));
    };
    EstimatorInputs in{&pol, &dyn, &critic, bandit, &env, nullptr};
    EstimatorConfig cfg;
    cfg.h = 1;
    cfg.gamma = 0.5;
    cfg.batch_size = 100000;
    Rng r1(6), r2(6);
    cfg.kind = EstimatorKind::DP;
    auto rp = estimate_gradient(in, cfg, r1);
    cfg.kind = EstimatorKind::LR;
    auto lr = estimate_gradient(in, cfg, r2);
    double worst_z = 0.0;
    for (std::size_t k = 0; k < rp.grad.size(); ++k) {
        std::vector<double> a, b;
        for (const auto& g : rp.per_sample) a.push_back(g.values[k]);
        for (const auto& g : lr.per_sample) b.push_back(g.values[k]);
        auto [ma, sa] = oracle::mean_se(a);
        auto [mb, sb] = oracle::mean_se(b);
        worst_z = std::max(worst_z, std::abs(ma - mb) / std::hypot(sa, sb));
    }
    const double v_rp = diag::estimate_gradient_variance(rp.per_sample).single;
    const double v_lr = diag::estimate_gradient_variance(lr.per_sample).single;
    return {worst_z <= 3.0 && v_rp <= v_lr, "max |mean diff| " + fmt(worst_z) + " s.e. (limit 3); variance RP " +
                                                fmt(v_rp) + " vs LR " + fmt(v_lr)};
}

// DR with the true model equals APG on recorded noise; recursion equals tape.
Outcome c3_dr_fidelity() {
    double worst_apg = 0.0, worst_rec = 0.0;
    for (std::size_t h = 0; h <= 5; ++h) {
        for (std::uint64_t rep = 0; rep < 3; ++rep) {
            Problem p(2000 + 10 * h + rep);
            TrueDynamics truth(p.env);
            NetCritic critic(p.critic_net);
            EstimatorInputs in{&p.policy, &truth, &critic, env_reward_fn(p.env), &p.env, nullptr};
            Rng rng(h * 17 + rep);
            ReplayBuffer buf = rollouts(p.env, p.policy, 1, h + 1, rng);
            std::vector<const trainer::Transition*> seg;
            for (const auto& t : buf.episodes()[0].steps) seg.push_back(&t);
            PathSample inferred{seg[0]->s, infer_noises(p.policy, truth, seg, h)};
            PathSample recorded{seg[0]->s, {}};
            for (std::size_t i = 0; i <= h; ++i) recorded.noise.action.push_back(seg[i]->policy_noise);
            for (std::size_t i = 0; i < h; ++i) recorded.noise.state.push_back(seg[i]->env_noise);
            auto dr = pathwise_gradient(in, {inferred}, h, p.env.gamma);
            auto apg = pathwise_gradient(in, {recorded}, h, p.env.gamma);
            worst_apg = std::max(worst_apg, max_abs_diff(dr.grad.values, apg.grad.values));

            LearnedDynamics dyn(p.model, 2);
            EstimatorInputs li{&p.policy, &dyn, &critic, env_reward_fn(p.env), &p.env, nullptr};
            PathSample random{envs::sample_initial_state(p.env, rng), draw_noise(h, 2, 2, rng)};
            auto tape = pathwise_gradient(li, {random}, h, p.env.gamma);
            auto rec = dr_recursion_gradient(li, random, h, p.env.gamma);
            worst_rec = std::max(worst_rec, max_abs_diff(rec.values, tape.per_sample[0].values));
        }
    }
    return {worst_apg <= 1e-9 && worst_rec <= 1e-10, "DR vs APG max diff " + fmt(worst_apg) +
                                                         " (limit 1e-9); recursion vs tape " + fmt(worst_rec) +
                                                         " (limit 1e-10)"};
}

struct VarianceCurve {
    std::vector<double> v; // index h - 1
};

// Variance of the DP estimator on the chaotic map for h = 1..15 with models
// and critic fit to the same data; `sn` normalizes policy and model.
VarianceCurve chaotic_variance(std::uint64_t seed, bool sn) {
    auto env = envs::default_env(envs::EnvKind::Chaotic, 1, 1);
    env.chaotic.lambda = 3.9;
    // Small enough that actions cannot push the state off the attractor
    // [0.095, 0.975], where the map diverges to the clamp.
    env.chaotic.coupling = 0.01;
    NetSpec ps = mlp(1, 1, {16});
    ps.log_std_init = -3.0;
    ps.sn = sn;
    NetSpec ms = mlp(2, 1, {32});
    ms.sn = sn;
    Rng init(seed);
    GaussianNet policy(ps, init), model(ms, init);

    // Data and critic come from the unnormalized policy in both arms.
    NetSpec ps_plain = ps;
    ps_plain.sn = false;
    Rng init2(seed);
    GaussianNet behaviour(ps_plain, init2);
    Rng data(derive_seed(seed, 1));
    ReplayBuffer buf = rollouts(env, behaviour, 40, 50, data);
    trainer::OptimizerState ms_state, cs_state;
    Rng fit(derive_seed(seed, 2));
    trainer::update_model(model, buf, 3000, 32, {trainer::OptimizerKind::Adam, 3e-3}, ms_state, fit);
    Rng cinit(derive_seed(seed, 3));
    GaussianNet cnet(mlp(2, 1, {16}, false), cinit), target = cnet;
    std::size_t count = 0;
    Rng cfit(derive_seed(seed, 4));
    trainer::update_critic(cnet, target, count, behaviour, buf, {2000, 32, env.gamma, 100},
                           {trainer::OptimizerKind::Adam, 3e-3}, cs_state, cfit);

    LearnedDynamics dyn(model, 1);
    NetCritic nc(cnet);
    ScaledCritic critic(nc, 1.0 / (1.0 - env.gamma));
    EstimatorInputs in{&policy, &dyn, &critic, env_reward_fn(env), &env, nullptr};
    // Paired samples across h: each path is drawn once at h = 15 and
    // truncated, so v(h) follows the same trajectories as h grows.
    Rng r(derive_seed(seed, 5));
    const auto starts = sample_initial_states(0.0, env, nullptr, 2048, r);
    const auto full = draw_path_samples(starts, 15, 1, 1, r);
    VarianceCurve out;
    for (std::size_t h = 1; h <= 15; ++h) {
        auto paths = full;
        for (auto& p : paths) {
            p.noise.action.resize(h + 1);
            p.noise.state.resize(h);
        }
        out.v.push_back(diag::estimate_gradient_variance(pathwise_gradient(in, paths, h, env.gamma).per_sample).single);
    }
    return out;
}

double r_squared_log(const std::vector<double>& v) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const double n = static_cast<double>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = static_cast<double>(i + 1), y = std::log(v[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
    return cov * cov / (vx * vy);
}

Outcome c4_variance_explosion() {
    bool pass = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto vanilla = chaotic_variance(seed, false);
        auto normalized = chaotic_variance(seed, true);
        const double growth = vanilla.v.back() / vanilla.v.front();
        const double r2 = r_squared_log(vanilla.v);
        const double rescue = vanilla.v.back() / normalized.v.back();
        pass = pass && growth >= 1e3 && r2 >= 0.9 && rescue >= 10.0;
        detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": v(15)/v(1) " +
                  fmt(growth) + ", R2 " + fmt(r2) + ", vanilla/SN at h=15 " + fmt(rescue);
    }
    return {pass, detail + " (limits 1e3, 0.9, 10)"};
}

Outcome c5_sn_contract() {
    double worst_sigma = 0.0, worst_lip = 0.0;
    Rng rng(55);
    struct Arch {
        std::vector<std::size_t> hidden;
        nets::Activation act;
        nets::SnMask mask;
    };
    const std::vector<Arch> archs = {{{16, 16}, nets::Activation::Tanh, nets::SnMask::All},
                                     {{32}, nets::Activation::Relu, nets::SnMask::All},
                                     {{8, 8, 8}, nets::Activation::LeakyRelu, nets::SnMask::AllButFinal},
                                     {{}, nets::Activation::Tanh, nets::SnMask::All}};
    for (const auto& a : archs) {
        NetSpec s = mlp(3, 2, a.hidden);
        s.activation = a.act;
        s.sn = true;
        s.sn_mask = a.mask;
        GaussianNet net(s, rng);
        for (auto& l : net.layers())
            for (auto& w : l.weight) w *= 4.0;
        nets::apply_spectral_normalization(net, 50);
        const std::size_t masked = net.masked_layers();
        for (std::size_t i = 0; i < masked; ++i) {
            const auto& l = net.layers()[i];
            const double sigma = oracle::spectral_norm(net.effective_weight(i), l.out, l.in);
            worst_sigma = std::max(worst_sigma, std::abs(sigma - 1.0));
        }
        const std::size_t width = masked == net.layers().size() ? 2 : net.layers()[masked - 1].out;
        nets::BoundNet bound(net, nullptr, false);
        auto chain = [&](const diag::Vec& x) {
            if (masked == net.layers().size()) return bound.forward(Tensor::vector(x)).mean.data();
            return bound.forward_prefix(Tensor::vector(x), masked).data();
        };
        (void)width;
        worst_lip = std::max(worst_lip, diag::probe_lipschitz(chain, {-2, -2, -2}, {2, 2, 2}, 1000, rng));
    }
    return {worst_sigma <= 1e-3 && worst_lip <= 1 + 1e-3, "max |sigma - 1| " + fmt(worst_sigma) +
                                                               " (limit 1e-3); max probed Lipschitz " +
                                                               fmt(worst_lip) + " (limit 1.001)"};
}

Outcome c6_optimal_h() {
    std::size_t checked = 0, mismatches = 0, branch_errors = 0;
    const auto worked = diag::optimal_h(0.01, 0.1, 0.99);
    bool worked_ok = worked.h == 86 && oracle::brute_force_h(0.01, 0.1, 0.0, 100.0) == 86;
    // ev never equals 3 ef on this grid, so no point sits on disc = 0 where
    // the double root is an inflection rather than a minimum.
    for (double gamma : {0.9, 0.95, 0.98, 0.99, 0.995}) {
        for (double ef : {0.0, 0.001, 0.01, 0.05, 0.1}) {
            for (double ev : {0.0, 0.002, 0.02, 0.07, 0.2, 0.5, 1.3, 3.7}) {
                const double H = 1.0 / (1.0 - gamma);
                auto r = diag::optimal_h(ef, ev, gamma);
                ++checked;
                if (ef + ev > 0.0) { // g1 is identically zero otherwise
                    auto bf = oracle::brute_force_h(ef, ev, 0.0, H);
                    if (static_cast<long>(r.h) != (bf ? *bf : 0)) ++mismatches;
                }
                const double c1 = ef + ev;
                const double disc = 16 * H * H * ev * ev - 12 * c1 * ev * H * H;
                const bool no_root = disc < 0 || c1 == 0.0;
                if (no_root != !r.h_real.has_value() || (no_root && r.h != 0)) ++branch_errors;
            }
        }
    }
    return {worked_ok && mismatches == 0 && branch_errors == 0,
            "worked instance h*=" + std::to_string(worked.h) + "; " + std::to_string(mismatches) + "/" +
                std::to_string(checked) + " grid points differ from brute force; " + std::to_string(branch_errors) +
                " branch errors"};
}

GaussianNet linear_policy_net(const envs::LinearPolicy& lin, std::size_t ds, std::size_t da) {
    NetSpec s = mlp(ds, da, {});
    s.bias = false;
    Rng rng(0);
    GaussianNet net(s, rng);
    net.layers()[0].weight = lin.K;
    net.log_std() = lin.log_std;
    return net;
}

Outcome c7_bias_diagnostic() {
    auto env = envs::default_env(envs::EnvKind::LinearGaussian, 2, 2);
    envs::LinearPolicy lin{{-0.3, 0.1, 0.05, -0.4}, {-1.0, -0.8}};
    GaussianNet pol = linear_policy_net(lin, 2, 2);
    const std::size_t H = 60;
    auto exact = envs::lqg_policy_value_and_gradient(env, lin, 1000);
    auto truncated = envs::lqg_policy_value_and_gradient(env, lin, H);
    std::vector<double> oracle_grad = exact.grad_K, trunc_grad = truncated.grad_K;
    oracle_grad.insert(oracle_grad.end(), exact.grad_log_std.begin(), exact.grad_log_std.end());
    trunc_grad.insert(trunc_grad.end(), truncated.grad_log_std.begin(), truncated.grad_log_std.end());

    EstimatorInputs in{&pol, nullptr, nullptr, env_reward_fn(env), &env, nullptr};
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::APG;
    cfg.apg_horizon = H;
    cfg.gamma = env.gamma;
    cfg.batch_size = 20000;
    Rng rng(7);
    auto apg = estimate_gradient(in, cfg, rng);
    double worst = 0.0;
    for (std::size_t k = 0; k < oracle_grad.size(); ++k) {
        std::vector<double> xs;
        for (const auto& g : apg.per_sample) xs.push_back(g.values[k]);
        auto [m, se] = oracle::mean_se(xs);
        const double tol = 3.0 * se + std::abs(oracle_grad[k] - trunc_grad[k]);
        worst = std::max(worst, std::abs(m - oracle_grad[k]) / tol);
    }

    // DP at h = 5 with the exact critic: true model vs a model with A + 0.2 I.
    auto critic = QuadraticCritic::from_lqg(env, lin, 1.0 / (1.0 - env.gamma));
    TrueDynamics truth(env);
    NetSpec msp = mlp(4, 2, {});
    msp.bias = false;
    Rng mrng(0);
    GaussianNet wrong(msp, mrng);
    wrong.layers()[0].weight = {0.9 + 0.2, 0.0, 0.5, 0.0, 0.0, 0.9 + 0.2, 0.0, 0.5};
    wrong.log_std().assign(2, std::log(env.noise_std));
    LearnedDynamics imperfect(wrong, 2);
    EstimatorConfig dp;
    dp.kind = EstimatorKind::DP;
    dp.h = 5;
    dp.gamma = env.gamma;
    dp.batch_size = 4000;
    double b_true = 0, b_wrong = 0;
    bool strictly = true;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        EstimatorInputs ti{&pol, &truth, &critic, env_reward_fn(env), &env, nullptr};
        EstimatorInputs wi{&pol, &imperfect, &critic, env_reward_fn(env), &env, nullptr};
        Rng r1(seed), r2(seed);
        const double bt = diag::estimate_gradient_bias(estimate_gradient(ti, dp, r1).grad.values, oracle_grad).distance;
        const double bw = diag::estimate_gradient_bias(estimate_gradient(wi, dp, r2).grad.values, oracle_grad).distance;
        strictly = strictly && bw > bt;
        b_true = std::max(b_true, bt);
        b_wrong = std::max(b_wrong, bw);
    }
    return {worst <= 1.0 && strictly, "APG vs LQG worst |diff|/(3 s.e. + truncation) " + fmt(worst) +
                                          "; DP bias at h=5: true model " + fmt(b_true) + ", imperfect model " +
                                          fmt(b_wrong) + " (3 matched seeds)"};
}

Outcome c8_error_metrics() {
    auto env = envs::default_env(envs::EnvKind::LinearGaussian, 2, 2);
    envs::LinearPolicy lin{{-0.2, 0.1, 0.0, -0.3}, {-1.0, -1.0}};
    GaussianNet pol = linear_policy_net(lin, 2, 2);
    TrueDynamics truth(env);
    Rng rng(8);
    auto probes = diag::probe_rollouts(env, &truth, pol, 4, 16, rng);
    const double ef_truth = diag::estimate_model_error(truth, env, probes, 4);

    NetSpec msp = mlp(4, 2, {});
    Rng mrng(0);
    GaussianNet zero(msp, mrng);
    for (auto& w : zero.layers()[0].weight) w = 0.0;
    for (auto& b : zero.layers()[0].bias) b = 0.3;
    LearnedDynamics constant(zero, 2);
    auto probes2 = diag::probe_rollouts(env, &constant, pol, 3, 8, rng);
    const double ef_const = diag::estimate_model_error(constant, env, probes2, 3);
    // Constant model: the gaps are the true Jacobians A = 0.9 I and B = 0.5 I.
    const double hand = oracle::spectral_norm(env.linear.A, 2, 2) + oracle::spectral_norm(env.linear.B, 2, 2);

    auto critic = QuadraticCritic::from_lqg(env, lin, 1.0 / (1.0 - env.gamma));
    auto probes3 = diag::probe_rollouts(env, nullptr, pol, 3, 16, rng);
    const double ev = diag::estimate_critic_error(critic, diag::lqg_q_oracle(env, lin), probes3, 3, env.gamma);
    const bool pass = ef_truth <= 1e-6 && std::abs(ef_const - hand) <= 1e-9 && ev <= 1e-9;
    return {pass, "eps_f(truth) " + fmt(ef_truth) + " (limit 1e-6); constant model " + fmt(ef_const) + " vs hand " +
                      fmt(hand) + "; eps_v(exact critic) " + fmt(ev) + " (limit 1e-9)"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

trainer::TrainConfig small_run(std::uint64_t seed) {
    trainer::TrainConfig cfg;
    cfg.env = envs::default_env(envs::EnvKind::LinearGaussian, 2, 2);
    cfg.policy.hidden = {8};
    cfg.policy.sn = true;
    cfg.model.hidden = {8};
    cfg.critic.hidden = {8};
    cfg.estimator.h = 3;
    cfg.estimator.batch_size = 8;
    cfg.iterations = 20;
    cfg.model_batches = 8;
    cfg.critic_batches = 8;
    cfg.episodes_per_iter = 2;
    cfg.episode_len = 20;
    cfg.checkpoint_interval = 5;
    cfg.diag.oracle = trainer::OracleKind::Apg;
    cfg.diag.every = 4;
    cfg.diag.oracle_samples = 32;
    cfg.diag.oracle_horizon = 30;
    cfg.diag.probes = 4;
    cfg.diag.q_samples = 4;
    cfg.seed = seed;
    trainer::resolve_net_dims(cfg);
    return cfg;
}

Outcome c9_determinism() {
    const fs::path root = fs::temp_directory_path() / "rppgm_acceptance_c9";
    fs::remove_all(root);
    auto cfg = small_run(3);
    trainer::run_training(cfg, root / "a");
    trainer::run_training(cfg, root / "b");
    const auto a = slurp(root / "a" / "diagnostics.csv");
    const bool same = a == slurp(root / "b" / "diagnostics.csv");
    auto mid = trainer::load_checkpoint(root / "b" / "checkpoints" / "ckpt_10.json");
    trainer::run_training(cfg, root / "b", mid);
    const bool resumed = a == slurp(root / "b" / "diagnostics.csv");
    const auto rows = std::count(a.begin(), a.end(), '\n') - 1;
    fs::remove_all(root);
    return {same && resumed, std::string("repeat run ") + (same ? "byte-identical" : "differs") +
                                 "; resume from t=10 " + (resumed ? "reproduces" : "differs from") + " all " +
                                 std::to_string(rows) + " rows"};
}

Outcome c10_training() {
    const fs::path root = fs::temp_directory_path() / "rppgm_acceptance_c10";
    fs::remove_all(root);
    std::vector<double> j0, jT;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        trainer::TrainConfig cfg;
        cfg.env = envs::default_env(envs::EnvKind::LinearGaussian, 2, 2);
        cfg.policy.hidden = {16};
        cfg.policy.sn = true;
        cfg.model.hidden = {16};
        cfg.model.sn = true;
        cfg.model.sn_mask = nets::SnMask::AllButFinal;
        cfg.critic.hidden = {32};
        cfg.estimator.kind = EstimatorKind::DP;
        cfg.estimator.h = 3;
        cfg.estimator.batch_size = 32;
        cfg.model_batches = 32;
        cfg.critic_batches = 32;
        cfg.policy_opt.lr = 0.03;
        cfg.iterations = 200;
        cfg.checkpoint_interval = 0;
        cfg.diag.oracle = trainer::OracleKind::Apg;
        cfg.diag.every = 1000;
        cfg.diag.oracle_horizon = 60;
        cfg.diag.oracle_samples = 128;
        cfg.seed = seed;
        trainer::resolve_net_dims(cfg);
        auto state = trainer::run_training(cfg, root / std::to_string(seed));
        j0.push_back(state.history.front().J_oracle);
        jT.push_back(trainer::oracle_eval(cfg, state.policy, 0, false)->value);
    }
    fs::remove_all(root);
    double m0 = 0, mT = 0;
    for (std::size_t i = 0; i < j0.size(); ++i) {
        m0 += j0[i] / 5.0;
        mT += jT[i] / 5.0;
    }
    double ss = 0;
    for (double x : jT) ss += (x - mT) * (x - mT);
    const double sd = std::sqrt(ss / 4.0);
    const double margin = mT - m0;
    std::string per_seed;
    for (std::size_t i = 0; i < j0.size(); ++i) per_seed += " " + fmt(j0[i]) + "->" + fmt(jT[i]);
    return {margin > 5.0 * sd, "mean J " + fmt(m0) + " -> " + fmt(mT) + ", margin " + fmt(margin) +
                                   " vs 5 x sd(J_T) " + fmt(5.0 * sd) + ";" + per_seed};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", c1_gradient_correctness},
        {"RP/LR equivalence", c2_rp_lr_equivalence},
        {"DR fidelity", c3_dr_fidelity},
        {"variance explosion and SN rescue", c4_variance_explosion},
        {"SN contract", c5_sn_contract},
        {"optimal h", c6_optimal_h},
        {"bias diagnostic", c7_bias_diagnostic},
        {"error metrics", c8_error_metrics},
        {"determinism and resume", c9_determinism},
        {"training sanity", c10_training},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && !only.count(i + 1)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << " C" << i + 1 << " " << criteria[i].first << ": " << o.detail
                  << " [" << fmt(secs) << " s]" << std::endl;
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
