#include "rppgm/estimators/estimators.hpp"

#include <cmath>

#include "rppgm/util/parallel.hpp"

namespace rppgm::est {

using nets::BoundNet;
using nets::GaussianNet;

std::string_view to_string(EstimatorKind k) {
    switch (k) {
    case EstimatorKind::DP: return "dp";
    case EstimatorKind::DR: return "dr";
    case EstimatorKind::LR: return "lr";
    case EstimatorKind::APG: return "apg";
    }
    return "dp";
}

EstimatorKind parse_estimator_kind(std::string_view s) {
    if (s == "dp") return EstimatorKind::DP;
    if (s == "dr") return EstimatorKind::DR;
    if (s == "lr") return EstimatorKind::LR;
    if (s == "apg") return EstimatorKind::APG;
    throw Error("unknown estimator kind '" + std::string(s) + "'");
}

InitialStates sample_initial_states(double beta, const envs::EnvSpec& env, const ReplayBuffer* buffer,
                                    std::size_t n, Rng& rng) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error("beta must lie in [0, 1]");
    if (beta > 0.0 && (!buffer || buffer->empty())) throw Error("initial-state mixture with beta > 0 needs a non-empty buffer");
    InitialStates out;
    out.states.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        if (u < beta) {
            out.states.push_back(buffer->sample_transition(rng).s);
            out.from_buffer.push_back(true);
        } else {
            out.states.push_back(envs::sample_initial_state(env, rng));
            out.from_buffer.push_back(false);
        }
    }
    return out;
}

RolloutNoise draw_noise(std::size_t h, std::size_t state_dim, std::size_t action_dim, Rng& rng) {
    RolloutNoise n;
    for (std::size_t i = 0; i <= h; ++i) n.action.push_back(rng.normal_vector(action_dim));
    for (std::size_t i = 0; i < h; ++i) n.state.push_back(rng.normal_vector(state_dim));
    return n;
}

Tensor mve_value(const BoundNet& policy, const BoundDynamics& dynamics, const BoundCritic& critic,
                 const RewardFn& reward, const Tensor& s0, const RolloutNoise& noise, std::size_t h, double gamma,
                 double entropy_coef) {
    if (noise.action.size() < h + 1 || noise.state.size() < h) {
        throw ad::ShapeError("mve_value: need " + std::to_string(h + 1) + " action and " + std::to_string(h) +
                             " state noises");
    }
    if (!policy.net().gaussian()) throw Error("mve_value: policy needs a gaussian head");
    Tensor s = s0;
    Tensor total;
    Tensor entropy;
    double disc = 1.0;
    for (std::size_t i = 0; i <= h; ++i) {
        auto out = policy.forward(s);
        Tensor a = nets::gaussian_sample(out.mean, out.log_std, Tensor::vector(noise.action[i]));
        if (i == 0 && entropy_coef > 0.0) {
            entropy = ad::scale(nets::gaussian_log_prob(out.mean, out.log_std, a), -entropy_coef);
        }
        Tensor term = i < h ? ad::sum(reward(s, a)) : critic.value(s, a);
        term = ad::scale(term, disc);
        total = total.size() ? ad::add(total, term) : term;
        if (i < h) {
            s = dynamics.step(s, a, Tensor::vector(noise.state[i]));
            disc *= gamma;
        }
    }
    Tensor v = ad::scale(total, 1.0 - gamma);
    return entropy.size() ? ad::add(v, entropy) : v;
}

namespace {

void check_inputs(const EstimatorInputs& in, bool need_dynamics, bool need_critic) {
    if (!in.policy) throw Error("estimator: policy missing");
    if (need_dynamics && !in.dynamics) throw Error("estimator: dynamics missing");
    if (need_critic && !in.critic) throw Error("estimator: critic missing");
    if (!in.reward) throw Error("estimator: reward function missing");
}

void finish(GradientEstimate& est, const GaussianNet& policy) {
    est.grad = policy.params().zeros_like();
    const double n = static_cast<double>(est.per_sample.size());
    for (const auto& g : est.per_sample)
        for (std::size_t k = 0; k < g.size(); ++k) est.grad.values[k] += g.values[k];
    for (auto& x : est.grad.values) x /= n;
    est.value_mean = 0.0;
    for (double v : est.values) est.value_mean += v;
    est.value_mean /= n;
    for (double x : est.grad.values) {
        if (!std::isfinite(x)) throw NumericError("policy gradient estimate is not finite");
    }
}

} // namespace

std::vector<PathSample> draw_path_samples(const InitialStates& init, std::size_t h, std::size_t ds, std::size_t da,
                                          Rng& rng) {
    const std::uint64_t base = rng.next_u64();
    std::vector<PathSample> out(init.states.size());
    for (std::size_t n = 0; n < out.size(); ++n) {
        Rng local(derive_seed(base, n));
        out[n].s0 = init.states[n];
        out[n].noise = draw_noise(h, ds, da, local);
    }
    return out;
}

GradientEstimate pathwise_gradient(const EstimatorInputs& in, const std::vector<PathSample>& samples,
                                   std::size_t h, double gamma, double entropy_coef) {
    check_inputs(in, true, true);
    if (samples.empty()) throw Error("estimator: no samples");
    GradientEstimate est;
    est.per_sample.resize(samples.size());
    est.values.resize(samples.size());
    parallel_for(samples.size(), [&](std::size_t n) {
        ad::Tape tape;
        BoundNet policy(*in.policy, &tape, true);
        auto dyn = in.dynamics->bind(&tape);
        auto critic = in.critic->bind(&tape);
        Tensor s0 = tape.constant(Tensor::vector(samples[n].s0));
        Tensor v = mve_value(policy, *dyn, *critic, in.reward, s0, samples[n].noise, h, gamma, entropy_coef);
        est.per_sample[n] = policy.gradient(v);
        est.values[n] = v.item();
    });
    finish(est, *in.policy);
    return est;
}

double pathwise_objective(const EstimatorInputs& in, const std::vector<PathSample>& samples, std::size_t h,
                          double gamma, double entropy_coef) {
    check_inputs(in, true, true);
    BoundNet policy(*in.policy, nullptr, false);
    auto dyn = in.dynamics->bind(nullptr);
    auto critic = in.critic->bind(nullptr);
    double total = 0.0;
    for (const auto& s : samples) {
        total += mve_value(policy, *dyn, *critic, in.reward, Tensor::vector(s.s0), s.noise, h, gamma, entropy_coef)
                     .item();
    }
    return total / static_cast<double>(samples.size());
}

GradientEstimate rp_dp_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng) {
    check_inputs(in, true, true);
    if (!in.env) throw Error("rp_dp_gradient: env spec missing");
    auto init = sample_initial_states(cfg.beta, *in.env, in.buffer, cfg.batch_size, rng);
    auto samples = draw_path_samples(init, cfg.h, in.env->state_dim, in.env->action_dim, rng);
    return pathwise_gradient(in, samples, cfg.h, cfg.gamma, cfg.entropy_coef);
}

RolloutNoise infer_noises(const GaussianNet& policy, const Dynamics& dynamics,
                          const std::vector<const trainer::Transition*>& segment, std::size_t h) {
    if (segment.size() != h + 1) {
        throw Error("infer_noises: segment has " + std::to_string(segment.size()) + " steps, expected " +
                    std::to_string(h + 1));
    }
    if (!policy.gaussian()) throw Error("infer_noises: policy needs a gaussian head");
    RolloutNoise n;
    for (std::size_t i = 0; i <= h; ++i) {
        const auto& t = *segment[i];
        auto out = nets::net_forward(policy, Tensor::vector(t.s));
        std::vector<double> vs(t.a.size());
        for (std::size_t j = 0; j < vs.size(); ++j) vs[j] = (t.a[j] - out.mean[j]) / std::exp(out.log_std[j]);
        n.action.push_back(std::move(vs));
        if (i < h) n.state.push_back(dynamics.infer_noise(t.s, t.a, t.s_next));
    }
    return n;
}

std::vector<PathSample> dr_samples(const EstimatorInputs& in, std::size_t h, std::size_t n, Rng& rng) {
    check_inputs(in, true, false);
    if (!in.buffer || in.buffer->empty()) throw Error("DR estimator needs real transitions in the buffer");
    std::vector<PathSample> out(n);
    for (auto& s : out) {
        auto seg = in.buffer->sample_segment(h + 1, rng);
        s.s0 = seg.front()->s;
        s.noise = infer_noises(*in.policy, *in.dynamics, seg, h);
    }
    return out;
}

namespace {

// Rows of d(output)/d(leaves) for a vector output, one vjp per row.
std::vector<std::vector<Tensor>> jacobian_rows(const ad::Tape& tape, const Tensor& out,
                                               std::span<const Tensor> leaves) {
    std::vector<std::vector<Tensor>> rows;
    std::vector<double> seed(out.size(), 0.0);
    for (std::size_t r = 0; r < out.size(); ++r) {
        seed[r] = 1.0;
        rows.push_back(tape.vjp(out, seed, leaves));
        seed[r] = 0.0;
    }
    return rows;
}

struct PolicyLocal {
    std::vector<double> action;
    std::vector<std::vector<double>> d_theta; // action_dim rows of |theta|
    std::vector<std::vector<double>> d_s;     // action_dim rows of state_dim
};

PolicyLocal policy_local(const GaussianNet& policy, const std::vector<double>& s, const std::vector<double>& vs) {
    ad::Tape tape;
    BoundNet bound(policy, &tape, true);
    Tensor sv = tape.variable(Tensor::vector(s));
    auto out = bound.forward(sv);
    Tensor a = nets::gaussian_sample(out.mean, out.log_std, Tensor::vector(vs));
    std::vector<Tensor> leaves = bound.leaves();
    leaves.push_back(sv);
    auto rows = jacobian_rows(tape, a, leaves);
    PolicyLocal p;
    p.action = a.data();
    for (const auto& row : rows) {
        std::vector<double> dt;
        for (std::size_t k = 0; k + 1 < row.size(); ++k) dt.insert(dt.end(), row[k].data().begin(), row[k].data().end());
        p.d_theta.push_back(std::move(dt));
        p.d_s.push_back(row.back().data());
    }
    return p;
}

std::pair<std::vector<double>, std::vector<double>> reward_grads(const RewardFn& reward, const std::vector<double>& s,
                                                                 const std::vector<double>& a) {
    ad::Tape tape;
    Tensor leaves[] = {tape.variable(Tensor::vector(s)), tape.variable(Tensor::vector(a))};
    auto g = tape.gradient(ad::sum(reward(leaves[0], leaves[1])), leaves);
    return {g[0].data(), g[1].data()};
}

// y = x^T M for a row-major (rows = x.size()) matrix M given as rows.
std::vector<double> row_times(const std::vector<double>& x, const std::vector<std::vector<double>>& m) {
    std::vector<double> y(m.empty() ? 0 : m[0].size(), 0.0);
    for (std::size_t r = 0; r < x.size(); ++r)
        for (std::size_t c = 0; c < y.size(); ++c) y[c] += x[r] * m[r][c];
    return y;
}

std::vector<double> row_times(const std::vector<double>& x, const Tensor& m) {
    std::vector<double> y(m.cols(), 0.0);
    for (std::size_t r = 0; r < x.size(); ++r)
        for (std::size_t c = 0; c < y.size(); ++c) y[c] += x[r] * m.at(r, c);
    return y;
}

void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

} // namespace

ParamVector dr_recursion_gradient(const EstimatorInputs& in, const PathSample& sample, std::size_t h,
                                  double gamma) {
    check_inputs(in, true, true);
    const GaussianNet& pol = *in.policy;
    std::vector<std::vector<double>> s(h + 1);
    std::vector<PolicyLocal> pl;
    s[0] = sample.s0;
    auto dyn = in.dynamics->bind(nullptr);
    for (std::size_t i = 0; i <= h; ++i) {
        pl.push_back(policy_local(pol, s[i], sample.noise.action[i]));
        if (i < h) {
            s[i + 1] = dyn->step(Tensor::vector(s[i]), Tensor::vector(pl[i].action),
                                 Tensor::vector(sample.noise.state[i])).data();
        }
    }
    // Terminal: gradients of (1 - gamma) Q(s_h, a_h).
    auto [qs, qa] = in.critic->gradients(s[h], pl[h].action);
    std::vector<double> g_theta = row_times(qa, pl[h].d_theta);
    std::vector<double> g_s = qs;
    axpy(g_s, 1.0, row_times(qa, pl[h].d_s));
    for (auto& x : g_theta) x *= 1.0 - gamma;
    for (auto& x : g_s) x *= 1.0 - gamma;

    for (std::size_t i = h; i-- > 0;) {
        auto [rs, ra] = reward_grads(in.reward, s[i], pl[i].action);
        auto [fs, fa] = in.dynamics->jacobians(s[i], pl[i].action, sample.noise.state[i]);
        // Coefficient on d a_i: (1 - gamma) dr/da + gamma g_s df/da.
        std::vector<double> ca = ra;
        for (auto& x : ca) x *= 1.0 - gamma;
        axpy(ca, gamma, row_times(g_s, fa));

        std::vector<double> next_theta = row_times(ca, pl[i].d_theta);
        axpy(next_theta, gamma, g_theta);

        std::vector<double> next_s = rs;
        for (auto& x : next_s) x *= 1.0 - gamma;
        axpy(next_s, gamma, row_times(g_s, fs));
        axpy(next_s, 1.0, row_times(ca, pl[i].d_s));

        g_theta = std::move(next_theta);
        g_s = std::move(next_s);
    }
    ParamVector out = pol.params().zeros_like();
    out.values = std::move(g_theta);
    return out;
}

GradientEstimate rp_dr_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng) {
    auto samples = dr_samples(in, cfg.h, cfg.batch_size, rng);
    if (!cfg.dr_recursion) return pathwise_gradient(in, samples, cfg.h, cfg.gamma, cfg.entropy_coef);
    if (cfg.entropy_coef > 0.0) throw Error("the DR recursion does not support the entropy term");
    GradientEstimate est;
    est.per_sample.resize(samples.size());
    est.values.resize(samples.size());
    parallel_for(samples.size(), [&](std::size_t n) {
        est.per_sample[n] = dr_recursion_gradient(in, samples[n], cfg.h, cfg.gamma);
        est.values[n] = pathwise_objective(in, {samples[n]}, cfg.h, cfg.gamma);
    });
    finish(est, *in.policy);
    return est;
}

std::vector<ScoreSample> lr_samples(const EstimatorInputs& in, const std::vector<PathSample>& paths, std::size_t h,
                                    double gamma, bool baseline) {
    check_inputs(in, true, true);
    BoundNet policy(*in.policy, nullptr, false);
    auto dyn = in.dynamics->bind(nullptr);
    auto critic = in.critic->bind(nullptr);
    std::vector<ScoreSample> out(paths.size());
    for (std::size_t n = 0; n < paths.size(); ++n) {
        ScoreSample& sc = out[n];
        Tensor s = Tensor::vector(paths[n].s0);
        std::vector<double> terms; // discounted, normalized per-step contributions
        double disc = 1.0;
        for (std::size_t i = 0; i <= h; ++i) {
            auto o = policy.forward(s);
            Tensor a = nets::gaussian_sample(o.mean, o.log_std, Tensor::vector(paths[n].noise.action[i]));
            sc.states.push_back(s.data());
            sc.actions.push_back(a.data());
            const double r = i < h ? ad::sum(in.reward(s, a)).item() : critic->value(s, a).item();
            terms.push_back((1.0 - gamma) * disc * r);
            if (i < h) {
                s = dyn->step(s, a, Tensor::vector(paths[n].noise.state[i]));
                disc *= gamma;
            }
        }
        sc.weights.assign(h + 1, 0.0);
        double acc = 0.0;
        for (std::size_t i = h + 1; i-- > 0;) {
            acc += terms[i];
            sc.weights[i] = acc;
        }
    }
    if (baseline && out.size() > 1) {
        for (std::size_t i = 0; i <= h; ++i) {
            double m = 0.0;
            for (const auto& sc : out) m += sc.weights[i];
            m /= static_cast<double>(out.size());
            for (auto& sc : out) sc.weights[i] -= m;
        }
    }
    return out;
}

namespace {

Tensor score_term(const BoundNet& policy, const ScoreSample& sc) {
    Tensor total;
    for (std::size_t i = 0; i < sc.states.size(); ++i) {
        auto o = policy.forward(Tensor::vector(sc.states[i]));
        Tensor lp = ad::scale(nets::gaussian_log_prob(o.mean, o.log_std, Tensor::vector(sc.actions[i])), sc.weights[i]);
        total = total.size() ? ad::add(total, lp) : lp;
    }
    return total;
}

} // namespace

GradientEstimate score_gradient(const GaussianNet& policy, const std::vector<ScoreSample>& samples) {
    if (samples.empty()) throw Error("estimator: no samples");
    GradientEstimate est;
    est.per_sample.resize(samples.size());
    est.values.resize(samples.size());
    parallel_for(samples.size(), [&](std::size_t n) {
        ad::Tape tape;
        BoundNet bound(policy, &tape, true);
        est.per_sample[n] = bound.gradient(score_term(bound, samples[n]));
        est.values[n] = samples[n].weights.empty() ? 0.0 : samples[n].weights[0];
    });
    finish(est, policy);
    return est;
}

double score_surrogate(const GaussianNet& policy, const std::vector<ScoreSample>& samples) {
    BoundNet bound(policy, nullptr, false);
    double total = 0.0;
    for (const auto& sc : samples) total += score_term(bound, sc).item();
    return total / static_cast<double>(samples.size());
}

GradientEstimate lr_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng) {
    check_inputs(in, true, true);
    if (!in.env) throw Error("lr_gradient: env spec missing");
    auto init = sample_initial_states(cfg.beta, *in.env, in.buffer, cfg.batch_size, rng);
    auto paths = draw_path_samples(init, cfg.h, in.env->state_dim, in.env->action_dim, rng);
    return score_gradient(*in.policy, lr_samples(in, paths, cfg.h, cfg.gamma, cfg.lr_baseline));
}

GradientEstimate apg_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng) {
    if (!in.env) throw Error("apg_gradient: env spec missing");
    TrueDynamics truth(*in.env);
    ZeroCritic zero;
    EstimatorInputs apg = in;
    apg.dynamics = &truth;
    apg.critic = &zero;
    auto init = sample_initial_states(0.0, *in.env, nullptr, cfg.batch_size, rng);
    auto samples = draw_path_samples(init, cfg.apg_horizon, in.env->state_dim, in.env->action_dim, rng);
    auto est = pathwise_gradient(apg, samples, cfg.apg_horizon, cfg.gamma, cfg.entropy_coef);
    est.tail_mass = std::pow(cfg.gamma, static_cast<double>(cfg.apg_horizon));
    return est;
}

GradientEstimate estimate_gradient(const EstimatorInputs& in, const EstimatorConfig& cfg, Rng& rng) {
    switch (cfg.kind) {
    case EstimatorKind::DP: return rp_dp_gradient(in, cfg, rng);
    case EstimatorKind::DR: return rp_dr_gradient(in, cfg, rng);
    case EstimatorKind::LR: return lr_gradient(in, cfg, rng);
    case EstimatorKind::APG: return apg_gradient(in, cfg, rng);
    }
    throw Error("unknown estimator kind");
}

} // namespace rppgm::est
