#include "rppgm/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "rppgm/diagnostics/diagnostics.hpp"
#include "rppgm/envs/lqg.hpp"
#include "rppgm/nets/net_json.hpp"
#include "rppgm/util/format.hpp"

namespace rppgm::trainer {

using ad::Tensor;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kCheckpointFormat = "rppgm-checkpoint";
constexpr int kCheckpointVersion = 1;

// Salts for derived generators.
constexpr std::uint64_t kOracleSalt = 0x6f7261636c65ULL;
constexpr std::uint64_t kProbeSalt = 0x70726f6265ULL;

void check_finite(const GaussianNet& net, const char* what) {
    for (double x : net.params().values) {
        if (!std::isfinite(x)) throw NumericError(std::string(what) + " parameters became non-finite");
    }
}

void after_update(GaussianNet& net) {
    if (net.spec().sn) nets::apply_spectral_normalization(net, 1);
}

} // namespace

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer_kind(std::string_view s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw Error("unknown optimizer '" + std::string(s) + "'");
}

void ascend(ParamVector& params, const ParamVector& grad, const OptimizerConfig& cfg, OptimizerState& state) {
    if (grad.size() != params.size()) throw ad::ShapeError("optimizer: gradient and parameter sizes differ");
    if (cfg.kind == OptimizerKind::Sgd) {
        for (std::size_t k = 0; k < params.size(); ++k) params.values[k] += cfg.lr * grad.values[k];
        return;
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grad.values[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1 - cfg.beta2) * g * g;
        params.values[k] += cfg.lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + cfg.eps);
    }
}

Episode collect_episode(const envs::EnvSpec& env, const GaussianNet& policy, std::size_t steps, std::size_t tag,
                        Rng& rng) {
    Episode ep;
    ep.policy_tag = tag;
    std::vector<double> s = envs::sample_initial_state(env, rng);
    for (std::size_t i = 0; i < steps; ++i) {
        Transition t;
        t.s = s;
        t.policy_noise = rng.normal_vector(env.action_dim);
        t.env_noise = rng.normal_vector(env.state_dim);
        auto out = nets::net_forward(policy, Tensor::vector(s));
        t.a = nets::gaussian_sample(out.mean, out.log_std, Tensor::vector(t.policy_noise)).data();
        auto step = envs::env_step(env, Tensor::vector(s), Tensor::vector(t.a), Tensor::vector(t.env_noise));
        t.r = step.reward.item();
        t.s_next = step.next_state.data();
        s = t.s_next;
        ep.steps.push_back(std::move(t));
    }
    return ep;
}

std::vector<double> update_model(GaussianNet& model, const ReplayBuffer& buffer, std::size_t batches,
                                 std::size_t batch_size, const OptimizerConfig& opt, OptimizerState& state, Rng& rng) {
    if (buffer.empty()) throw Error("model update needs a non-empty buffer");
    if (batch_size == 0) throw Error("model batch size must be positive");
    std::vector<double> losses;
    for (std::size_t b = 0; b < batches; ++b) {
        ad::Tape tape;
        nets::BoundNet bound(model, &tape, true);
        Tensor total;
        for (std::size_t n = 0; n < batch_size; ++n) {
            const Transition& tr = buffer.sample_transition(rng);
            std::vector<double> x = tr.s;
            x.insert(x.end(), tr.a.begin(), tr.a.end());
            auto out = bound.forward(Tensor::vector(x));
            Tensor lp = nets::gaussian_log_prob(out.mean, out.log_std, Tensor::vector(tr.s_next));
            total = total.size() ? ad::add(total, lp) : lp;
        }
        Tensor mean_lp = ad::scale(total, 1.0 / static_cast<double>(batch_size));
        losses.push_back(-mean_lp.item());
        ParamVector p = model.params();
        ascend(p, bound.gradient(mean_lp), opt, state);
        model.set_params(p);
        after_update(model);
        check_finite(model, "model");
    }
    return losses;
}

std::vector<double> update_critic(GaussianNet& critic, GaussianNet& target, std::size_t& update_count,
                                  const GaussianNet& policy, const ReplayBuffer& buffer, const CriticUpdate& cfg,
                                  const OptimizerConfig& opt, OptimizerState& state, Rng& rng) {
    if (buffer.empty()) throw Error("critic update needs a non-empty buffer");
    if (cfg.batch_size == 0) throw Error("critic batch size must be positive");
    if (cfg.target_interval == 0) throw Error("target refresh interval must be positive");
    std::vector<double> losses;
    for (std::size_t b = 0; b < cfg.batches; ++b) {
        ad::Tape tape;
        nets::BoundNet bound(critic, &tape, true);
        Tensor total;
        for (std::size_t n = 0; n < cfg.batch_size; ++n) {
            const Transition& tr = buffer.sample_transition(rng);
            auto pout = nets::net_forward(policy, Tensor::vector(tr.s_next));
            auto a2 = nets::gaussian_sample(pout.mean, pout.log_std,
                                            Tensor::vector(rng.normal_vector(policy.output_dim())));
            std::vector<double> x2 = tr.s_next;
            x2.insert(x2.end(), a2.data().begin(), a2.data().end());
            const double y = (1.0 - cfg.gamma) * tr.r + cfg.gamma * nets::net_forward(target, Tensor::vector(x2)).mean[0];
            std::vector<double> x = tr.s;
            x.insert(x.end(), tr.a.begin(), tr.a.end());
            Tensor q = ad::sum(bound.forward(Tensor::vector(x)).mean);
            Tensor sq = ad::square(ad::sub(q, Tensor::scalar(y)));
            total = total.size() ? ad::add(total, sq) : sq;
        }
        Tensor loss = ad::scale(total, 1.0 / static_cast<double>(cfg.batch_size));
        losses.push_back(loss.item());
        ParamVector g = bound.gradient(loss);
        for (auto& x : g.values) x = -x;
        ParamVector p = critic.params();
        ascend(p, g, opt, state);
        critic.set_params(p);
        after_update(critic);
        check_finite(critic, "critic");
        if (++update_count % cfg.target_interval == 0) target = critic;
    }
    return losses;
}

std::string_view to_string(OracleKind k) {
    switch (k) {
    case OracleKind::None: return "none";
    case OracleKind::Lqg: return "lqg";
    case OracleKind::Apg: return "apg";
    }
    return "none";
}

OracleKind parse_oracle_kind(std::string_view s) {
    if (s == "none") return OracleKind::None;
    if (s == "lqg") return OracleKind::Lqg;
    if (s == "apg") return OracleKind::Apg;
    throw Error("unknown oracle kind '" + std::string(s) + "'");
}

void resolve_net_dims(TrainConfig& cfg) {
    const std::size_t ds = cfg.env.state_dim, da = cfg.env.action_dim;
    cfg.policy.input_dim = ds;
    cfg.policy.output_dim = da;
    cfg.policy.head = nets::HeadKind::Gaussian;
    cfg.model.input_dim = ds + da;
    cfg.model.output_dim = ds;
    cfg.model.head = nets::HeadKind::Gaussian;
    cfg.critic.input_dim = ds + da;
    cfg.critic.output_dim = 1;
    cfg.critic.head = nets::HeadKind::Scalar;
}

bool DiagnosticsRow::operator==(const DiagnosticsRow& o) const {
    auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
    return t == o.t && same(J_oracle, o.J_oracle) && same(b, o.b) && same(v, o.v) && same(eps_f, o.eps_f) &&
           same(eps_v, o.eps_v) && same(grad_norm, o.grad_norm) && same(h_star, o.h_star) &&
           same(wall_ms, o.wall_ms);
}

const char* const kDiagnosticsHeader = "t,J_oracle,b_t,v_t,eps_f,eps_v,grad_norm,h_star,wall_ms";

std::string diagnostics_csv_line(const DiagnosticsRow& r) {
    auto f = [](double x) { return std::isnan(x) ? std::string("nan") : format_double(x); };
    std::vector<std::string> fields = {std::to_string(r.t), f(r.J_oracle), f(r.b),         f(r.v),      f(r.eps_f),
                                       f(r.eps_v),          f(r.grad_norm), f(r.h_star), f(r.wall_ms)};
    return csv_row(fields);
}

TrainState init_state(const TrainConfig& cfg) {
    cfg.env.validate();
    if (cfg.episode_len > cfg.buffer_capacity) throw Error("episode length exceeds buffer capacity");
    TrainState s;
    s.rng = Rng(cfg.seed);
    s.policy = GaussianNet(cfg.policy, s.rng);
    s.model = GaussianNet(cfg.model, s.rng);
    s.critic = GaussianNet(cfg.critic, s.rng);
    s.critic_target = s.critic;
    s.buffer = ReplayBuffer(cfg.buffer_capacity);
    for (std::size_t e = 0; e < cfg.episodes_per_iter; ++e)
        s.buffer.add_episode(collect_episode(cfg.env, s.policy, cfg.episode_len, 0, s.rng));
    return s;
}

EstimatorContext estimator_context(const TrainConfig& cfg, const TrainState& state) {
    EstimatorContext ctx;
    if (cfg.true_model) {
        ctx.dynamics = std::make_unique<est::TrueDynamics>(cfg.env);
    } else {
        ctx.dynamics = std::make_unique<est::LearnedDynamics>(state.model, cfg.env.action_dim);
    }
    ctx.net_critic = std::make_unique<est::NetCritic>(state.critic);
    ctx.critic = std::make_unique<est::ScaledCritic>(*ctx.net_critic, 1.0 / (1.0 - cfg.env.gamma));
    ctx.inputs = {&state.policy, ctx.dynamics.get(), ctx.critic.get(), est::env_reward_fn(cfg.env), &cfg.env,
                  &state.buffer};
    ctx.config = cfg.estimator;
    ctx.config.gamma = cfg.env.gamma;
    return ctx;
}

namespace {

bool lqg_applicable(const TrainConfig& cfg, const GaussianNet& policy) {
    return cfg.env.kind == envs::EnvKind::LinearGaussian && policy.layers().size() == 1 &&
           policy.layers()[0].bias.empty() && policy.gaussian();
}

envs::LinearPolicy linear_policy(const GaussianNet& policy) {
    const auto& spec = policy.spec();
    std::vector<double> ls = policy.log_std();
    for (auto& x : ls) x = std::clamp(x, spec.log_std_min, spec.log_std_max);
    return {policy.effective_weight(0), ls};
}

} // namespace

std::optional<OracleEval> oracle_eval(const TrainConfig& cfg, const GaussianNet& policy, std::uint64_t salt,
                                      bool with_gradient) {
    OracleKind kind = cfg.diag.oracle;
    if (kind == OracleKind::None) return std::nullopt;
    if (kind == OracleKind::Lqg && !lqg_applicable(cfg, policy)) {
        throw Error("the lqg oracle needs a linear-gaussian env and a bias-free linear policy");
    }
    OracleEval out;
    if (kind == OracleKind::Lqg) {
        auto res = envs::lqg_policy_value_and_gradient(cfg.env, linear_policy(policy), cfg.diag.oracle_horizon);
        out.value = res.value;
        if (!with_gradient) return out;
        // Chain rule through K = W / sigma(W) for a normalized layer.
        const auto& layer = policy.layers()[0];
        std::vector<double> gw = res.grad_K;
        if (layer.normalized) {
            const double sigma = policy.layer_sigma(0);
            double gdotw = 0.0;
            for (std::size_t k = 0; k < gw.size(); ++k) gdotw += res.grad_K[k] * layer.weight[k];
            for (std::size_t r = 0; r < layer.out; ++r)
                for (std::size_t c = 0; c < layer.in; ++c)
                    gw[r * layer.in + c] = res.grad_K[r * layer.in + c] / sigma -
                                           gdotw * layer.power.u[r] * layer.power.v[c] / (sigma * sigma);
        }
        out.grad = gw;
        const auto& spec = policy.spec();
        for (std::size_t i = 0; i < res.grad_log_std.size(); ++i) {
            const double x = policy.log_std()[i];
            out.grad.push_back(x < spec.log_std_min || x > spec.log_std_max ? 0.0 : res.grad_log_std[i]);
        }
        return out;
    }
    Rng rng(derive_seed(cfg.seed, kOracleSalt, salt));
    est::EstimatorConfig ecfg;
    ecfg.kind = est::EstimatorKind::APG;
    ecfg.gamma = cfg.env.gamma;
    ecfg.apg_horizon = cfg.diag.oracle_horizon;
    ecfg.batch_size = cfg.diag.oracle_samples;
    est::EstimatorInputs in{&policy, nullptr, nullptr, est::env_reward_fn(cfg.env), &cfg.env, nullptr};
    if (with_gradient) {
        auto g = est::apg_gradient(in, ecfg, rng);
        out.value = g.value_mean;
        out.grad = g.grad.values;
        return out;
    }
    est::TrueDynamics truth(cfg.env);
    est::ZeroCritic zero;
    in.dynamics = &truth;
    in.critic = &zero;
    auto init = est::sample_initial_states(0.0, cfg.env, nullptr, ecfg.batch_size, rng);
    auto samples = est::draw_path_samples(init, ecfg.apg_horizon, cfg.env.state_dim, cfg.env.action_dim, rng);
    out.value = est::pathwise_objective(in, samples, ecfg.apg_horizon, ecfg.gamma);
    return out;
}

void train_iteration(const TrainConfig& cfg, TrainState& state) {
    const auto start = std::chrono::steady_clock::now();
    if (!cfg.true_model) {
        update_model(state.model, state.buffer, cfg.model_batches, cfg.model_batch_size, cfg.model_opt,
                     state.model_opt, state.rng);
    }
    CriticUpdate cu{cfg.critic_batches, cfg.critic_batch_size, cfg.env.gamma, cfg.target_interval};
    update_critic(state.critic, state.critic_target, state.critic_updates, state.policy, state.buffer, cu,
                  cfg.critic_opt, state.critic_opt, state.rng);

    auto ctx = estimator_context(cfg, state);
    auto est = est::estimate_gradient(ctx.inputs, ctx.config, state.rng);

    DiagnosticsRow row;
    row.t = state.t;
    row.grad_norm = ad::l2_norm(est.grad.values);
    row.v = est.per_sample.size() >= 2 ? diag::estimate_gradient_variance(est.per_sample).single : kNaN;
    row.J_oracle = row.b = row.eps_f = row.eps_v = row.h_star = kNaN;
    const bool due = cfg.diag.every > 0 && state.t % cfg.diag.every == 0;
    if (auto oe = oracle_eval(cfg, state.policy, 0, due)) {
        row.J_oracle = oe->value;
        if (due) row.b = diag::estimate_gradient_bias(est.grad.values, oe->grad).distance;
    }
    if (due) {
        const std::size_t h = cfg.estimator.h;
        Rng prng(derive_seed(cfg.seed, kProbeSalt, state.t));
        const bool dr = cfg.estimator.kind == est::EstimatorKind::DR;
        auto probes = diag::probe_rollouts(cfg.env, dr ? nullptr : ctx.dynamics.get(), state.policy, h,
                                           cfg.diag.probes, prng);
        row.eps_f = diag::estimate_model_error(*ctx.dynamics, cfg.env, probes, h);
        diag::QGradOracle q;
        if (cfg.diag.oracle == OracleKind::Lqg) {
            q = diag::lqg_q_oracle(cfg.env, linear_policy(state.policy));
        } else if (cfg.diag.oracle == OracleKind::Apg) {
            q = diag::pathwise_q_oracle(cfg.env, state.policy, cfg.diag.oracle_horizon, cfg.diag.q_samples,
                                        derive_seed(cfg.seed, kOracleSalt + 1, state.t));
        }
        if (q) {
            try {
                row.eps_v = diag::estimate_critic_error(*ctx.critic, q, probes, h, cfg.env.gamma);
            } catch (const NumericError&) {
                row.eps_v = kNaN;
            }
        }
        if (std::isfinite(row.eps_f) && std::isfinite(row.eps_v)) {
            row.h_star = static_cast<double>(diag::optimal_h(row.eps_f, row.eps_v, cfg.env.gamma, cfg.diag.c_prime).h);
        }
    }

    ParamVector p = state.policy.params();
    ascend(p, est.grad, cfg.policy_opt, state.policy_opt);
    state.policy.set_params(p);
    after_update(state.policy);
    check_finite(state.policy, "policy");

    for (std::size_t e = 0; e < cfg.episodes_per_iter; ++e) {
        state.buffer.add_episode(collect_episode(cfg.env, state.policy, cfg.episode_len, state.t + 1, state.rng));
    }
    if (cfg.diag.wall_clock) {
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    state.history.push_back(row);
    ++state.t;
}

namespace {

Json num(double x) { return std::isnan(x) ? Json(nullptr) : Json(x); }
double num_from(const Json& j) { return j.is_null() ? kNaN : j.get<double>(); }

Json opt_to_json(const OptimizerState& s) { return Json{{"m", s.m}, {"v", s.v}, {"step", s.step}}; }
OptimizerState opt_from_json(const Json& j) {
    return {j.at("m").get<std::vector<double>>(), j.at("v").get<std::vector<double>>(), j.at("step").get<std::size_t>()};
}

} // namespace

Json state_to_json(const TrainState& s) {
    Json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["t"] = s.t;
    j["critic_updates"] = s.critic_updates;
    j["rng"] = s.rng.serialize();
    j["policy"] = nets::net_to_json(s.policy);
    j["model"] = nets::net_to_json(s.model);
    j["critic"] = nets::net_to_json(s.critic);
    j["critic_target"] = nets::net_to_json(s.critic_target);
    j["policy_opt"] = opt_to_json(s.policy_opt);
    j["model_opt"] = opt_to_json(s.model_opt);
    j["critic_opt"] = opt_to_json(s.critic_opt);
    Json eps = Json::array();
    for (const auto& e : s.buffer.episodes()) {
        Json steps = Json::array();
        for (const auto& t : e.steps) {
            steps.push_back(Json{{"s", t.s},
                                 {"a", t.a},
                                 {"r", t.r},
                                 {"s_next", t.s_next},
                                 {"env_noise", t.env_noise},
                                 {"policy_noise", t.policy_noise}});
        }
        eps.push_back(Json{{"tag", e.policy_tag}, {"steps", std::move(steps)}});
    }
    j["buffer"] = Json{{"capacity", s.buffer.capacity()}, {"episodes", std::move(eps)}};
    Json hist = Json::array();
    for (const auto& r : s.history) {
        hist.push_back(Json::array({r.t, num(r.J_oracle), num(r.b), num(r.v), num(r.eps_f), num(r.eps_v),
                                    num(r.grad_norm), num(r.h_star), num(r.wall_ms)}));
    }
    j["history"] = std::move(hist);
    return j;
}

TrainState state_from_json(const Json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw Error("not a checkpoint file");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw Error("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
        }
        TrainState s;
        s.t = j.at("t").get<std::size_t>();
        s.critic_updates = j.at("critic_updates").get<std::size_t>();
        s.rng = Rng::deserialize(j.at("rng").get<std::string>());
        s.policy = nets::net_from_json(j.at("policy"));
        s.model = nets::net_from_json(j.at("model"));
        s.critic = nets::net_from_json(j.at("critic"));
        s.critic_target = nets::net_from_json(j.at("critic_target"));
        s.policy_opt = opt_from_json(j.at("policy_opt"));
        s.model_opt = opt_from_json(j.at("model_opt"));
        s.critic_opt = opt_from_json(j.at("critic_opt"));
        s.buffer = ReplayBuffer(j.at("buffer").at("capacity").get<std::size_t>());
        for (const auto& e : j.at("buffer").at("episodes")) {
            Episode ep;
            ep.policy_tag = e.at("tag").get<std::size_t>();
            for (const auto& t : e.at("steps")) {
                Transition tr;
                tr.s = t.at("s").get<std::vector<double>>();
                tr.a = t.at("a").get<std::vector<double>>();
                tr.r = t.at("r").get<double>();
                tr.s_next = t.at("s_next").get<std::vector<double>>();
                tr.env_noise = t.at("env_noise").get<std::vector<double>>();
                tr.policy_noise = t.at("policy_noise").get<std::vector<double>>();
                ep.steps.push_back(std::move(tr));
            }
            s.buffer.add_episode(std::move(ep));
        }
        for (const auto& r : j.at("history")) {
            DiagnosticsRow row;
            row.t = r.at(0).get<std::size_t>();
            row.J_oracle = num_from(r.at(1));
            row.b = num_from(r.at(2));
            row.v = num_from(r.at(3));
            row.eps_f = num_from(r.at(4));
            row.eps_v = num_from(r.at(5));
            row.grad_norm = num_from(r.at(6));
            row.h_star = num_from(r.at(7));
            row.wall_ms = num_from(r.at(8));
            s.history.push_back(row);
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << state_to_json(state).dump() << '\n';
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("checkpoint " + path.string() + ": parse error: " + e.what());
    }
    return state_from_json(j);
}

TrainState run_training(const TrainConfig& cfg, const std::filesystem::path& dir, std::optional<TrainState> resume) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "checkpoints");
    TrainState state = resume ? std::move(*resume) : init_state(cfg);
    auto ckpt = [&] { save_checkpoint(state, dir / "checkpoints" / ("ckpt_" + std::to_string(state.t) + ".json")); };

    std::ofstream csv(dir / "diagnostics.csv", std::ios::trunc);
    if (!csv) throw Error("cannot write " + (dir / "diagnostics.csv").string());
    csv << kDiagnosticsHeader << '\n';
    for (const auto& r : state.history) csv << diagnostics_csv_line(r);
    csv.flush();
    if (!resume) ckpt();

    while (state.t < cfg.iterations) {
        try {
            train_iteration(cfg, state);
        } catch (const NumericError& e) {
            std::ofstream ev(dir / "events.log", std::ios::app);
            ev << "t=" << state.t << " numeric explosion: " << e.what() << '\n';
            throw;
        }
        csv << diagnostics_csv_line(state.history.back());
        csv.flush();
        if (state.t == cfg.iterations || (cfg.checkpoint_interval > 0 && state.t % cfg.checkpoint_interval == 0)) {
            ckpt();
        }
    }
    return state;
}

} // namespace rppgm::trainer
