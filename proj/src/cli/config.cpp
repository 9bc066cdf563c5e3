#include "rppgm/cli/config.hpp"

#include <fstream>
#include <set>

namespace rppgm::cli {

namespace {

using trainer::OptimizerConfig;

std::string child(const std::string& ptr, const std::string& key) {
    std::string esc;
    for (char c : key) {
        if (c == '~') esc += "~0";
        else if (c == '/') esc += "~1";
        else esc += c;
    }
    return ptr + "/" + esc;
}

// A JSON object whose keys must all be consumed.
class Obj {
public:
    Obj(const Json& j, std::string ptr) : j_(j), ptr_(std::move(ptr)) {
        if (!j_.is_object()) throw ConfigError(ptr_.empty() ? "/" : ptr_, "expected an object");
    }
    ~Obj() = default;

    const Json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string at(const std::string& key) const { return child(ptr_, key); }
    const std::string& ptr() const { return ptr_; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(child(ptr_, it.key()), "unknown key");
    }

    void u(const std::string& key, std::size_t& out, std::size_t min = 0) {
        if (const Json* v = find(key)) out = as_u(*v, at(key));
        if (out < min) throw ConfigError(at(key), "must be >= " + std::to_string(min));
    }
    void u64(const std::string& key, std::uint64_t& out) {
        if (const Json* v = find(key)) out = as_u(*v, at(key));
    }
    void d(const std::string& key, double& out) {
        if (const Json* v = find(key)) out = as_d(*v, at(key));
    }
    void b(const std::string& key, bool& out) {
        if (const Json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(at(key), "expected a boolean");
            out = v->get<bool>();
        }
    }
    bool s(const std::string& key, std::string& out) {
        const Json* v = find(key);
        if (!v) return false;
        if (!v->is_string()) throw ConfigError(at(key), "expected a string");
        out = v->get<std::string>();
        return true;
    }
    void dvec(const std::string& key, std::vector<double>& out) {
        if (const Json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(at(key), "expected an array of numbers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_d((*v)[i], child(at(key), std::to_string(i))));
        }
    }
    void uvec(const std::string& key, std::vector<std::size_t>& out, std::size_t min = 0) {
        if (const Json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(at(key), "expected an array of integers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                const std::string p = child(at(key), std::to_string(i));
                out.push_back(as_u((*v)[i], p));
                if (out.back() < min) throw ConfigError(p, "must be >= " + std::to_string(min));
            }
        }
    }

    static std::uint64_t as_u(const Json& v, const std::string& ptr) {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer()) {
            if (v.get<std::int64_t>() < 0) throw ConfigError(ptr, "must be >= 0");
            return static_cast<std::uint64_t>(v.get<std::int64_t>());
        }
        throw ConfigError(ptr, "expected a non-negative integer");
    }
    static double as_d(const Json& v, const std::string& ptr) {
        if (!v.is_number()) throw ConfigError(ptr, "expected a number");
        return v.get<double>();
    }

private:
    const Json& j_;
    std::string ptr_;
    std::set<std::string> seen_;
};

template <class Parse>
auto parse_enum(Obj& o, const std::string& key, Parse parse) -> decltype(parse(std::string_view{})) {
    std::string s;
    o.s(key, s);
    try {
        return parse(s);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(o.at(key), e.what());
    }
}

void require(bool ok, const std::string& ptr, const std::string& msg) {
    if (!ok) throw ConfigError(ptr, msg);
}

envs::EnvSpec parse_env(const Json& j) {
    using envs::EnvKind;
    if (j.is_string()) {
        try {
            return envs::default_env(envs::parse_env_kind(j.get<std::string>()));
        } catch (const Error& e) {
            throw ConfigError("/env", e.what());
        }
    }
    Obj o(j, "/env");
    std::string kind_s;
    if (!o.s("kind", kind_s)) throw ConfigError("/env/kind", "missing");
    EnvKind kind;
    try {
        kind = envs::parse_env_kind(kind_s);
    } catch (const Error& e) {
        throw ConfigError("/env/kind", e.what());
    }
    std::size_t ds = 1, da = 1;
    o.u("state_dim", ds, 1);
    o.u("action_dim", da, 1);
    envs::EnvSpec e = envs::default_env(kind, ds, da);
    require(e.state_dim == ds || !o.find("state_dim"), o.at("state_dim"),
            "fixed at " + std::to_string(e.state_dim) + " for " + kind_s);
    require(e.action_dim == da || !o.find("action_dim"), o.at("action_dim"),
            "fixed at " + std::to_string(e.action_dim) + " for " + kind_s);
    o.d("gamma", e.gamma);
    require(e.gamma > 0.0 && e.gamma < 1.0, o.at("gamma"), "must lie in (0, 1)");
    o.d("noise_std", e.noise_std);
    require(e.noise_std >= 0.0, o.at("noise_std"), "must be >= 0");
    o.dvec("init_mean", e.init_mean);
    o.dvec("init_var", e.init_var);
    switch (kind) {
    case EnvKind::LinearGaussian:
        o.dvec("A", e.linear.A);
        o.dvec("B", e.linear.B);
        o.dvec("Q", e.linear.Q);
        o.dvec("R", e.linear.R);
        break;
    case EnvKind::Pendulum:
        o.d("dt", e.pendulum.dt);
        o.d("gravity", e.pendulum.gravity);
        o.d("length", e.pendulum.length);
        o.d("mass", e.pendulum.mass);
        break;
    case EnvKind::Chaotic:
        o.d("lambda", e.chaotic.lambda);
        o.d("coupling", e.chaotic.coupling);
        o.dvec("goal", e.chaotic.goal);
        break;
    }
    o.finish();
    try {
        e.validate();
    } catch (const Error& err) {
        throw ConfigError("/env", err.what());
    }
    return e;
}

Json env_to_json(const envs::EnvSpec& e) {
    Json j;
    j["kind"] = envs::to_string(e.kind);
    j["state_dim"] = e.state_dim;
    j["action_dim"] = e.action_dim;
    j["gamma"] = e.gamma;
    j["noise_std"] = e.noise_std;
    j["init_mean"] = e.init_mean;
    j["init_var"] = e.init_var;
    switch (e.kind) {
    case envs::EnvKind::LinearGaussian:
        j["A"] = e.linear.A;
        j["B"] = e.linear.B;
        j["Q"] = e.linear.Q;
        j["R"] = e.linear.R;
        break;
    case envs::EnvKind::Pendulum:
        j["dt"] = e.pendulum.dt;
        j["gravity"] = e.pendulum.gravity;
        j["length"] = e.pendulum.length;
        j["mass"] = e.pendulum.mass;
        break;
    case envs::EnvKind::Chaotic:
        j["lambda"] = e.chaotic.lambda;
        j["coupling"] = e.chaotic.coupling;
        j["goal"] = e.chaotic.goal;
        break;
    }
    return j;
}

void parse_net(Obj& parent, const std::string& key, nets::NetSpec& s) {
    const Json* j = parent.find(key);
    if (!j) return;
    Obj o(*j, parent.at(key));
    o.uvec("hidden", s.hidden, 1);
    s.activation = o.find("activation") ? parse_enum(o, "activation", nets::parse_activation) : s.activation;
    o.b("bias", s.bias);
    o.d("log_std_init", s.log_std_init);
    o.d("log_std_min", s.log_std_min);
    o.d("log_std_max", s.log_std_max);
    require(s.log_std_min <= s.log_std_max, o.at("log_std_min"), "must not exceed log_std_max");
    o.b("sn", s.sn);
    s.sn_mask = o.find("sn_mask") ? parse_enum(o, "sn_mask", nets::parse_sn_mask) : s.sn_mask;
    o.finish();
}

Json net_to_json(const nets::NetSpec& s) {
    Json j;
    j["hidden"] = s.hidden;
    j["activation"] = nets::to_string(s.activation);
    j["bias"] = s.bias;
    j["log_std_init"] = s.log_std_init;
    j["log_std_min"] = s.log_std_min;
    j["log_std_max"] = s.log_std_max;
    j["sn"] = s.sn;
    j["sn_mask"] = nets::to_string(s.sn_mask);
    return j;
}

void parse_opt(Obj& parent, const std::string& key, OptimizerConfig& c) {
    const Json* j = parent.find(key);
    if (!j) return;
    Obj o(*j, parent.at(key));
    c.kind = o.find("kind") ? parse_enum(o, "kind", trainer::parse_optimizer_kind) : c.kind;
    o.d("lr", c.lr);
    require(c.lr >= 0.0, o.at("lr"), "must be >= 0");
    o.d("beta1", c.beta1);
    require(c.beta1 >= 0.0 && c.beta1 < 1.0, o.at("beta1"), "must lie in [0, 1)");
    o.d("beta2", c.beta2);
    require(c.beta2 >= 0.0 && c.beta2 < 1.0, o.at("beta2"), "must lie in [0, 1)");
    o.d("eps", c.eps);
    require(c.eps > 0.0, o.at("eps"), "must be > 0");
    o.finish();
}

Json opt_to_json(const OptimizerConfig& c) {
    return Json{{"kind", trainer::to_string(c.kind)}, {"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2},
                {"eps", c.eps}};
}

void parse_estimator(const Json& j, est::EstimatorConfig& c) {
    Obj o(j, "/estimator");
    c.kind = o.find("kind") ? parse_enum(o, "kind", est::parse_estimator_kind) : c.kind;
    o.u("h", c.h);
    o.u("batch_size", c.batch_size, 1);
    o.d("beta", c.beta);
    require(c.beta >= 0.0 && c.beta <= 1.0, o.at("beta"), "must lie in [0, 1]");
    o.d("entropy_coef", c.entropy_coef);
    require(c.entropy_coef >= 0.0, o.at("entropy_coef"), "must be >= 0");
    o.u("apg_horizon", c.apg_horizon, 1);
    o.b("lr_baseline", c.lr_baseline);
    o.b("dr_recursion", c.dr_recursion);
    require(!(c.dr_recursion && c.entropy_coef > 0.0), o.at("dr_recursion"), "not available with an entropy bonus");
    o.finish();
}

void parse_trainer(const Json& j, trainer::TrainConfig& c) {
    Obj o(j, "/trainer");
    o.u("iterations", c.iterations);
    parse_opt(o, "policy_opt", c.policy_opt);
    parse_opt(o, "model_opt", c.model_opt);
    parse_opt(o, "critic_opt", c.critic_opt);
    o.u("episodes_per_iter", c.episodes_per_iter, 1);
    o.u("episode_len", c.episode_len, 1);
    o.u("model_batches", c.model_batches);
    o.u("model_batch_size", c.model_batch_size, 1);
    o.u("critic_batches", c.critic_batches);
    o.u("critic_batch_size", c.critic_batch_size, 1);
    o.u("target_interval", c.target_interval, 1);
    o.u("buffer_capacity", c.buffer_capacity, 1);
    require(c.buffer_capacity >= c.episode_len, o.at("buffer_capacity"), "must be >= episode_len");
    o.u("checkpoint_interval", c.checkpoint_interval);
    o.b("true_model", c.true_model);
    o.finish();
}

void parse_diag(const Json& j, trainer::DiagConfig& c) {
    Obj o(j, "/diagnostics");
    c.oracle = o.find("oracle") ? parse_enum(o, "oracle", trainer::parse_oracle_kind) : c.oracle;
    o.u("every", c.every);
    o.u("probes", c.probes, 1);
    o.u("oracle_samples", c.oracle_samples, 1);
    o.u("oracle_horizon", c.oracle_horizon, 1);
    o.u("q_samples", c.q_samples, 1);
    o.d("kappa", c.kappa);
    require(c.kappa > 0.0, o.at("kappa"), "must be > 0");
    o.d("L1", c.L1);
    require(c.L1 >= 0.0, o.at("L1"), "must be >= 0");
    o.d("B_theta", c.B_theta);
    require(c.B_theta >= 0.0, o.at("B_theta"), "must be >= 0");
    o.d("c_prime", c.c_prime);
    require(c.c_prime >= 0.0, o.at("c_prime"), "must be >= 0");
    o.b("wall_clock", c.wall_clock);
    o.finish();
}

} // namespace

RunConfig parse_config(const Json& j) {
    RunConfig c;
    auto& t = c.train;
    t.policy.hidden = {16};
    t.model.hidden = {16};
    t.critic.hidden = {32};
    Obj o(j, "");
    const Json* env = o.find("env");
    if (!env) throw ConfigError("/env", "missing");
    t.env = parse_env(*env);
    parse_net(o, "policy", t.policy);
    parse_net(o, "model", t.model);
    parse_net(o, "critic", t.critic);
    if (const Json* e = o.find("estimator")) parse_estimator(*e, t.estimator);
    if (const Json* e = o.find("trainer")) parse_trainer(*e, t);
    if (const Json* e = o.find("diagnostics")) parse_diag(*e, t.diag);
    if (const Json* e = o.find("landscape")) {
        Obj l(*e, "/landscape");
        l.d("extent", c.landscape.extent);
        require(c.landscape.extent >= 0.0, l.at("extent"), "must be >= 0");
        l.u("resolution", c.landscape.resolution, 1);
        l.finish();
    }
    if (const Json* e = o.find("diag")) {
        Obj d(*e, "/diag");
        d.uvec("h", c.diag_h);
        d.finish();
    }
    if (const Json* e = o.find("sweep")) {
        Obj s(*e, "/sweep");
        SweepConfig sw;
        s.uvec("h", sw.h);
        if (const Json* v = s.find("sn")) {
            if (!v->is_array()) throw ConfigError(s.at("sn"), "expected an array of booleans");
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_boolean()) throw ConfigError(child(s.at("sn"), std::to_string(i)), "expected a boolean");
                sw.sn.push_back((*v)[i].get<bool>());
            }
        }
        s.finish();
        c.sweep = sw;
    }
    o.u64("seed", t.seed);
    o.s("out", c.out);
    o.finish();

    if (t.diag.oracle == trainer::OracleKind::Lqg) {
        require(t.env.kind == envs::EnvKind::LinearGaussian && t.policy.hidden.empty() && !t.policy.bias,
                "/diagnostics/oracle", "lqg needs a linear-gaussian env and a bias-free linear policy");
    }
    trainer::resolve_net_dims(t);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("/", "cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("/", "config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

Json config_to_json(const RunConfig& c) {
    const auto& t = c.train;
    Json j;
    j["env"] = env_to_json(t.env);
    j["policy"] = net_to_json(t.policy);
    j["model"] = net_to_json(t.model);
    j["critic"] = net_to_json(t.critic);
    const auto& e = t.estimator;
    j["estimator"] = Json{{"kind", est::to_string(e.kind)},
                          {"h", e.h},
                          {"batch_size", e.batch_size},
                          {"beta", e.beta},
                          {"entropy_coef", e.entropy_coef},
                          {"apg_horizon", e.apg_horizon},
                          {"lr_baseline", e.lr_baseline},
                          {"dr_recursion", e.dr_recursion}};
    j["trainer"] = Json{{"iterations", t.iterations},
                        {"policy_opt", opt_to_json(t.policy_opt)},
                        {"model_opt", opt_to_json(t.model_opt)},
                        {"critic_opt", opt_to_json(t.critic_opt)},
                        {"episodes_per_iter", t.episodes_per_iter},
                        {"episode_len", t.episode_len},
                        {"model_batches", t.model_batches},
                        {"model_batch_size", t.model_batch_size},
                        {"critic_batches", t.critic_batches},
                        {"critic_batch_size", t.critic_batch_size},
                        {"target_interval", t.target_interval},
                        {"buffer_capacity", t.buffer_capacity},
                        {"checkpoint_interval", t.checkpoint_interval},
                        {"true_model", t.true_model}};
    const auto& d = t.diag;
    j["diagnostics"] = Json{{"oracle", trainer::to_string(d.oracle)},
                            {"every", d.every},
                            {"probes", d.probes},
                            {"oracle_samples", d.oracle_samples},
                            {"oracle_horizon", d.oracle_horizon},
                            {"q_samples", d.q_samples},
                            {"kappa", d.kappa},
                            {"L1", d.L1},
                            {"B_theta", d.B_theta},
                            {"c_prime", d.c_prime},
                            {"wall_clock", d.wall_clock}};
    j["landscape"] = Json{{"extent", c.landscape.extent}, {"resolution", c.landscape.resolution}};
    j["diag"] = Json{{"h", c.diag_h}};
    if (c.sweep) {
        Json sn = Json::array();
        for (bool b : c.sweep->sn) sn.push_back(b);
        j["sweep"] = Json{{"h", c.sweep->h}, {"sn", sn}};
    }
    j["seed"] = t.seed;
    j["out"] = c.out;
    return j;
}

} // namespace rppgm::cli
