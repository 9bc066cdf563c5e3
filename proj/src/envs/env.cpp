#include "rppgm/envs/env.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace rppgm::envs {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require(bool ok, const std::string& what) {
    if (!ok) throw Error("env spec: " + what);
}

void check_dims(const EnvSpec& spec, const Tensor& s, const Tensor& a, const Tensor& noise, const char* op) {
    if (s.rank() != 1 || s.size() != spec.state_dim || a.rank() != 1 || a.size() != spec.action_dim ||
        noise.rank() != 1 || noise.size() != spec.state_dim) {
        throw ad::ShapeError(std::string(op) + ": expected state " + std::to_string(spec.state_dim) + ", action " +
                             std::to_string(spec.action_dim) + ", noise " + std::to_string(spec.state_dim) +
                             "; got " + ad::to_string(s.shape()) + ", " + ad::to_string(a.shape()) + ", " +
                             ad::to_string(noise.shape()));
    }
}

Tensor quad_form(const Tensor& x, const std::vector<double>& m) {
    return ad::dot(x, ad::matmul(Tensor::matrix(x.size(), x.size(), m), x));
}

double max_singular(const RowMat& m) {
    Eigen::JacobiSVD<RowMat> svd(m);
    return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

} // namespace

std::string_view to_string(EnvKind k) {
    switch (k) {
    case EnvKind::LinearGaussian: return "linear-gaussian";
    case EnvKind::Pendulum: return "pendulum-smooth";
    case EnvKind::Chaotic: return "chaotic-map";
    }
    return "linear-gaussian";
}

EnvKind parse_env_kind(std::string_view s) {
    if (s == "linear-gaussian") return EnvKind::LinearGaussian;
    if (s == "pendulum-smooth") return EnvKind::Pendulum;
    if (s == "chaotic-map") return EnvKind::Chaotic;
    throw Error("unknown env kind '" + std::string(s) + "'");
}

void EnvSpec::validate() const {
    const std::size_t ds = state_dim, da = action_dim;
    require(ds >= 1 && da >= 1, "dimensions must be >= 1");
    require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    require(noise_std >= 0.0 && std::isfinite(noise_std), "noise_std must be >= 0");
    require(init_mean.size() == ds, "init_mean must have state_dim entries");
    require(init_var.size() == ds, "init_var must have state_dim entries");
    for (double v : init_var) require(v >= 0.0, "init_var entries must be >= 0");
    switch (kind) {
    case EnvKind::LinearGaussian:
        require(linear.A.size() == ds * ds, "linear.A must be state_dim x state_dim");
        require(linear.B.size() == ds * da, "linear.B must be state_dim x action_dim");
        require(linear.Q.size() == ds * ds, "linear.Q must be state_dim x state_dim");
        require(linear.R.size() == da * da, "linear.R must be action_dim x action_dim");
        for (std::size_t i = 0; i < ds; ++i)
            for (std::size_t j = 0; j < i; ++j) require(linear.Q[i * ds + j] == linear.Q[j * ds + i], "linear.Q must be symmetric");
        for (std::size_t i = 0; i < da; ++i)
            for (std::size_t j = 0; j < i; ++j) require(linear.R[i * da + j] == linear.R[j * da + i], "linear.R must be symmetric");
        break;
    case EnvKind::Pendulum:
        require(ds == 2 && da == 1, "pendulum has 2 state dims and 1 action dim");
        require(pendulum.dt > 0 && pendulum.length > 0 && pendulum.mass > 0, "pendulum dt/length/mass must be > 0");
        break;
    case EnvKind::Chaotic:
        require(da == ds, "chaotic map requires action_dim == state_dim");
        require(chaotic.goal.size() == ds, "chaotic.goal must have state_dim entries");
        break;
    }
}

double EnvSpec::lipschitz() const {
    const auto ds = static_cast<Eigen::Index>(state_dim), da = static_cast<Eigen::Index>(action_dim);
    switch (kind) {
    case EnvKind::LinearGaussian: {
        RowMat ab(ds, ds + da);
        ab.leftCols(ds) = Eigen::Map<const RowMat>(linear.A.data(), ds, ds);
        ab.rightCols(da) = Eigen::Map<const RowMat>(linear.B.data(), ds, da);
        return max_singular(ab);
    }
    case EnvKind::Pendulum: {
        // The Jacobian is affine in cos(angle), so its spectral norm (convex)
        // peaks at cos = +-1.
        double best = 0.0;
        for (double c : {-1.0, 1.0}) {
            const auto& p = pendulum;
            const double k = -p.dt * p.gravity / p.length * c, u = p.dt / (p.mass * p.length * p.length);
            RowMat j(2, 3);
            j << 1 + p.dt * k, p.dt, p.dt * u, k, 1, u;
            best = std::max(best, max_singular(j));
        }
        return best;
    }
    case EnvKind::Chaotic: return std::hypot(chaotic.lambda, chaotic.coupling);
    }
    return 0.0;
}

EnvSpec default_env(EnvKind kind, std::size_t state_dim, std::size_t action_dim) {
    EnvSpec e;
    e.kind = kind;
    if (kind == EnvKind::Pendulum) {
        state_dim = 2;
        action_dim = 1;
    }
    if (kind == EnvKind::Chaotic) action_dim = state_dim;
    e.state_dim = state_dim;
    e.action_dim = action_dim;
    const std::size_t ds = state_dim, da = action_dim;
    switch (kind) {
    case EnvKind::LinearGaussian: {
        e.gamma = 0.9;
        e.noise_std = 0.1;
        e.init_mean.assign(ds, 1.0);
        e.init_var.assign(ds, 0.1);
        e.linear.A.assign(ds * ds, 0.0);
        e.linear.B.assign(ds * da, 0.0);
        e.linear.Q.assign(ds * ds, 0.0);
        e.linear.R.assign(da * da, 0.0);
        for (std::size_t i = 0; i < ds; ++i) {
            e.linear.A[i * ds + i] = 0.9;
            e.linear.Q[i * ds + i] = 1.0;
        }
        for (std::size_t i = 0; i < std::min(ds, da); ++i) e.linear.B[i * da + i] = 0.5;
        for (std::size_t i = 0; i < da; ++i) e.linear.R[i * da + i] = 0.1;
        break;
    }
    case EnvKind::Pendulum:
        e.gamma = 0.95;
        e.noise_std = 0.01;
        e.init_mean = {0.3, 0.0};
        e.init_var = {0.01, 0.01};
        break;
    case EnvKind::Chaotic:
        e.gamma = 0.95;
        e.noise_std = 0.0;
        e.init_mean.assign(ds, 0.3);
        e.init_var.assign(ds, 0.01);
        e.chaotic.goal.assign(ds, 0.5);
        break;
    }
    return e;
}

Tensor env_reward(const EnvSpec& spec, const Tensor& s, const Tensor& a) {
    switch (spec.kind) {
    case EnvKind::LinearGaussian:
        return ad::neg(ad::add(quad_form(s, spec.linear.Q), quad_form(a, spec.linear.R)));
    case EnvKind::Pendulum: {
        Tensor th = ad::slice(s, 0, 1), om = ad::slice(s, 1, 2);
        Tensor cost = ad::add(ad::add(ad::sum(ad::square(th)), ad::scale(ad::sum(ad::square(om)), 0.1)),
                              ad::scale(ad::sum(ad::square(a)), 0.001));
        return ad::neg(cost);
    }
    case EnvKind::Chaotic:
        return ad::neg(ad::sum(ad::square(ad::sub(s, Tensor::vector(spec.chaotic.goal)))));
    }
    return Tensor::scalar(0.0);
}

StepResult env_step(const EnvSpec& spec, const Tensor& s, const Tensor& a, const Tensor& noise) {
    check_dims(spec, s, a, noise, "env_step");
    const std::size_t ds = spec.state_dim, da = spec.action_dim;
    Tensor xi = ad::scale(noise.detach(), spec.noise_std);
    Tensor mean;
    switch (spec.kind) {
    case EnvKind::LinearGaussian:
        mean = ad::add(ad::matmul(Tensor::matrix(ds, ds, spec.linear.A), s),
                       ad::matmul(Tensor::matrix(ds, da, spec.linear.B), a));
        break;
    case EnvKind::Pendulum: {
        const auto& p = spec.pendulum;
        Tensor th = ad::slice(s, 0, 1), om = ad::slice(s, 1, 2);
        Tensor acc = ad::add(ad::scale(ad::sin(th), -p.gravity / p.length),
                             ad::scale(a, 1.0 / (p.mass * p.length * p.length)));
        Tensor om2 = ad::add(om, ad::scale(acc, p.dt));
        Tensor th2 = ad::add(th, ad::scale(om2, p.dt));
        mean = ad::concat(th2, om2);
        break;
    }
    case EnvKind::Chaotic: {
        Tensor one_minus = ad::sub(Tensor::vector(std::vector<double>(ds, 1.0)), s);
        mean = ad::add(ad::scale(ad::mul(s, one_minus), spec.chaotic.lambda), ad::scale(a, spec.chaotic.coupling));
        break;
    }
    }
    Tensor next = ad::add(mean, xi);
    if (spec.kind == EnvKind::Chaotic) next = ad::clamp(next, -kChaoticStateBound, kChaoticStateBound);
    return {next, env_reward(spec, s, a)};
}

std::pair<Tensor, Tensor> env_jacobians(const EnvSpec& spec, const Tensor& s, const Tensor& a, const Tensor& noise) {
    check_dims(spec, s, a, noise, "env_jacobians");
    const std::size_t ds = spec.state_dim, da = spec.action_dim;
    switch (spec.kind) {
    case EnvKind::LinearGaussian:
        return {Tensor::matrix(ds, ds, spec.linear.A), Tensor::matrix(ds, da, spec.linear.B)};
    case EnvKind::Pendulum: {
        const auto& p = spec.pendulum;
        const double k = -p.dt * p.gravity / p.length * std::cos(s[0]);
        const double u = p.dt / (p.mass * p.length * p.length);
        return {Tensor::matrix(2, 2, {1 + p.dt * k, p.dt, k, 1.0}), Tensor::matrix(2, 1, {p.dt * u, u})};
    }
    case EnvKind::Chaotic: {
        const auto& c = spec.chaotic;
        std::vector<double> js(ds * ds, 0.0), ja(ds * da, 0.0);
        for (std::size_t i = 0; i < ds; ++i) {
            const double pre = c.lambda * s[i] * (1 - s[i]) + c.coupling * a[i] + spec.noise_std * noise[i];
            if (pre < -kChaoticStateBound || pre > kChaoticStateBound) continue; // clamped
            js[i * ds + i] = c.lambda * (1 - 2 * s[i]);
            ja[i * da + i] = c.coupling;
        }
        return {Tensor::matrix(ds, ds, js), Tensor::matrix(ds, da, ja)};
    }
    }
    return {};
}

std::vector<double> sample_initial_state(const EnvSpec& spec, Rng& rng) {
    std::vector<double> s(spec.state_dim);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = spec.init_mean[i] + std::sqrt(spec.init_var[i]) * rng.normal();
    return s;
}

} // namespace rppgm::envs
