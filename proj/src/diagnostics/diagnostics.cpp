#include "rppgm/diagnostics/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "rppgm/envs/lqg.hpp"
#include "rppgm/util/parallel.hpp"

namespace rppgm::diag {

using ad::Tensor;

Variance estimate_gradient_variance(std::span<const ParamVector> grads) {
    if (grads.size() < 2) throw Error("gradient variance needs at least 2 per-sample gradients");
    const std::size_t n = grads.size(), d = grads[0].size();
    Vec mean(d, 0.0);
    for (const auto& g : grads) {
        if (g.size() != d) throw ad::ShapeError("per-sample gradients differ in size");
        for (std::size_t k = 0; k < d; ++k) mean[k] += g.values[k];
    }
    for (auto& x : mean) x /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& g : grads)
        for (std::size_t k = 0; k < d; ++k) ss += (g.values[k] - mean[k]) * (g.values[k] - mean[k]);
    Variance v;
    v.single = ss / static_cast<double>(n - 1);
    v.batch = v.single / static_cast<double>(n);
    return v;
}

Bias estimate_gradient_bias(const std::vector<double>& estimate, const std::vector<double>& oracle) {
    if (estimate.size() != oracle.size()) throw ad::ShapeError("bias: gradient sizes differ");
    double d2 = 0, dot = 0, ne = 0, no = 0;
    for (std::size_t k = 0; k < estimate.size(); ++k) {
        d2 += (estimate[k] - oracle[k]) * (estimate[k] - oracle[k]);
        dot += estimate[k] * oracle[k];
        ne += estimate[k] * estimate[k];
        no += oracle[k] * oracle[k];
    }
    Bias b;
    b.distance = std::sqrt(d2);
    b.cosine = (ne > 0 && no > 0) ? dot / std::sqrt(ne * no) : 0.0;
    return b;
}

Probes probe_rollouts(const envs::EnvSpec& env, const est::Dynamics* model, const nets::GaussianNet& policy,
                      std::size_t h, std::size_t m, Rng& rng) {
    if (m == 0) throw Error("probe rollouts need at least one trajectory");
    Probes p;
    p.s.resize(m);
    p.a.resize(m);
    p.xi.resize(m);
    p.model_s.resize(m);
    p.model_a.resize(m);
    est::TrueDynamics truth(env);
    auto true_step = truth.bind(nullptr);
    auto model_step = model ? model->bind(nullptr) : nullptr;
    auto act = [&](const Vec& s, const Vec& z) {
        auto out = nets::net_forward(policy, Tensor::vector(s));
        return nets::gaussian_sample(out.mean, out.log_std, Tensor::vector(z)).data();
    };
    for (std::size_t k = 0; k < m; ++k) {
        Vec s = envs::sample_initial_state(env, rng), ms = s;
        for (std::size_t i = 0; i <= h; ++i) {
            Vec z = rng.normal_vector(env.action_dim);
            Vec a = act(s, z);
            p.s[k].push_back(s);
            p.a[k].push_back(a);
            Vec ma = model ? act(ms, z) : a;
            p.model_s[k].push_back(ms);
            p.model_a[k].push_back(ma);
            if (i == h) break;
            Vec xi = rng.normal_vector(env.state_dim);
            s = true_step->step(Tensor::vector(s), Tensor::vector(a), Tensor::vector(xi)).data();
            ms = model ? model_step->step(Tensor::vector(ms), Tensor::vector(ma), Tensor::vector(xi)).data() : s;
            p.xi[k].push_back(std::move(xi));
        }
    }
    return p;
}

namespace {

double spectral_norm_of_difference(const Tensor& x, const Tensor& y) {
    Vec d(x.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = x.data()[i] - y.data()[i];
    nets::PowerVectors pv;
    return nets::spectral_norm_estimate(d, x.rows(), x.cols(), 20, pv);
}

double l2_diff(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

} // namespace

double estimate_model_error(const est::Dynamics& model, const envs::EnvSpec& env, const Probes& probes,
                            std::size_t h) {
    if (h == 0) return 0.0;
    const std::size_t m = probes.s.size();
    if (m == 0 || probes.xi[0].size() < h) throw Error("model error: probes are shorter than h");
    double worst = 0.0;
    for (std::size_t i = 1; i <= h; ++i) {
        Vec per(m);
        parallel_for(m, [&](std::size_t k) {
            const Vec& xi = probes.xi[k][i - 1];
            auto [ts, ta] = envs::env_jacobians(env, Tensor::vector(probes.s[k][i - 1]),
                                                Tensor::vector(probes.a[k][i - 1]), Tensor::vector(xi));
            auto [ms, ma] = model.jacobians(probes.model_s[k][i - 1], probes.model_a[k][i - 1], xi);
            per[k] = spectral_norm_of_difference(ts, ms) + spectral_norm_of_difference(ta, ma);
        });
        double mean = 0.0;
        for (double x : per) mean += x;
        worst = std::max(worst, mean / static_cast<double>(m));
    }
    return worst;
}

double estimate_critic_error(const est::Critic& critic, const QGradOracle& oracle, const Probes& probes,
                             std::size_t h, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("critic error: gamma must lie in (0, 1)");
    const double alpha = (1.0 - gamma) / std::pow(gamma, static_cast<double>(h));
    if (!std::isfinite(alpha * alpha)) {
        throw NumericError("critic error: gamma^h underflows at h = " + std::to_string(h) +
                           "; use a smaller h or a larger gamma");
    }
    const std::size_t m = probes.s.size();
    if (m == 0 || probes.s[0].size() <= h) throw Error("critic error: probes are shorter than h");
    Vec per(m);
    parallel_for(m, [&](std::size_t k) {
        auto [qs, qa] = oracle(probes.s[k][h], probes.a[k][h]);
        auto [cs, ca] = critic.gradients(probes.model_s[k][h], probes.model_a[k][h]);
        per[k] = l2_diff(qs, cs) + l2_diff(qa, ca);
    });
    double mean = 0.0;
    for (double x : per) mean += x;
    return alpha * alpha * mean / static_cast<double>(m);
}

QGradOracle lqg_q_oracle(const envs::EnvSpec& env, const envs::LinearPolicy& policy) {
    auto q = std::make_shared<envs::LqgQFunction>(env, policy);
    const double scale = 1.0 / (1.0 - env.gamma);
    return [q, scale](const Vec& s, const Vec& a) {
        Vec gs = q->grad_s(s, a), ga = q->grad_a(s, a);
        for (auto& x : gs) x *= scale;
        for (auto& x : ga) x *= scale;
        return std::pair{gs, ga};
    };
}

QGradOracle pathwise_q_oracle(const envs::EnvSpec& env, const nets::GaussianNet& policy, std::size_t horizon,
                              std::size_t samples, std::uint64_t seed) {
    if (samples == 0 || horizon == 0) throw Error("pathwise Q oracle needs samples and horizon >= 1");
    return [env, policy, horizon, samples, seed](const Vec& s0, const Vec& a0) {
        Vec gs(s0.size(), 0.0), ga(a0.size(), 0.0);
        Rng rng(seed);
        for (std::size_t n = 0; n < samples; ++n) {
            ad::Tape tape;
            nets::BoundNet pol(policy, nullptr, false);
            Tensor leaves[] = {tape.variable(Tensor::vector(s0)), tape.variable(Tensor::vector(a0))};
            Tensor s = leaves[0], a = leaves[1];
            Tensor total = envs::env_reward(env, s, a);
            double disc = 1.0;
            for (std::size_t i = 1; i < horizon; ++i) {
                s = envs::env_step(env, s, a, Tensor::vector(rng.normal_vector(env.state_dim))).next_state;
                auto out = pol.forward(s);
                a = nets::gaussian_sample(out.mean, out.log_std, Tensor::vector(rng.normal_vector(env.action_dim)));
                disc *= env.gamma;
                total = ad::add(total, ad::scale(envs::env_reward(env, s, a), disc));
            }
            auto g = tape.gradient(total, leaves);
            for (std::size_t k = 0; k < gs.size(); ++k) gs[k] += g[0].data()[k];
            for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[1].data()[k];
        }
        for (auto& x : gs) x /= static_cast<double>(samples);
        for (auto& x : ga) x /= static_cast<double>(samples);
        return std::pair{gs, ga};
    };
}

OptimalH optimal_h(double eps_f, double eps_v, double gamma, double c_prime) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("optimal_h: gamma must lie in (0, 1)");
    if (eps_f < 0 || eps_v < 0 || c_prime < 0) throw Error("optimal_h: errors and c' must be nonnegative");
    const double H = 1.0 / (1.0 - gamma);
    const double c1 = eps_f + eps_v + c_prime;
    const double disc = (4 * H * eps_v) * (4 * H * eps_v) - 12 * c1 * eps_v * H * H;
    OptimalH out;
    if (disc < 0 || c1 == 0.0) return out;
    const double root = (4 * H * eps_v + std::sqrt(disc)) / (6 * c1);
    out.h_real = root;
    // Of the two integers around the root, the one with the smaller
    // h^3 (ef + c') + h (H - h)^2 ev; nearest integer on a tie.
    auto g1 = [&](double h) { return h * h * h * (eps_f + c_prime) + h * (H - h) * (H - h) * eps_v; };
    const double lo = std::max(std::floor(root), 0.0), hi = std::max(std::ceil(root), 0.0);
    const double glo = g1(lo), ghi = g1(hi);
    double pick = std::max(std::round(root), 0.0);
    if (std::abs(glo - ghi) > 1e-12 * std::max(std::abs(glo), std::abs(ghi))) pick = glo < ghi ? lo : hi;
    out.h = static_cast<std::size_t>(pick);
    return out;
}

double smoothness_constant(double r_m, double L1, double B_theta, double gamma) {
    const double g = 1.0 - gamma;
    return r_m * L1 / (g * g) + (1 + gamma) * r_m * B_theta * B_theta / (g * g * g);
}

double kappa_prime(double beta, double kappa) { return beta + kappa * (1.0 - beta); }

BoundResult convergence_bound(const BoundInputs& in) {
    const double denom = in.eta - in.L * in.eta * in.eta;
    if (!(denom > 0.0)) throw Error("convergence bound needs eta - L eta^2 > 0");
    return convergence_bound_with_c(in, 1.0 / denom);
}

BoundResult convergence_bound_with_c(const BoundInputs& in, double c) {
    if (in.b.size() != in.v.size()) throw Error("convergence bound: b and v differ in length");
    if (in.b.empty()) throw Error("convergence bound: T must be positive");
    const double T = static_cast<double>(in.b.size());
    BoundResult r;
    r.c = c;
    double sum = 0.0, eps = 0.0;
    for (std::size_t t = 0; t < in.b.size(); ++t) {
        sum += c * (2 * in.delta * in.b[t] + in.eta / 2 * in.v[t]) + in.b[t] * in.b[t] + in.v[t];
        eps += in.b[t];
    }
    r.sum_part = 4.0 / T * sum;
    r.rhs = 4.0 * c / T * in.delta_J + r.sum_part;
    r.corollary = 16 * in.delta * eps / std::sqrt(T) + 4 * eps * eps / T;
    return r;
}

ParamVector filter_normalized_direction(const ParamVector& params, Rng& rng) {
    ParamVector d = params.zeros_like();
    for (auto& x : d.values) x = rng.normal();
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        const auto& blk = params.blocks[b];
        double np = 0, nd = 0;
        for (std::size_t k = blk.offset; k < blk.offset + blk.size(); ++k) {
            np += params.values[k] * params.values[k];
            nd += d.values[k] * d.values[k];
        }
        const double s = nd > 0 ? std::sqrt(np / nd) : 0.0;
        for (std::size_t k = blk.offset; k < blk.offset + blk.size(); ++k) d.values[k] *= s;
    }
    return d;
}

Landscape loss_landscape_slice(const ParamVector& theta0, const ParamVector& d1, const ParamVector& d2,
                               double extent, std::size_t resolution,
                               const std::function<double(const ParamVector&)>& value) {
    if (d1.size() != theta0.size() || d2.size() != theta0.size()) throw ad::ShapeError("landscape: direction sizes");
    if (extent < 0) throw Error("landscape: extent must be nonnegative");
    Landscape out;
    const std::size_t n = extent == 0.0 ? 1 : 2 * resolution + 1;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = n == 1 ? 0.0 : -extent + 2.0 * extent * static_cast<double>(i) / static_cast<double>(n - 1);
        out.u.push_back(x);
        out.w.push_back(x);
    }
    // Exact zero at the centre.
    if (n > 1) out.u[n / 2] = out.w[n / 2] = 0.0;
    out.values.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            ParamVector p = theta0;
            for (std::size_t k = 0; k < p.size(); ++k) p.values[k] += out.u[i] * d1.values[k] + out.w[j] * d2.values[k];
            out.values[i * n + j] = -value(p);
        }
    }
    return out;
}

double probe_lipschitz(const std::function<Vec(const Vec&)>& f, const Vec& lo, const Vec& hi, std::size_t m,
                       Rng& rng) {
    if (lo.size() != hi.size()) throw ad::ShapeError("probe_lipschitz: box bounds differ in size");
    if (m == 0) throw Error("probe_lipschitz: need at least one pair");
    const std::size_t d = lo.size();
    double width = 0.0;
    for (std::size_t i = 0; i < d; ++i) width = std::max(width, hi[i] - lo[i]);
    double best = 0.0;
    bool any = false;
    auto quotient = [&](const Vec& x, const Vec& y) {
        const double dist = l2_diff(x, y);
        if (dist == 0.0) return;
        best = std::max(best, l2_diff(f(x), f(y)) / dist);
        any = true;
    };
    auto point = [&] {
        Vec x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = lo[i] == hi[i] ? lo[i] : rng.uniform(lo[i], hi[i]);
        return x;
    };
    const double step = 1e-4 * width;
    for (std::size_t k = 0; k < m; ++k) {
        quotient(point(), point());
        Vec x = point(), dir = rng.normal_vector(d), y = x;
        const double nd = l2_diff(dir, Vec(d, 0.0));
        if (nd > 0)
            for (std::size_t i = 0; i < d; ++i) y[i] += step * dir[i] / nd;
        quotient(x, y);
    }
    if (step > 0) {
        // Top right singular vector of the central-difference Jacobian at the centre.
        Vec c(d);
        for (std::size_t i = 0; i < d; ++i) c[i] = 0.5 * (lo[i] + hi[i]);
        const double e = 1e-6 * width;
        std::vector<Vec> cols;
        for (std::size_t i = 0; i < d; ++i) {
            Vec p = c, q = c;
            p[i] += e;
            q[i] -= e;
            Vec fp = f(p), fq = f(q);
            for (std::size_t r = 0; r < fp.size(); ++r) fp[r] = (fp[r] - fq[r]) / (2 * e);
            cols.push_back(std::move(fp));
        }
        const std::size_t rows = cols[0].size();
        Vec jac(rows * d);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < d; ++i) jac[r * d + i] = cols[i][r];
        nets::PowerVectors pv;
        if (nets::spectral_norm_estimate(jac, rows, d, 50, pv) > 0.0) {
            Vec p = c, q = c;
            for (std::size_t i = 0; i < d; ++i) {
                p[i] += step * pv.v[i];
                q[i] -= step * pv.v[i];
            }
            quotient(p, q);
        }
    }
    if (!any) throw Error("probe_lipschitz: every probe pair was degenerate");
    return best;
}

} // namespace rppgm::diag
