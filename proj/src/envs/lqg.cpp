#include "rppgm/envs/lqg.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>

namespace rppgm::envs {

namespace {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat load(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    return Eigen::Map<const RowMat>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

std::vector<double> store(const Mat& m) {
    RowMat r = m;
    return std::vector<double>(r.data(), r.data() + r.size());
}

struct Pieces {
    Mat A, B, Q, R, K, M, QK, D, W, Sigma0;
};

Pieces pieces(const EnvSpec& spec, const LinearPolicy& policy) {
    if (spec.kind != EnvKind::LinearGaussian) throw Error("LQG oracle requires a linear-gaussian env");
    spec.validate();
    const std::size_t ds = spec.state_dim, da = spec.action_dim;
    if (policy.K.size() != da * ds) throw Error("LQG oracle: K must be action_dim x state_dim");
    if (policy.log_std.size() != da) throw Error("LQG oracle: log_std must have action_dim entries");
    Pieces p;
    p.A = load(spec.linear.A, ds, ds);
    p.B = load(spec.linear.B, ds, da);
    p.Q = load(spec.linear.Q, ds, ds);
    p.R = load(spec.linear.R, da, da);
    p.K = load(policy.K, da, ds);
    p.M = p.A + p.B * p.K;
    p.QK = p.Q + p.K.transpose() * p.R * p.K;
    p.D = Mat::Zero(static_cast<Eigen::Index>(da), static_cast<Eigen::Index>(da));
    for (std::size_t j = 0; j < da; ++j) p.D(j, j) = std::exp(2.0 * policy.log_std[j]);
    p.W = p.B * p.D * p.B.transpose() +
          spec.noise_std * spec.noise_std * Mat::Identity(static_cast<Eigen::Index>(ds), static_cast<Eigen::Index>(ds));
    Eigen::VectorXd m0 = Eigen::Map<const Eigen::VectorXd>(spec.init_mean.data(), static_cast<Eigen::Index>(ds));
    p.Sigma0 = m0 * m0.transpose();
    for (std::size_t i = 0; i < ds; ++i) p.Sigma0(i, i) += spec.init_var[i];
    return p;
}

// Solves P = QK + gamma M^T P M; empty when gamma rho(M)^2 >= 1.
std::optional<Mat> discounted_lyapunov(const Mat& M, const Mat& QK, double gamma) {
    const double rho = M.eigenvalues().cwiseAbs().maxCoeff();
    if (gamma * rho * rho >= 1.0) return std::nullopt;
    const Eigen::Index n = M.rows();
    Mat Mt = M.transpose();
    // vec(M^T P M) = (M^T kron M^T) vec(P) for column-major vec.
    Mat kron(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = Mt(i, j) * Mt;
    Mat lhs = Mat::Identity(n * n, n * n) - gamma * kron;
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(QK.data(), n * n);
    Eigen::VectorXd x = lhs.partialPivLu().solve(rhs);
    Mat P = Eigen::Map<Mat>(x.data(), n, n);
    return 0.5 * (P + P.transpose());
}

} // namespace

LqgResult lqg_policy_value_and_gradient(const EnvSpec& spec, const LinearPolicy& policy, std::size_t horizon) {
    const Pieces p = pieces(spec, policy);
    const double g = spec.gamma;
    const std::size_t da = spec.action_dim;
    LqgResult out;

    std::vector<Mat> sigma;
    sigma.reserve(horizon + 1);
    sigma.push_back(p.Sigma0);
    for (std::size_t i = 0; i < horizon; ++i) sigma.push_back(p.M * sigma.back() * p.M.transpose() + p.W);

    const double trRD = (p.R * p.D).trace();
    std::vector<double> w(horizon); // (1 - gamma) gamma^i
    double gi = 1.0;
    for (std::size_t i = 0; i < horizon; ++i, gi *= g) w[i] = (1.0 - g) * gi;

    double value = 0.0;
    for (std::size_t i = 0; i < horizon; ++i) value -= w[i] * ((p.QK * sigma[i]).trace() + trRD);
    out.value = value;

    // Adjoint: Lambda_i = -w_i QK + M^T Lambda_{i+1} M.
    Mat gradK = Mat::Zero(p.K.rows(), p.K.cols());
    Mat sumLambda = Mat::Zero(p.A.rows(), p.A.cols()); // sum over i >= 1
    if (horizon > 0) {
        Mat lambda = -w[horizon - 1] * p.QK;
        for (std::size_t k = horizon; k-- > 0;) {
            if (k + 1 < horizon) {
                // lambda currently holds Lambda_{k+1}.
                gradK += 2.0 * p.B.transpose() * lambda * p.M * sigma[k];
                sumLambda += lambda;
                lambda = -w[k] * p.QK + p.M.transpose() * lambda * p.M;
            }
            gradK += -w[k] * 2.0 * p.R * p.K * sigma[k];
        }
    }
    out.grad_K = store(gradK);

    double wsum = 0.0;
    for (double x : w) wsum += x;
    Mat dW = p.B.transpose() * sumLambda * p.B;
    out.grad_log_std.resize(da);
    for (std::size_t j = 0; j < da; ++j) {
        const double dD = dW(j, j) - wsum * p.R(j, j);
        out.grad_log_std[j] = dD * 2.0 * p.D(j, j);
    }

    auto P = discounted_lyapunov(p.M, p.QK, g);
    if (!P) {
        out.tail_bound = std::numeric_limits<double>::infinity();
    } else {
        const double gh = std::pow(g, static_cast<double>(horizon));
        out.tail_bound = (1.0 - g) * gh *
                         ((*P * sigma[horizon]).trace() + g * (*P * p.W).trace() / (1.0 - g) + trRD / (1.0 - g));
    }
    return out;
}

LqgQFunction::LqgQFunction(const EnvSpec& spec, const LinearPolicy& policy) : spec_(spec), policy_(policy) {
    const Pieces p = pieces(spec, policy);
    auto P = discounted_lyapunov(p.M, p.QK, spec.gamma);
    if (!P) throw Error("LQG Q-function: closed-loop system is not discounted-stable");
    const double g = spec.gamma;
    const double cU = ((p.R * p.D).trace() + g * (*P * p.W).trace()) / (1.0 - g);
    offset_ = g * (spec.noise_std * spec.noise_std * P->trace() + cU);
    P_ = store(*P);
}

double LqgQFunction::value(const std::vector<double>& s, const std::vector<double>& a) const {
    const std::size_t ds = spec_.state_dim, da = spec_.action_dim;
    Eigen::VectorXd sv = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(ds));
    Eigen::VectorXd av = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(da));
    Mat A = load(spec_.linear.A, ds, ds), B = load(spec_.linear.B, ds, da);
    Mat Q = load(spec_.linear.Q, ds, ds), R = load(spec_.linear.R, da, da), P = load(P_, ds, ds);
    Eigen::VectorXd m = A * sv + B * av;
    const double g = spec_.gamma;
    return -(1.0 - g) * (sv.dot(Q * sv) + av.dot(R * av) + g * m.dot(P * m) + offset_);
}

std::vector<double> LqgQFunction::grad_s(const std::vector<double>& s, const std::vector<double>& a) const {
    const std::size_t ds = spec_.state_dim, da = spec_.action_dim;
    Eigen::VectorXd sv = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(ds));
    Eigen::VectorXd av = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(da));
    Mat A = load(spec_.linear.A, ds, ds), B = load(spec_.linear.B, ds, da);
    Mat Q = load(spec_.linear.Q, ds, ds), P = load(P_, ds, ds);
    const double g = spec_.gamma;
    Eigen::VectorXd d = -(1.0 - g) * (2.0 * Q * sv + 2.0 * g * A.transpose() * P * (A * sv + B * av));
    return std::vector<double>(d.data(), d.data() + d.size());
}

std::vector<double> LqgQFunction::grad_a(const std::vector<double>& s, const std::vector<double>& a) const {
    const std::size_t ds = spec_.state_dim, da = spec_.action_dim;
    Eigen::VectorXd sv = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(ds));
    Eigen::VectorXd av = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(da));
    Mat A = load(spec_.linear.A, ds, ds), B = load(spec_.linear.B, ds, da);
    Mat R = load(spec_.linear.R, da, da), P = load(P_, ds, ds);
    const double g = spec_.gamma;
    Eigen::VectorXd d = -(1.0 - g) * (2.0 * R * av + 2.0 * g * B.transpose() * P * (A * sv + B * av));
    return std::vector<double>(d.data(), d.data() + d.size());
}

double LqgQFunction::state_value(const std::vector<double>& s) const {
    const std::size_t ds = spec_.state_dim;
    Eigen::VectorXd sv = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(ds));
    Mat P = load(P_, ds, ds);
    const double g = spec_.gamma;
    // offset = gamma (noise^2 tr P + cU); recover cU.
    const double cU = offset_ / g - spec_.noise_std * spec_.noise_std * P.trace();
    return -(1.0 - g) * (sv.dot(P * sv) + cU);
}

} // namespace rppgm::envs
