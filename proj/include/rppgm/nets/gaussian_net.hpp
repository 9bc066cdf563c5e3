#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "rppgm/ad/param_vector.hpp"
#include "rppgm/ad/tape.hpp"
#include "rppgm/util/rng.hpp"

namespace rppgm::nets {

using ad::ParamVector;
using ad::Tensor;

enum class Activation { Identity, Tanh, Relu, LeakyRelu };
enum class HeadKind { Gaussian, Scalar };
// Which layers are spectrally normalized when SN is enabled.
enum class SnMask { All, AllButFinal };

std::string_view to_string(Activation a);
std::string_view to_string(HeadKind h);
std::string_view to_string(SnMask m);
Activation parse_activation(std::string_view s);
HeadKind parse_head(std::string_view s);
SnMask parse_sn_mask(std::string_view s);

struct NetSpec {
    std::size_t input_dim = 1;
    std::size_t output_dim = 1;
    std::vector<std::size_t> hidden;
    Activation activation = Activation::Tanh;
    bool bias = true;
    HeadKind head = HeadKind::Gaussian;
    double log_std_init = -1.0;
    double log_std_min = -5.0;
    double log_std_max = 2.0;
    bool sn = false;
    SnMask sn_mask = SnMask::All;

    bool operator==(const NetSpec&) const = default;
};

// Left/right singular vector estimates, warm-started across power iterations.
struct PowerVectors {
    std::vector<double> u;
    std::vector<double> v;

    bool operator==(const PowerVectors&) const = default;
};

struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weight; // out x in, row-major
    std::vector<double> bias;   // empty when the layer has no bias
    Activation activation = Activation::Identity;
    bool normalized = false;
    PowerVectors power;

    bool operator==(const Layer&) const = default;
};

// MLP with either a Gaussian head (mean plus a state-independent, clamped
// log-std vector) or a scalar head. The final layer is always linear.
class GaussianNet {
public:
    GaussianNet() = default;
    // Weights and biases uniform in +-1/sqrt(fan_in). With SN enabled the
    // power vectors are converged (50 iterations) before returning.
    GaussianNet(const NetSpec& spec, Rng& rng);
    // Replaces the spec of an already-populated network (deserialization).
    static GaussianNet restore(const NetSpec& spec, GaussianNet net);

    const NetSpec& spec() const noexcept { return spec_; }
    std::vector<Layer>& layers() noexcept { return layers_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<double>& log_std() noexcept { return log_std_; }
    const std::vector<double>& log_std() const noexcept { return log_std_; }

    bool gaussian() const noexcept { return spec_.head == HeadKind::Gaussian; }
    std::size_t input_dim() const noexcept { return spec_.input_dim; }
    std::size_t output_dim() const noexcept { return spec_.output_dim; }
    // Number of leading layers covered by the SN mask (0 when SN is off).
    std::size_t masked_layers() const;

    // Flat parameters: per layer weight then bias; log-std last.
    ParamVector params() const;
    void set_params(const ParamVector& p);
    std::size_t param_count() const;

    // sigma = u^T W v for a normalized layer, 1 otherwise.
    double layer_sigma(std::size_t layer) const;
    // W / sigma for normalized layers, W otherwise.
    std::vector<double> effective_weight(std::size_t layer) const;

    bool operator==(const GaussianNet&) const = default;

private:
    NetSpec spec_;
    std::vector<Layer> layers_;
    std::vector<double> log_std_;
};

struct NetOutput {
    Tensor mean;
    Tensor log_std; // empty for scalar heads
};

// A network's parameters placed on a tape (as differentiable leaves when
// trainable, otherwise as constants), or held as plain constants when tape is
// null. Effective SN weights are formed once at bind time with the power
// vectors frozen, so the gradient flows through sigma = u^T W v.
class BoundNet {
public:
    BoundNet(const GaussianNet& net, ad::Tape* tape, bool trainable);

    // x is a vector (input_dim) or a batch (rows, input_dim).
    NetOutput forward(const Tensor& x) const;
    // Output of the first n layers including their activations.
    Tensor forward_prefix(const Tensor& x, std::size_t n) const;

    const GaussianNet& net() const noexcept { return *net_; }
    // Parameter leaves in ParamVector block order (empty when not trainable).
    const std::vector<Tensor>& leaves() const noexcept { return leaves_; }
    // d output / d params, packed like GaussianNet::params().
    ParamVector gradient(const Tensor& output) const;

private:
    const GaussianNet* net_;
    ad::Tape* tape_;
    std::vector<Tensor> leaves_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
    Tensor log_std_;
};

NetOutput net_forward(const GaussianNet& net, const Tensor& input);

// mean + exp(log_std) * noise; noise is treated as a constant.
Tensor gaussian_sample(const Tensor& mean, const Tensor& log_std, const Tensor& noise);
// Sum over dimensions of the diagonal Gaussian log-density.
Tensor gaussian_log_prob(const Tensor& mean, const Tensor& log_std, const Tensor& value);

// Deterministic, non-uniform unit start vectors for power iteration.
PowerVectors initial_power_vectors(std::size_t rows, std::size_t cols);

// Power-iteration estimate of the largest singular value of a row-major
// rows x cols matrix. pv is (re)initialized if its sizes do not match and is
// updated in place. A zero matrix yields 0 and leaves pv unchanged.
double spectral_norm_estimate(std::span<const double> weight, std::size_t rows, std::size_t cols,
                              std::size_t iters, PowerVectors& pv);
double spectral_norm_estimate(const Tensor& weight, std::size_t iters, PowerVectors& pv);

// Runs power iteration on every masked layer. Later forwards use W/sigma.
void apply_spectral_normalization(GaussianNet& net, std::size_t iters = 50);

} // namespace rppgm::nets
