#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "setchoice/matrix.hpp"
#include "setchoice/rng.hpp"

namespace setchoice {

// Hidden layers are always ReLU; this selects the output layer only.
enum class Activation { identity, sigmoid };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Feedforward net parameters. w[l] has shape (layer_sizes[l+1] x layer_sizes[l]),
// so a forward step is act * w[l]^T + b[l].
struct MlpParams {
    std::vector<size_t> layer_sizes;
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;
    Activation out_act = Activation::identity;

    size_t n_layers() const { return w.size(); }
    size_t in_dim() const { return layer_sizes.front(); }
    size_t out_dim() const { return layer_sizes.back(); }
    size_t n_params() const;
};

// He-style init: weights uniform on +/- sqrt(6 / fan_in), biases zero.
// Draw order is row-major per layer, layers in order, so a given RngStream
// state produces one exact parameter vector.
MlpParams init_params(const std::vector<size_t>& layer_sizes, Activation out_act,
                      RngStream& rng);

// Forward activations; act[0] is the input, act.back() the output.
struct MlpCache {
    std::vector<Matrix> act;
    const Matrix& output() const { return act.back(); }
};

MlpCache mlp_forward(const MlpParams& p, const Matrix& input);

struct MlpGrads {
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;
    void zero();
};

MlpGrads make_grads(const MlpParams& p);

// grad_out is dLoss/d(output activations). Parameter gradients are ADDED to
// accum (callers combining several passes rely on this); the return value is
// dLoss/d(input rows).
Matrix mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& grad_out,
                    MlpGrads& accum);

struct AdamState {
    std::vector<Matrix> m_w, v_w;
    std::vector<std::vector<double>> m_b, v_b;
    int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam(const MlpParams& p);

// One Adam update over every parameter. Throws NumericError naming the layer
// if any gradient entry is non-finite; zero gradients advance `step` but
// leave parameters untouched.
void adam_step(MlpParams& p, const MlpGrads& g, AdamState& st, double lr);

// Versioned serialization: header with layer sizes and output activation,
// weights stored row-major. Loading validates every dimension.
nlohmann::json mlp_to_json(const MlpParams& p);
MlpParams mlp_from_json(const nlohmann::json& j);

} // namespace setchoice
