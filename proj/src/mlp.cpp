#include "setchoice/mlp.hpp"

#include <cmath>

#include "setchoice/kernels.hpp"

namespace setchoice {

const char* activation_name(Activation a) {
    return a == Activation::sigmoid ? "sigmoid" : "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "identity") return Activation::identity;
    throw DataError("unknown activation: " + name);
}

size_t MlpParams::n_params() const {
    size_t n = 0;
    for (size_t l = 0; l < w.size(); ++l) n += w[l].size() + b[l].size();
    return n;
}

MlpParams init_params(const std::vector<size_t>& layer_sizes, Activation out_act,
                      RngStream& rng) {
    if (layer_sizes.size() < 3)
        throw ConfigError("mlp needs input, at least one hidden and output layer; got " +
                          std::to_string(layer_sizes.size()) + " sizes");
    for (size_t s : layer_sizes)
        if (s == 0) throw ConfigError("mlp layer size must be positive");

    MlpParams p;
    p.layer_sizes = layer_sizes;
    p.out_act = out_act;
    for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        size_t in = layer_sizes[l], out = layer_sizes[l + 1];
        Matrix w(out, in);
        double bound = std::sqrt(6.0 / static_cast<double>(in));
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        p.w.push_back(std::move(w));
        p.b.emplace_back(out, 0.0);
    }
    return p;
}

MlpCache mlp_forward(const MlpParams& p, const Matrix& input) {
    if (input.cols != p.in_dim())
        throw ShapeError("mlp_forward: input has " + std::to_string(input.cols) +
                         " columns, net expects " + std::to_string(p.in_dim()));

    MlpCache cache;
    cache.act.reserve(p.n_layers() + 1);
    cache.act.push_back(input);
    size_t rows = input.rows;
    for (size_t l = 0; l < p.n_layers(); ++l) {
        size_t out = p.layer_sizes[l + 1];
        Matrix z(rows, out);
        kern::gemm_nt(z.ptr(), cache.act[l].ptr(), p.w[l].ptr(), rows, out,
                      p.layer_sizes[l], p.b[l].data());
        if (l + 1 < p.n_layers()) {
            kern::relu(z.ptr(), z.ptr(), z.size());
        } else if (p.out_act == Activation::sigmoid) {
            kern::sigmoid(z.ptr(), z.ptr(), z.size());
        }
        cache.act.push_back(std::move(z));
    }
    return cache;
}

void MlpGrads::zero() {
    for (auto& m : w) m.zero();
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
}

MlpGrads make_grads(const MlpParams& p) {
    MlpGrads g;
    for (size_t l = 0; l < p.n_layers(); ++l) {
        g.w.emplace_back(p.w[l].rows, p.w[l].cols);
        g.b.emplace_back(p.b[l].size(), 0.0);
    }
    return g;
}

Matrix mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& grad_out,
                    MlpGrads& accum) {
    size_t L = p.n_layers();
    size_t rows = cache.act[0].rows;
    require_shape(grad_out, rows, p.out_dim(), "mlp_backward grad_out");

    // dz = dLoss/d(pre-activation) of the layer being processed.
    Matrix dz = grad_out;
    if (p.out_act == Activation::sigmoid)
        kern::sigmoid_bwd(dz.ptr(), cache.act[L].ptr(), dz.ptr(), dz.size());

    for (size_t l = L; l-- > 0;) {
        kern::gemm_tn_acc(accum.w[l].ptr(), dz.ptr(), cache.act[l].ptr(), rows,
                          p.layer_sizes[l + 1], p.layer_sizes[l]);
        kern::col_sum_acc(accum.b[l].data(), dz.ptr(), rows, p.layer_sizes[l + 1]);

        Matrix da(rows, p.layer_sizes[l]);
        kern::gemm_nn_acc(da.ptr(), dz.ptr(), p.w[l].ptr(), rows, p.layer_sizes[l],
                          p.layer_sizes[l + 1]);
        if (l == 0) return da;
        kern::relu_bwd(da.ptr(), cache.act[l].ptr(), da.ptr(), da.size());
        dz = std::move(da);
    }
    return {}; // unreachable; loop always returns at l == 0
}

AdamState make_adam(const MlpParams& p) {
    AdamState st;
    for (size_t l = 0; l < p.n_layers(); ++l) {
        st.m_w.emplace_back(p.w[l].rows, p.w[l].cols);
        st.v_w.emplace_back(p.w[l].rows, p.w[l].cols);
        st.m_b.emplace_back(p.b[l].size(), 0.0);
        st.v_b.emplace_back(p.b[l].size(), 0.0);
    }
    return st;
}

void adam_step(MlpParams& p, const MlpGrads& g, AdamState& st, double lr) {
    for (size_t l = 0; l < p.n_layers(); ++l) {
        if (!g.w[l].all_finite())
            throw NumericError("non-finite gradient in layer " + std::to_string(l) +
                               " weights");
        for (double v : g.b[l])
            if (!std::isfinite(v))
                throw NumericError("non-finite gradient in layer " + std::to_string(l) +
                                   " bias");
    }
    st.step += 1;
    double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (size_t l = 0; l < p.n_layers(); ++l) {
        kern::adam(p.w[l].ptr(), st.m_w[l].ptr(), st.v_w[l].ptr(), g.w[l].ptr(),
                   g.w[l].size(), lr, st.beta1, st.beta2, st.eps, bc1, bc2);
        kern::adam(p.b[l].data(), st.m_b[l].data(), st.v_b[l].data(), g.b[l].data(),
                   g.b[l].size(), lr, st.beta1, st.beta2, st.eps, bc1, bc2);
    }
}

nlohmann::json mlp_to_json(const MlpParams& p) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["layer_sizes"] = p.layer_sizes;
    j["out_act"] = activation_name(p.out_act);
    nlohmann::json layers = nlohmann::json::array();
    for (size_t l = 0; l < p.n_layers(); ++l) {
        nlohmann::json layer;
        layer["w"] = p.w[l].data; // row-major (out x in)
        layer["b"] = p.b[l];
        layers.push_back(std::move(layer));
    }
    j["layers"] = std::move(layers);
    return j;
}

MlpParams mlp_from_json(const nlohmann::json& j) {
    try {
        int version = j.at("format_version").get<int>();
        if (version != 1)
            throw DataError("unsupported mlp format_version " + std::to_string(version));
        MlpParams p;
        p.layer_sizes = j.at("layer_sizes").get<std::vector<size_t>>();
        if (p.layer_sizes.size() < 3) throw DataError("mlp file: too few layer sizes");
        p.out_act = activation_from_name(j.at("out_act").get<std::string>());
        const auto& layers = j.at("layers");
        if (layers.size() != p.layer_sizes.size() - 1)
            throw DataError("mlp file: layer count does not match layer_sizes");
        for (size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
            size_t in = p.layer_sizes[l], out = p.layer_sizes[l + 1];
            Matrix w(out, in);
            auto wv = layers[l].at("w").get<std::vector<double>>();
            if (wv.size() != out * in)
                throw DataError("mlp file: layer " + std::to_string(l) + " weight size " +
                                std::to_string(wv.size()) + " != " + std::to_string(out * in));
            w.data = std::move(wv);
            auto bv = layers[l].at("b").get<std::vector<double>>();
            if (bv.size() != out)
                throw DataError("mlp file: layer " + std::to_string(l) + " bias size mismatch");
            p.w.push_back(std::move(w));
            p.b.push_back(std::move(bv));
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt mlp payload: ") + e.what());
    }
}

} // namespace setchoice
