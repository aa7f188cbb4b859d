#include "setchoice/deepset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "setchoice/fsio.hpp"
#include "setchoice/kernels.hpp"

namespace setchoice {

namespace {

std::vector<size_t> phi_sizes(size_t k_in, const DeepSetArch& arch) {
    std::vector<size_t> s;
    s.push_back(k_in);
    s.insert(s.end(), arch.phi_hidden.begin(), arch.phi_hidden.end());
    s.push_back(arch.embed_dim);
    return s;
}

std::vector<size_t> rho_sizes(const DeepSetArch& arch) {
    std::vector<size_t> s;
    s.push_back(arch.embed_dim);
    s.insert(s.end(), arch.rho_hidden.begin(), arch.rho_hidden.end());
    s.push_back(1);
    return s;
}

void require_k_in(const DeepSetModel& m, const Market& mk) {
    if (mk.x.cols != m.k_in)
        throw ShapeError("market " + mk.id + " has " + std::to_string(mk.x.cols) +
                         " feature columns, model expects " + std::to_string(m.k_in));
}

} // namespace

DeepSetModel init_deepset(size_t k_in, const DeepSetArch& arch, uint64_t seed) {
    if (k_in == 0) throw ConfigError("deep set needs at least one input column");
    if (arch.embed_dim == 0) throw ConfigError("embed_dim must be positive");
    DeepSetModel m;
    m.k_in = k_in;
    m.embed_dim = arch.embed_dim;
    RngStream base(seed, 0xd5);
    RngStream r1 = base.child(1), r2 = base.child(2), r3 = base.child(3);
    m.phi1 = init_params(phi_sizes(k_in, arch), Activation::identity, r1);
    m.phi2 = init_params(phi_sizes(k_in, arch), Activation::identity, r2);
    m.rho = init_params(rho_sizes(arch), arch.out_act, r3);
    // The pooled branch sums phi2 over every competitor, so its scale grows
    // with market size and a dense start can saturate rho before the first
    // step. Start the branch silent; its output layer picks up gradient
    // immediately and the layers below unfreeze as soon as it is nonzero.
    std::fill(m.phi2.w.back().data.begin(), m.phi2.w.back().data.end(), 0.0);
    std::fill(m.phi2.b.back().begin(), m.phi2.b.back().end(), 0.0);
    // Temper rho's readout the same way: a full-strength readout can start
    // deep in the sigmoid tail on some draws, and the violent first steps
    // that follow leave hidden units dead. Predictions start near the
    // activation midpoint and the readout rescales within a few steps.
    for (double& w : m.rho.w.back().data) w *= 0.1;
    return m;
}

std::vector<size_t> canonical_order(const Matrix& x) {
    std::vector<size_t> order(x.rows);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const double* ra = x.row(a);
        const double* rb = x.row(b);
        for (size_t c = 0; c < x.cols; ++c) {
            if (ra[c] < rb[c]) return true;
            if (ra[c] > rb[c]) return false;
        }
        return a < b;
    });
    return order;
}

BatchPlan build_plan(const std::vector<const Market*>& markets) {
    if (markets.empty()) throw ConfigError("empty market list");
    size_t k_in = markets.front()->x.cols;
    size_t n = 0;
    for (const Market* m : markets) {
        if (m->x.cols != k_in)
            throw ShapeError("market " + m->id + ": inconsistent feature width in batch");
        n += m->J();
    }
    BatchPlan plan;
    plan.x = Matrix(n, k_in);
    plan.offset.reserve(markets.size() + 1);
    plan.offset.push_back(0);
    plan.canon.reserve(markets.size());
    size_t r = 0;
    for (const Market* m : markets) {
        std::copy(m->x.data.begin(), m->x.data.end(), plan.x.row(r));
        if (!m->y.empty()) plan.y.insert(plan.y.end(), m->y.begin(), m->y.end());
        auto local = canonical_order(m->x);
        for (size_t& idx : local) idx += r;
        plan.canon.push_back(std::move(local));
        r += m->J();
        plan.offset.push_back(r);
    }
    if (!plan.y.empty() && plan.y.size() != n)
        throw DataError("batch mixes markets with and without observed shares");
    return plan;
}

BatchForward deepset_forward(const DeepSetModel& m, const BatchPlan& plan) {
    BatchForward f;
    f.phi2_cache = std::make_shared<MlpCache>(mlp_forward(m.phi2, plan.x));
    const Matrix& phi2_out = f.phi2_cache->output();

    size_t T = plan.n_markets();
    f.pooled = Matrix(T, m.embed_dim);
    for (size_t t = 0; t < T; ++t) {
        double* dst = f.pooled.row(t);
        for (size_t idx : plan.canon[t]) kern::axpy(dst, 1.0, phi2_out.row(idx), m.embed_dim);
    }

    f.phi1_cache = mlp_forward(m.phi1, plan.x);
    const Matrix& phi1_out = f.phi1_cache.output();

    Matrix embed(plan.n_rows(), m.embed_dim);
    for (size_t t = 0; t < T; ++t) {
        const double* pool = f.pooled.row(t);
        for (size_t r = plan.offset[t]; r < plan.offset[t + 1]; ++r) {
            double* e = embed.row(r);
            const double* own1 = phi1_out.row(r);
            const double* own2 = phi2_out.row(r);
            for (size_t c = 0; c < m.embed_dim; ++c) e[c] = own1[c] + (pool[c] - own2[c]);
        }
    }
    f.rho_cache = mlp_forward(m.rho, embed);
    return f;
}

BatchForward deepset_forward_alt(const DeepSetModel& m, const BatchPlan& plan,
                                 const BatchForward& base, const Matrix& alt_rows) {
    require_shape(alt_rows, plan.n_rows(), m.k_in, "deepset_forward_alt rows");
    BatchForward f;
    f.phi2_cache = base.phi2_cache;
    f.pooled = base.pooled;
    const Matrix& phi2_out = f.phi2_cache->output();

    f.phi1_cache = mlp_forward(m.phi1, alt_rows);
    const Matrix& phi1_out = f.phi1_cache.output();

    Matrix embed(plan.n_rows(), m.embed_dim);
    for (size_t t = 0; t < plan.n_markets(); ++t) {
        const double* pool = f.pooled.row(t);
        for (size_t r = plan.offset[t]; r < plan.offset[t + 1]; ++r) {
            double* e = embed.row(r);
            const double* own1 = phi1_out.row(r);
            const double* own2 = phi2_out.row(r);
            for (size_t c = 0; c < m.embed_dim; ++c) e[c] = own1[c] + (pool[c] - own2[c]);
        }
    }
    f.rho_cache = mlp_forward(m.rho, embed);
    return f;
}

void DeepSetGrads::zero() {
    phi1.zero();
    phi2.zero();
    rho.zero();
}

DeepSetGrads make_deepset_grads(const DeepSetModel& m) {
    return {make_grads(m.phi1), make_grads(m.phi2), make_grads(m.rho)};
}

void deepset_backward(const DeepSetModel& m, const BatchPlan& plan, const BatchForward& fwd,
                      const std::vector<double>& dpred, DeepSetGrads& g) {
    size_t n = plan.n_rows();
    if (dpred.size() != n) throw ShapeError("deepset_backward: dpred length mismatch");

    Matrix dout(n, 1);
    std::copy(dpred.begin(), dpred.end(), dout.ptr());
    Matrix dembed = mlp_backward(m.rho, fwd.rho_cache, dout, g.rho);

    mlp_backward(m.phi1, fwd.phi1_cache, dembed, g.phi1);

    // Row r's embedding contains sum_{k != r} phi2(x_k) within its market, so
    // phi2's output at row k receives the market total gradient minus its own.
    Matrix dphi2(n, m.embed_dim);
    std::vector<double> total(m.embed_dim);
    for (size_t t = 0; t < plan.n_markets(); ++t) {
        std::fill(total.begin(), total.end(), 0.0);
        for (size_t r = plan.offset[t]; r < plan.offset[t + 1]; ++r)
            kern::axpy(total.data(), 1.0, dembed.row(r), m.embed_dim);
        for (size_t r = plan.offset[t]; r < plan.offset[t + 1]; ++r) {
            const double* de = dembed.row(r);
            double* out = dphi2.row(r);
            for (size_t c = 0; c < m.embed_dim; ++c) out[c] = total[c] - de[c];
        }
    }
    mlp_backward(m.phi2, *fwd.phi2_cache, dphi2, g.phi2);
}

DeepSetAdam make_deepset_adam(const DeepSetModel& m) {
    return {make_adam(m.phi1), make_adam(m.phi2), make_adam(m.rho)};
}

void deepset_adam_step(DeepSetModel& m, const DeepSetGrads& g, DeepSetAdam& st, double lr) {
    adam_step(m.phi1, g.phi1, st.phi1, lr);
    adam_step(m.phi2, g.phi2, st.phi2, lr);
    adam_step(m.rho, g.rho, st.rho, lr);
}

double predict_share(const DeepSetModel& m, const Market& mk, size_t j) {
    require_k_in(m, mk);
    if (j >= mk.J()) throw ShapeError("product index " + std::to_string(j) + " out of range");

    MlpCache phi2_c = mlp_forward(m.phi2, mk.x);
    auto order = canonical_order(mk.x);

    Matrix embed(1, m.embed_dim);
    for (size_t idx : order)
        if (idx != j) kern::axpy(embed.ptr(), 1.0, phi2_c.output().row(idx), m.embed_dim);

    Matrix own(1, m.k_in);
    std::copy(mk.x.row(j), mk.x.row(j) + m.k_in, own.ptr());
    MlpCache phi1_c = mlp_forward(m.phi1, own);
    kern::axpy(embed.ptr(), 1.0, phi1_c.output().ptr(), m.embed_dim);

    return mlp_forward(m.rho, embed).output()(0, 0);
}

std::vector<double> predict_market(const DeepSetModel& m, const Market& mk) {
    require_k_in(m, mk);
    BatchPlan plan = build_plan({&mk});
    BatchForward f = deepset_forward(m, plan);
    const Matrix& p = f.preds();
    return {p.data.begin(), p.data.end()};
}

std::vector<double> predict_own_shift(const DeepSetModel& m, const Market& mk,
                                      const PriceShift& shift) {
    require_k_in(m, mk);
    BatchPlan plan = build_plan({&mk});
    BatchForward base = deepset_forward(m, plan);
    Matrix shifted = plan.x;
    for (size_t r = 0; r < shifted.rows; ++r)
        shifted(r, kPriceCol) = shift.apply(shifted(r, kPriceCol));
    BatchForward alt = deepset_forward_alt(m, plan, base, shifted);
    const Matrix& p = alt.preds();
    return {p.data.begin(), p.data.end()};
}

std::vector<std::string> loss_trend_warnings(const std::vector<double>& history) {
    std::vector<std::string> w;
    size_t bad = 0, first = 0;
    for (size_t e = 50; e < history.size(); ++e) {
        if (history[e] > history[e - 50] * 1.001) {
            if (bad == 0) first = e;
            ++bad;
        }
    }
    if (bad > 0)
        w.push_back("loss rose over " + std::to_string(bad) + " of " +
                    std::to_string(history.size() - 50) + " 50-epoch windows (first at epoch " +
                    std::to_string(first) + ")");
    return w;
}

TrainResult train_deepset(DeepSetModel& m, const std::vector<const Market*>& markets,
                          const TrainHyper& hyper) {
    if (markets.empty()) throw ConfigError("train_deepset: no markets");
    if (hyper.epochs == 0) throw ConfigError("train_deepset: epochs must be positive");
    for (const Market* mk : markets) {
        require_k_in(m, *mk);
        if (mk->y.size() != mk->J())
            throw DataError("market " + mk->id + " lacks observed shares for training");
    }

    // Batch partition is fixed up front (market order shuffled once by seed),
    // so every epoch replays the identical step sequence.
    std::vector<const Market*> order = markets;
    size_t batch = hyper.batch_markets == 0 ? markets.size() : hyper.batch_markets;
    batch = std::min(batch, markets.size());
    if (hyper.batch_markets > 0) {
        RngStream rng(hyper.seed, 0xba7c);
        for (size_t i = order.size(); i-- > 1;) {
            size_t j = static_cast<size_t>(rng.next_u64() % (i + 1));
            std::swap(order[i], order[j]);
        }
    }
    std::vector<BatchPlan> plans;
    for (size_t b = 0; b < order.size(); b += batch) {
        size_t e = std::min(b + batch, order.size());
        plans.push_back(build_plan(std::vector<const Market*>(
            order.begin() + static_cast<long>(b), order.begin() + static_cast<long>(e))));
    }

    size_t n_total = 0;
    for (const auto& p : plans) n_total += p.n_rows();

    DeepSetGrads grads = make_deepset_grads(m);
    DeepSetAdam adam = make_deepset_adam(m);

    TrainResult res;
    res.n_rows = n_total;
    res.loss_history.reserve(hyper.epochs);
    std::vector<double> dpred;
    for (size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        double sse = 0.0;
        for (const BatchPlan& plan : plans) {
            BatchForward f = deepset_forward(m, plan);
            const Matrix& preds = f.preds();
            size_t nb = plan.n_rows();
            dpred.resize(nb);
            double inv = 2.0 / static_cast<double>(nb);
            for (size_t r = 0; r < nb; ++r) {
                double d = preds(r, 0) - plan.y[r];
                sse += d * d;
                dpred[r] = inv * d;
            }
            grads.zero();
            deepset_backward(m, plan, f, dpred, grads);
            deepset_adam_step(m, grads, adam, hyper.lr);
        }
        double loss = sse / static_cast<double>(n_total);
        if (!std::isfinite(loss))
            throw NumericError("training diverged at epoch " + std::to_string(epoch));
        res.loss_history.push_back(loss);
    }
    res.warnings = loss_trend_warnings(res.loss_history);
    return res;
}

nlohmann::json deepset_to_json(const DeepSetModel& m) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["kind"] = "deepset";
    j["k_in"] = m.k_in;
    j["embed_dim"] = m.embed_dim;
    j["phi1"] = mlp_to_json(m.phi1);
    j["phi2"] = mlp_to_json(m.phi2);
    j["rho"] = mlp_to_json(m.rho);
    return j;
}

DeepSetModel deepset_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != 1)
            throw DataError("unsupported deepset format_version");
        if (j.at("kind").get<std::string>() != "deepset")
            throw DataError("model file is not a deepset model");
        DeepSetModel m;
        m.k_in = j.at("k_in").get<size_t>();
        m.embed_dim = j.at("embed_dim").get<size_t>();
        m.phi1 = mlp_from_json(j.at("phi1"));
        m.phi2 = mlp_from_json(j.at("phi2"));
        m.rho = mlp_from_json(j.at("rho"));
        if (m.phi1.in_dim() != m.k_in || m.phi2.in_dim() != m.k_in)
            throw DataError("deepset file: phi input width disagrees with k_in header");
        if (m.phi1.out_dim() != m.embed_dim || m.phi2.out_dim() != m.embed_dim ||
            m.rho.in_dim() != m.embed_dim)
            throw DataError("deepset file: embed_dim disagrees between nets");
        if (m.rho.out_dim() != 1) throw DataError("deepset file: rho must have one output");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt model file: ") + e.what());
    }
}

void save_deepset(const DeepSetModel& m, const std::string& path) {
    write_file_atomic(path, deepset_to_json(m).dump());
}

DeepSetModel load_deepset(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt model file " + path + ": " + e.what());
    }
    return deepset_from_json(j);
}

} // namespace setchoice
