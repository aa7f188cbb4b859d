#include "setchoice/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "setchoice/kernels.hpp"
#include "setchoice/linalg.hpp"
#include "setchoice/rng.hpp"
#include "setchoice/simgen.hpp"

namespace setchoice {

namespace {

size_t checked_rows(const std::vector<const Market*>& markets, const char* who) {
    if (markets.empty()) throw DataError(std::string(who) + ": no markets");
    size_t cols = markets[0]->x.cols;
    size_t n = 0;
    for (const Market* m : markets) {
        if (m->x.cols != cols)
            throw ShapeError(std::string(who) + ": market " + m->id + " has " +
                             std::to_string(m->x.cols) + " feature columns, expected " +
                             std::to_string(cols));
        if (m->y.size() != m->J())
            throw DataError(std::string(who) + ": market " + m->id + " lacks observed shares");
        n += m->J();
    }
    return n;
}

// Row-stable softmax over one draw's utilities with an outside option at 0.
// Masked entries (avail==0) get share 0 and are excluded from the denominator.
void draw_softmax(double* s, const double* u, size_t J) {
    double m = 0.0;
    for (size_t j = 0; j < J; ++j) m = std::max(m, u[j]);
    double denom = std::exp(-m);
    for (size_t j = 0; j < J; ++j) {
        s[j] = std::exp(u[j] - m);
        denom += s[j];
    }
    double inv = 1.0 / denom;
    for (size_t j = 0; j < J; ++j) s[j] *= inv;
}

} // namespace

std::vector<double> MnlFit::predict(const Matrix& x) const {
    return mnl_choice_probs(x, alpha, beta);
}

Predictor MnlFit::predictor() const {
    MnlFit copy = *this;
    return [copy](const Market& mk) { return copy.predict(mk.x); };
}

MnlFit fit_mnl(const std::vector<const Market*>& train) {
    size_t n = checked_rows(train, "fit_mnl");
    size_t p = train[0]->x.cols;
    Matrix a(n, p);
    std::vector<double> b(n);
    size_t r = 0;
    for (const Market* m : train) {
        double s0 = 1.0;
        for (double s : m->y) s0 -= s;
        if (!(s0 > 0.0))
            throw DataError("fit_mnl: market " + m->id + " has outside share " +
                            std::to_string(s0) + "; inversion needs s0 > 0");
        for (size_t j = 0; j < m->J(); ++j) {
            if (!(m->y[j] > 0.0))
                throw DataError("fit_mnl: market " + m->id + ", product " + std::to_string(j) +
                                " has non-positive share");
            std::copy(m->x.row(j), m->x.row(j) + p, a.row(r));
            b[r] = std::log(m->y[j] / s0);
            ++r;
        }
    }
    std::vector<double> coef;
    try {
        coef = ols(std::move(a), std::move(b));
    } catch (const NumericError& e) {
        throw NumericError(std::string("fit_mnl: ") + e.what());
    }
    MnlFit fit;
    fit.alpha = coef[0];
    fit.beta.assign(coef.begin() + 1, coef.end());
    return fit;
}

Matrix RclFit::coef_matrix() const {
    size_t p = means.size();
    require_shape(zeta, zeta.rows, p, "rcl frozen draws");
    Matrix c(zeta.rows, p);
    for (size_t col = 0; col < p; ++col) {
        double sd = std::exp(log_sds[col]);
        for (size_t i = 0; i < zeta.rows; ++i) c(i, col) = means[col] + sd * zeta(i, col);
    }
    return c;
}

std::vector<double> RclFit::predict(const Matrix& x) const {
    return rcl_mix_shares(x, coef_matrix(), Dgp::rcl);
}

Predictor RclFit::predictor() const {
    auto coefs = std::make_shared<Matrix>(coef_matrix());
    return [coefs](const Market& mk) { return rcl_mix_shares(mk.x, *coefs, Dgp::rcl); };
}

double rcl_sse(const RclFit& fit, const std::vector<const Market*>& markets) {
    size_t n = checked_rows(markets, "rcl_sse");
    Matrix coefs = fit.coef_matrix();
    double sse = 0.0;
    for (const Market* m : markets) {
        std::vector<double> s = rcl_mix_shares(m->x, coefs, Dgp::rcl);
        for (size_t j = 0; j < m->J(); ++j) sse += (s[j] - m->y[j]) * (s[j] - m->y[j]);
    }
    return sse / static_cast<double>(n);
}

RclFit fit_rcl(const std::vector<const Market*>& train, const RclFitConfig& cfg) {
    if (cfg.R < 100) throw ConfigError("fit_rcl: need at least 100 simulation draws");
    if (cfg.epochs == 0) throw ConfigError("fit_rcl: need at least one epoch");
    size_t n_rows = checked_rows(train, "fit_rcl");
    size_t p = train[0]->x.cols;
    size_t R = cfg.R;

    RclFit fit;
    MnlFit warm = fit_mnl(train);
    fit.means.resize(p);
    fit.means[0] = warm.alpha;
    std::copy(warm.beta.begin(), warm.beta.end(), fit.means.begin() + 1);
    fit.log_sds.assign(p, std::log(0.5));
    fit.zeta = Matrix(R, p);
    RngStream zr(cfg.seed, 0x2c1);
    for (double& v : fit.zeta.data) v = zr.normal();

    std::vector<double> m_m(p, 0.0), v_m(p, 0.0), m_s(p, 0.0), v_s(p, 0.0);
    std::vector<double> grad_m(p), grad_s(p), sd(p);
    std::vector<double> best_means = fit.means, best_logsds = fit.log_sds;
    double best_loss = std::numeric_limits<double>::infinity();
    size_t best_epoch = 0;

    size_t max_j = 0;
    for (const Market* m : train) max_j = std::max(max_j, m->J());
    Matrix coefs(R, p), u(R, max_j), g(R, max_j), t(R, p);
    std::vector<double> shat(max_j), d(max_j), colg(max_j);

    for (size_t e = 0; e < cfg.epochs; ++e) {
        for (size_t col = 0; col < p; ++col) {
            sd[col] = std::exp(fit.log_sds[col]);
            for (size_t i = 0; i < R; ++i)
                coefs(i, col) = fit.means[col] + sd[col] * fit.zeta(i, col);
        }
        std::fill(grad_m.begin(), grad_m.end(), 0.0);
        std::fill(grad_s.begin(), grad_s.end(), 0.0);
        t.zero();
        double loss = 0.0;

        for (const Market* mk : train) {
            // u and g are used as contiguous R x J blocks inside the backing
            // storage sized for the widest market.
            size_t J = mk->J();
            kern::gemm_nt(u.ptr(), coefs.ptr(), mk->x.ptr(), R, J, p, nullptr);
            std::fill(shat.begin(), shat.begin() + J, 0.0);
            for (size_t i = 0; i < R; ++i) {
                double* gi = g.ptr() + i * J;
                draw_softmax(gi, u.ptr() + i * J, J);
                for (size_t j = 0; j < J; ++j) shat[j] += gi[j];
            }
            double inv_r = 1.0 / static_cast<double>(R);
            for (size_t j = 0; j < J; ++j) {
                shat[j] *= inv_r;
                double err = shat[j] - mk->y[j];
                loss += err * err;
                d[j] = 2.0 * err / static_cast<double>(n_rows);
            }
            // g currently holds the per-draw shares s_ij; turn it into the
            // utility gradient s_ij * (d_j - sum_l d_l s_il) / R in place.
            std::fill(colg.begin(), colg.begin() + J, 0.0);
            for (size_t i = 0; i < R; ++i) {
                double* gi = g.ptr() + i * J;
                double ci = 0.0;
                for (size_t j = 0; j < J; ++j) ci += d[j] * gi[j];
                for (size_t j = 0; j < J; ++j) {
                    gi[j] *= (d[j] - ci) * inv_r;
                    colg[j] += gi[j];
                }
            }
            for (size_t j = 0; j < J; ++j)
                for (size_t col = 0; col < p; ++col) grad_m[col] += colg[j] * mk->x(j, col);
            kern::gemm_nn_acc(t.ptr(), g.ptr(), mk->x.ptr(), R, p, J);
        }
        for (size_t col = 0; col < p; ++col) {
            double acc = 0.0;
            for (size_t i = 0; i < R; ++i) acc += fit.zeta(i, col) * t(i, col);
            grad_s[col] = sd[col] * acc;
        }

        loss /= static_cast<double>(n_rows);
        if (!std::isfinite(loss))
            throw NumericError("fit_rcl: loss diverged at epoch " + std::to_string(e));
        fit.loss_history.push_back(loss);
        if (loss < best_loss) {
            best_loss = loss;
            best_means = fit.means;
            best_logsds = fit.log_sds;
            best_epoch = e;
        }

        double step = static_cast<double>(e + 1);
        double bc1 = 1.0 - std::pow(0.9, step);
        double bc2 = 1.0 - std::pow(0.999, step);
        kern::adam(fit.means.data(), m_m.data(), v_m.data(), grad_m.data(), p, cfg.lr, 0.9,
                   0.999, 1e-8, bc1, bc2);
        kern::adam(fit.log_sds.data(), m_s.data(), v_s.data(), grad_s.data(), p, cfg.lr, 0.9,
                   0.999, 1e-8, bc1, bc2);
    }

    fit.means = best_means;
    fit.log_sds = best_logsds;
    if (fit.loss_history.back() > best_loss * 1.05)
        fit.warnings.push_back("loss stopped improving at epoch " + std::to_string(best_epoch) +
                               " of " + std::to_string(cfg.epochs) +
                               "; returning the best iterate");
    return fit;
}

std::vector<double> StackedNpModel::predict(const Market& mk) const {
    if (mk.J() != J)
        throw ShapeError("stacked model was trained for " + std::to_string(J) +
                         " products; market " + mk.id + " has " + std::to_string(mk.J()));
    require_shape(mk.x, J, k_cols, "stacked model input");
    Matrix in(1, J * k_cols);
    std::copy(mk.x.data.begin(), mk.x.data.end(), in.data.begin());
    MlpCache cache = mlp_forward(mlp, in);
    const Matrix& out = cache.output();
    return std::vector<double>(out.data.begin(), out.data.end());
}

Predictor StackedNpModel::predictor() const {
    auto self = std::make_shared<StackedNpModel>(*this);
    return [self](const Market& mk) { return self->predict(mk); };
}

namespace {

MlpParams train_stacked_cell(const std::vector<const Market*>& markets, size_t J, size_t cols,
                             size_t layers, size_t nodes, double lr, size_t epochs,
                             RngStream rng) {
    std::vector<size_t> sizes;
    sizes.push_back(J * cols);
    for (size_t l = 0; l < layers; ++l) sizes.push_back(nodes);
    sizes.push_back(J);
    MlpParams p = init_params(sizes, Activation::sigmoid, rng);
    AdamState st = make_adam(p);
    MlpGrads grads = make_grads(p);

    Matrix in(1, J * cols);
    Matrix dpred(1, J);
    for (size_t e = 0; e < epochs; ++e) {
        std::vector<size_t> order = shuffled_indices(markets.size(), rng);
        for (size_t idx : order) {
            const Market* mk = markets[idx];
            std::copy(mk->x.data.begin(), mk->x.data.end(), in.data.begin());
            MlpCache cache = mlp_forward(p, in);
            const double* pred = cache.output().ptr();
            for (size_t j = 0; j < J; ++j)
                dpred(0, j) = 2.0 * (pred[j] - mk->y[j]) / static_cast<double>(J);
            grads.zero();
            mlp_backward(p, cache, dpred, grads);
            adam_step(p, grads, st, lr);
        }
    }
    return p;
}

} // namespace

StackedNpModel fit_stacked_np(const std::vector<const Market*>& train,
                              const StackedNpGrid& grid) {
    checked_rows(train, "fit_stacked_np");
    size_t J = train[0]->J();
    size_t cols = train[0]->x.cols;
    for (const Market* m : train)
        if (m->J() != J)
            throw ShapeError("fit_stacked_np: needs a fixed product count, but market " +
                             m->id + " has " + std::to_string(m->J()) + " products vs " +
                             std::to_string(J));
    if (grid.layers.empty() || grid.nodes.empty() || grid.lrs.empty() || grid.epochs.empty())
        throw ConfigError("fit_stacked_np: empty hyperparameter grid");

    std::vector<std::vector<size_t>> folds =
        kfold_indices(train.size(), grid.folds, grid.seed);

    StackedNpModel best;
    best.cv_mse = std::numeric_limits<double>::infinity();
    RngStream root(grid.seed, 0x57ac);
    size_t cell = 0;
    for (size_t layers : grid.layers)
        for (size_t nodes : grid.nodes)
            for (double lr : grid.lrs)
                for (size_t epochs : grid.epochs) {
                    ++cell;
                    double mse_sum = 0.0;
                    for (size_t f = 0; f < folds.size(); ++f) {
                        std::vector<const Market*> fit_set, held;
                        for (size_t g = 0; g < folds.size(); ++g)
                            for (size_t idx : folds[g])
                                (g == f ? held : fit_set).push_back(train[idx]);
                        MlpParams p = train_stacked_cell(fit_set, J, cols, layers, nodes, lr,
                                                         epochs, root.child(cell).child(f));
                        StackedNpModel tmp;
                        tmp.mlp = std::move(p);
                        tmp.J = J;
                        tmp.k_cols = cols;
                        mse_sum += mean_sq_share_error(tmp.predictor(), held);
                    }
                    double cv = mse_sum / static_cast<double>(folds.size());
                    if (cv < best.cv_mse) {
                        best.cv_mse = cv;
                        best.layers = layers;
                        best.nodes = nodes;
                        best.lr = lr;
                        best.epochs = epochs;
                    }
                }

    best.J = J;
    best.k_cols = cols;
    best.mlp = train_stacked_cell(train, J, cols, best.layers, best.nodes, best.lr,
                                  best.epochs, root.child(0));
    return best;
}

Predictor MeanPredictor::predictor() const {
    double m = mean;
    return [m](const Market& mk) { return std::vector<double>(mk.J(), m); };
}

MeanPredictor fit_mean(const std::vector<const Market*>& train) {
    size_t n = checked_rows(train, "fit_mean");
    double sum = 0.0;
    for (const Market* m : train)
        for (double s : m->y) sum += s;
    return MeanPredictor{sum / static_cast<double>(n)};
}

double mean_sq_share_error(const Predictor& pred, const std::vector<const Market*>& markets) {
    size_t n = checked_rows(markets, "mean_sq_share_error");
    double sse = 0.0;
    for (const Market* m : markets) {
        std::vector<double> s = pred(*m);
        if (s.size() != m->J())
            throw ShapeError("predictor returned " + std::to_string(s.size()) +
                             " shares for market " + m->id + " with " +
                             std::to_string(m->J()) + " products");
        for (size_t j = 0; j < m->J(); ++j) sse += (s[j] - m->y[j]) * (s[j] - m->y[j]);
    }
    return sse / static_cast<double>(n);
}

nlohmann::json mnl_to_json(const MnlFit& fit) {
    return {{"estimator", "mnl"}, {"alpha", fit.alpha}, {"beta", fit.beta}};
}

MnlFit mnl_from_json(const nlohmann::json& j) {
    try {
        if (j.at("estimator") != "mnl") throw DataError("not an mnl fit");
        MnlFit fit;
        fit.alpha = j.at("alpha").get<double>();
        fit.beta = j.at("beta").get<std::vector<double>>();
        return fit;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt mnl fit: ") + e.what());
    }
}

nlohmann::json rcl_to_json(const RclFit& fit) {
    return {{"estimator", "rcl"},
            {"means", fit.means},
            {"log_sds", fit.log_sds},
            {"zeta_rows", fit.zeta.rows},
            {"zeta", fit.zeta.data}};
}

RclFit rcl_from_json(const nlohmann::json& j) {
    try {
        if (j.at("estimator") != "rcl") throw DataError("not an rcl fit");
        RclFit fit;
        fit.means = j.at("means").get<std::vector<double>>();
        fit.log_sds = j.at("log_sds").get<std::vector<double>>();
        size_t rows = j.at("zeta_rows").get<size_t>();
        std::vector<double> z = j.at("zeta").get<std::vector<double>>();
        if (fit.log_sds.size() != fit.means.size() || fit.means.empty() ||
            z.size() != rows * fit.means.size())
            throw DataError("rcl fit has inconsistent dimensions");
        fit.zeta = Matrix(rows, fit.means.size());
        fit.zeta.data = std::move(z);
        return fit;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt rcl fit: ") + e.what());
    }
}

nlohmann::json stacked_np_to_json(const StackedNpModel& m) {
    return {{"estimator", "stacked_np"}, {"J", m.J},          {"k_cols", m.k_cols},
            {"layers", m.layers},        {"nodes", m.nodes},  {"lr", m.lr},
            {"epochs", m.epochs},        {"cv_mse", m.cv_mse}, {"mlp", mlp_to_json(m.mlp)}};
}

StackedNpModel stacked_np_from_json(const nlohmann::json& j) {
    try {
        if (j.at("estimator") != "stacked_np") throw DataError("not a stacked_np fit");
        StackedNpModel m;
        m.J = j.at("J").get<size_t>();
        m.k_cols = j.at("k_cols").get<size_t>();
        m.layers = j.at("layers").get<size_t>();
        m.nodes = j.at("nodes").get<size_t>();
        m.lr = j.at("lr").get<double>();
        m.epochs = j.at("epochs").get<size_t>();
        m.cv_mse = j.at("cv_mse").get<double>();
        m.mlp = mlp_from_json(j.at("mlp"));
        if (m.mlp.in_dim() != m.J * m.k_cols || m.mlp.out_dim() != m.J)
            throw DataError("stacked_np fit dimensions do not match its net");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt stacked_np fit: ") + e.what());
    }
}

nlohmann::json mean_to_json(const MeanPredictor& m) {
    return {{"estimator", "mean"}, {"mean", m.mean}};
}

MeanPredictor mean_from_json(const nlohmann::json& j) {
    try {
        if (j.at("estimator") != "mean") throw DataError("not a mean fit");
        return MeanPredictor{j.at("mean").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt mean fit: ") + e.what());
    }
}

} // namespace setchoice
