#include "setchoice/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "setchoice/common.hpp"

namespace setchoice {

std::vector<double> ols(Matrix a, std::vector<double> b,
                        const std::vector<std::string>* col_names) {
    size_t n = a.rows, p = a.cols;
    auto col_label = [&](size_t k) {
        return col_names && k < col_names->size() ? "'" + (*col_names)[k] + "'"
                                                  : std::to_string(k);
    };
    if (b.size() != n)
        throw ShapeError("least squares: " + std::to_string(n) + " rows vs " +
                         std::to_string(b.size()) + " targets");
    if (p == 0) throw ShapeError("least squares: empty design");
    if (n < p)
        throw ShapeError("least squares: " + std::to_string(n) + " rows for " +
                         std::to_string(p) + " columns");

    double anorm = 0.0;
    for (double v : a.data) anorm = std::max(anorm, std::abs(v));
    double tol = 1e-12 * std::max(anorm, 1.0) * static_cast<double>(n);

    std::vector<double> rdiag(p);
    for (size_t k = 0; k < p; ++k) {
        double norm = 0.0;
        for (size_t i = k; i < n; ++i) norm += a(i, k) * a(i, k);
        norm = std::sqrt(norm);
        if (norm <= tol)
            throw NumericError("design column " + col_label(k) +
                               " is zero or collinear with earlier columns");
        double akk = a(k, k);
        double alpha = akk >= 0.0 ? -norm : norm;
        double vk = akk - alpha;
        double vtv = vk * vk;
        for (size_t i = k + 1; i < n; ++i) vtv += a(i, k) * a(i, k);
        a(k, k) = vk;
        double inv = 2.0 / vtv;
        for (size_t c = k + 1; c < p; ++c) {
            double dot = 0.0;
            for (size_t i = k; i < n; ++i) dot += a(i, k) * a(i, c);
            dot *= inv;
            for (size_t i = k; i < n; ++i) a(i, c) -= dot * a(i, k);
        }
        double dotb = 0.0;
        for (size_t i = k; i < n; ++i) dotb += a(i, k) * b[i];
        dotb *= inv;
        for (size_t i = k; i < n; ++i) b[i] -= dotb * a(i, k);
        rdiag[k] = alpha;
    }

    std::vector<double> coef(p);
    for (size_t k = p; k-- > 0;) {
        double s = b[k];
        for (size_t c = k + 1; c < p; ++c) s -= a(k, c) * coef[c];
        coef[k] = s / rdiag[k];
    }
    for (double c : coef)
        if (!std::isfinite(c)) throw NumericError("least squares produced non-finite coefficients");
    return coef;
}

double r2_score(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.size() != yhat.size() || y.empty())
        throw ShapeError("r2_score: mismatched or empty inputs");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double sse = 0.0, sst = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        sst += (y[i] - mean) * (y[i] - mean);
    }
    if (sst == 0.0) return sse == 0.0 ? 1.0 : 0.0;
    return 1.0 - sse / sst;
}

} // namespace setchoice
