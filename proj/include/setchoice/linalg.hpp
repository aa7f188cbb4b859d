#pragma once

#include <vector>

#include "setchoice/matrix.hpp"

namespace setchoice {

// Least squares min ||a*coef - b|| via Householder QR. Throws NumericError
// naming the offending column when the design is rank deficient; pass column
// names to get them in the message instead of indices.
std::vector<double> ols(Matrix a, std::vector<double> b,
                        const std::vector<std::string>* col_names = nullptr);

// 1 - SSE/SST with SST taken around the mean of y. Degenerate y (zero
// variance) gives 1 for a perfect fit and 0 otherwise.
double r2_score(const std::vector<double>& y, const std::vector<double>& yhat);

} // namespace setchoice
