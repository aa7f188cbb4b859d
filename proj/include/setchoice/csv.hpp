#pragma once

#include <string>
#include <vector>

#include "setchoice/market.hpp"

namespace setchoice {

// Shortest decimal string that parses back to the same double bit pattern.
std::string format_double(double v);

// Strict full-token parse; `where` names the cell in the error message.
double parse_double(const std::string& s, const std::string& where);

// Minimal CSV: comma-separated, one header row, no quoting (values must not
// contain commas or newlines).
std::vector<std::vector<std::string>> read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Dataset table: market_id, product_id, price, x1..xK, share, [mu],
// [z1..zm]. Markets are rebuilt grouping consecutive market_id runs.
void write_dataset_csv(const Dataset& ds, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

} // namespace setchoice
