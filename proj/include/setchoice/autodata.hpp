#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "setchoice/market.hpp"

namespace setchoice {

// One car-year row. Price is in $1000s; hp is horsepower over weight, space
// is length times width (both in the usual BLP scaling); mpd is miles per
// dollar; ac is a 0/1 air-conditioning flag. wage and xrate are cost
// shifters for the factory's region in that year.
struct AutoRecord {
    int year = 0;
    std::string firm;
    std::string model;
    double price = 0.0;
    double hp = 0.0;
    double space = 0.0;
    double mpd = 0.0;
    double ac = 0.0;
    double share = 0.0;
    std::string region;
    double wage = 0.0;
    double xrate = 0.0;
};

struct AutoTable {
    std::vector<AutoRecord> records;
    std::vector<std::string> warnings;
};

// Columns: year,firm_id,model,price,hp,space,mpd,ac,share,region,wage,xrate.
// Unknown extra columns are ignored with a warning; a missing required
// column, a share outside (0,1), a non-positive price, or a year whose
// shares sum to 1 or more is a DataError naming the row or year.
AutoTable load_auto_csv(const std::string& path);
void write_auto_csv(const std::vector<AutoRecord>& records, const std::string& path);

struct SyntheticAutoConfig {
    size_t years = 20;
    size_t firms = 8;
    size_t models_per_firm = 5;
    // Loading of the unobserved quality on price; this is what makes price
    // endogenous in the fixture.
    double lambda = 2.2;
    double price_alpha = -0.35;
    uint64_t seed = 5;
};

// Schema-identical synthetic fixture: an unobserved quality raises both a
// car's price and its utility, and region-year wage/xrate shift price only.
// Characteristics are multiples of 1/64 so instrument sums are exact in
// floating point.
std::vector<AutoRecord> gen_synthetic_auto(const SyntheticAutoConfig& cfg);

struct AutoMarkets {
    Dataset data;                                  // x columns: price, hp, space, mpd, ac
    std::vector<std::vector<std::string>> firms;   // per market, per row
    std::vector<std::vector<std::string>> models;
    std::vector<std::vector<double>> wage;
    std::vector<std::vector<double>> xrate;
    std::vector<std::string> warnings;
};

// Groups records into one market per year, ascending.
AutoMarkets auto_to_markets(const std::vector<AutoRecord>& records);

// Fills each market's z with, per characteristic, the same-firm sum
// excluding the product itself and the rival-firm sum, then the two cost
// shifters: z = (Z1_hp..Z1_ac, Z2_hp..Z2_ac, wage, xrate). A single-firm
// market gets a warning since its rival sums are all zero.
std::vector<std::string> build_blp_instruments(AutoMarkets& am);

} // namespace setchoice
