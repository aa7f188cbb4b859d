#include "setchoice/autodata.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>

#include "setchoice/csv.hpp"
#include "setchoice/rng.hpp"

namespace setchoice {

namespace {

const std::array<const char*, 12> kAutoColumns = {
    "year", "firm_id", "model",  "price",  "hp",   "space",
    "mpd",  "ac",      "share",  "region", "wage", "xrate"};

int parse_year(const std::string& s, const std::string& where) {
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError("cannot parse '" + s + "' as a year (" + where + ")");
    return v;
}

void check_plain_text(const std::string& s, const std::string& what) {
    if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
        throw DataError(what + " '" + s + "' contains a comma or newline");
}

} // namespace

AutoTable load_auto_csv(const std::string& path) {
    std::vector<std::vector<std::string>> rows = read_csv(path);
    const std::vector<std::string>& header = rows.front();

    AutoTable out;
    std::array<int, 12> col;
    col.fill(-1);
    for (size_t c = 0; c < header.size(); ++c) {
        auto it = std::find_if(kAutoColumns.begin(), kAutoColumns.end(),
                               [&](const char* name) { return header[c] == name; });
        if (it == kAutoColumns.end()) {
            out.warnings.push_back("ignoring unrecognized column '" + header[c] + "'");
            continue;
        }
        size_t k = static_cast<size_t>(it - kAutoColumns.begin());
        if (col[k] >= 0) throw DataError("duplicate column '" + header[c] + "'");
        col[k] = static_cast<int>(c);
    }
    for (size_t k = 0; k < kAutoColumns.size(); ++k)
        if (col[k] < 0)
            throw DataError("missing column '" + std::string(kAutoColumns[k]) + "'");

    std::map<int, double> year_share_sum;
    for (size_t r = 1; r < rows.size(); ++r) {
        const std::vector<std::string>& row = rows[r];
        std::string where = "row " + std::to_string(r + 1);
        if (row.size() != header.size())
            throw DataError(where + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(row.size()));
        AutoRecord rec;
        rec.year = parse_year(row[col[0]], where);
        rec.firm = row[col[1]];
        rec.model = row[col[2]];
        rec.price = parse_double(row[col[3]], where + " price");
        rec.hp = parse_double(row[col[4]], where + " hp");
        rec.space = parse_double(row[col[5]], where + " space");
        rec.mpd = parse_double(row[col[6]], where + " mpd");
        rec.ac = parse_double(row[col[7]], where + " ac");
        rec.share = parse_double(row[col[8]], where + " share");
        rec.region = row[col[9]];
        rec.wage = parse_double(row[col[10]], where + " wage");
        rec.xrate = parse_double(row[col[11]], where + " xrate");

        std::string tag = where + " (year " + std::to_string(rec.year) + ")";
        if (!(rec.share > 0.0 && rec.share < 1.0))
            throw DataError(tag + ": share " + format_double(rec.share) +
                            " outside (0,1)");
        if (!(rec.price > 0.0))
            throw DataError(tag + ": price " + format_double(rec.price) +
                            " is not positive");
        if (rec.ac != 0.0 && rec.ac != 1.0)
            out.warnings.push_back(tag + ": ac value " + format_double(rec.ac) +
                                   " is not 0 or 1");
        year_share_sum[rec.year] += rec.share;
        out.records.push_back(std::move(rec));
    }
    if (out.records.empty()) throw DataError("no data rows in " + path);
    for (const auto& [year, sum] : year_share_sum)
        if (!(sum < 1.0))
            throw DataError("year " + std::to_string(year) + ": share sum " +
                            format_double(sum) + " is not below 1");
    return out;
}

void write_auto_csv(const std::vector<AutoRecord>& records, const std::string& path) {
    std::vector<std::string> header(kAutoColumns.begin(), kAutoColumns.end());
    std::vector<std::vector<std::string>> rows;
    rows.reserve(records.size());
    for (const AutoRecord& rec : records) {
        check_plain_text(rec.firm, "firm id");
        check_plain_text(rec.model, "model name");
        check_plain_text(rec.region, "region");
        rows.push_back({std::to_string(rec.year), rec.firm, rec.model,
                        format_double(rec.price), format_double(rec.hp),
                        format_double(rec.space), format_double(rec.mpd),
                        format_double(rec.ac), format_double(rec.share), rec.region,
                        format_double(rec.wage), format_double(rec.xrate)});
    }
    write_csv(path, header, rows);
}

std::vector<AutoRecord> gen_synthetic_auto(const SyntheticAutoConfig& cfg) {
    if (cfg.years < 1 || cfg.firms < 1 || cfg.models_per_firm < 1)
        throw ConfigError("synthetic auto data needs years, firms and models_per_firm >= 1");
    if (!(std::isfinite(cfg.lambda) && cfg.lambda >= 0.0))
        throw ConfigError("synthetic auto lambda must be finite and >= 0");
    if (!std::isfinite(cfg.price_alpha))
        throw ConfigError("synthetic auto price_alpha must be finite");

    const std::array<const char*, 3> regions = {"us", "eu", "jp"};
    const std::array<double, 3> wage_base = {6.0, 7.0, 5.5};
    const std::array<double, 3> fx_base = {1.0, 1.1, 0.9};

    std::vector<AutoRecord> out;
    out.reserve(cfg.years * cfg.firms * cfg.models_per_firm);
    RngStream root(cfg.seed, 0xca75);
    for (size_t yi = 0; yi < cfg.years; ++yi) {
        RngStream ys = root.child(1 + yi);
        std::array<double, 3> wage, xrate;
        for (size_t ri = 0; ri < 3; ++ri) {
            RngStream cs = ys.child(1 + ri);
            wage[ri] = std::max(wage_base[ri] + 0.08 * static_cast<double>(yi) +
                                    0.5 * cs.normal(),
                                1.0);
            xrate[ri] = fx_base[ri] * std::exp(0.12 * cs.normal());
        }

        std::vector<AutoRecord> year_rows;
        std::vector<double> xi_draws, eta_draws;
        std::vector<size_t> firm_of;
        for (size_t fi = 0; fi < cfg.firms; ++fi) {
            size_t ri = fi % 3;
            for (size_t mi = 0; mi < cfg.models_per_firm; ++mi) {
                RngStream ps = ys.child(100 + fi * cfg.models_per_firm + mi);
                AutoRecord rec;
                rec.year = static_cast<int>(1971 + yi);
                char buf[32];
                std::snprintf(buf, sizeof buf, "f%02zu", fi + 1);
                rec.firm = buf;
                std::snprintf(buf, sizeof buf, "f%02zu_m%zu", fi + 1, mi + 1);
                rec.model = buf;
                rec.region = regions[ri];
                rec.wage = wage[ri];
                rec.xrate = xrate[ri];
                // Multiples of 1/64 keep characteristic sums exact. The model
                // index acts as a trim ladder carried by horsepower, so the
                // price spread it creates stays visible to the instruments.
                rec.hp = static_cast<double>(64 + ps.next_u64() % 129) / 64.0 +
                         0.625 * static_cast<double>(mi);
                rec.space = static_cast<double>(64 + ps.next_u64() % 66) / 64.0;
                rec.mpd = static_cast<double>(64 + ps.next_u64() % 385) / 64.0;
                rec.ac = static_cast<double>(ps.next_u64() & 1);
                xi_draws.push_back(ps.normal());
                eta_draws.push_back(ps.normal());
                firm_of.push_back(fi);
                year_rows.push_back(std::move(rec));
            }
        }

        // Markups respond to the horsepower of the firm's other models and of
        // rival models, so prices move with the same sums the instruments
        // measure and the first stage can separate cost from demand shocks.
        double hp_total = 0.0;
        std::vector<double> firm_hp(cfg.firms, 0.0);
        for (size_t j = 0; j < year_rows.size(); ++j) {
            hp_total += year_rows[j].hp;
            firm_hp[firm_of[j]] += year_rows[j].hp;
        }

        std::vector<double> delta;
        for (size_t j = 0; j < year_rows.size(); ++j) {
            AutoRecord& rec = year_rows[j];
            double own_firm_hp = firm_hp[firm_of[j]] - rec.hp;
            double rival_hp = hp_total - firm_hp[firm_of[j]];
            rec.price = 3.7 + 2.8 * rec.hp + 1.0 * (rec.space - 1.0) +
                        0.3 * rec.mpd + 2.5 * rec.ac + 0.35 * rec.wage +
                        1.2 * rec.xrate + 0.5 * own_firm_hp - 0.1 * rival_hp +
                        cfg.lambda * xi_draws[j] + 0.6 * eta_draws[j];
            rec.price = std::max(rec.price, 0.8);
            delta.push_back(-4.9 + cfg.price_alpha * rec.price + 1.3 * rec.hp +
                            0.8 * (rec.space - 1.0) + 0.35 * rec.mpd +
                            0.5 * rec.ac + xi_draws[j]);
        }

        double dmax = 0.0; // outside option utility
        for (double d : delta) dmax = std::max(dmax, d);
        double denom = std::exp(-dmax);
        for (double d : delta) denom += std::exp(d - dmax);
        for (size_t j = 0; j < year_rows.size(); ++j) {
            year_rows[j].share = std::exp(delta[j] - dmax) / denom;
            out.push_back(std::move(year_rows[j]));
        }
    }
    return out;
}

AutoMarkets auto_to_markets(const std::vector<AutoRecord>& records) {
    if (records.empty()) throw DataError("no auto records to group");
    std::vector<int> years;
    for (const AutoRecord& rec : records) years.push_back(rec.year);
    std::sort(years.begin(), years.end());
    years.erase(std::unique(years.begin(), years.end()), years.end());
    std::map<int, size_t> year_idx;
    for (size_t t = 0; t < years.size(); ++t) year_idx[years[t]] = t;

    std::vector<std::vector<const AutoRecord*>> grouped(years.size());
    for (const AutoRecord& rec : records) grouped[year_idx[rec.year]].push_back(&rec);

    AutoMarkets am;
    for (size_t t = 0; t < years.size(); ++t) {
        const auto& rows = grouped[t];
        Market mk;
        mk.id = std::to_string(years[t]);
        mk.x = Matrix(rows.size(), 5);
        mk.y.resize(rows.size());
        std::vector<std::string> firms(rows.size()), models(rows.size());
        std::vector<double> wage(rows.size()), xrate(rows.size());
        for (size_t j = 0; j < rows.size(); ++j) {
            const AutoRecord& rec = *rows[j];
            mk.x(j, 0) = rec.price;
            mk.x(j, 1) = rec.hp;
            mk.x(j, 2) = rec.space;
            mk.x(j, 3) = rec.mpd;
            mk.x(j, 4) = rec.ac;
            mk.y[j] = rec.share;
            firms[j] = rec.firm;
            models[j] = rec.model;
            wage[j] = rec.wage;
            xrate[j] = rec.xrate;
        }
        am.data.markets.push_back(std::move(mk));
        am.firms.push_back(std::move(firms));
        am.models.push_back(std::move(models));
        am.wage.push_back(std::move(wage));
        am.xrate.push_back(std::move(xrate));
    }
    validate_dataset(am.data);
    return am;
}

std::vector<std::string> build_blp_instruments(AutoMarkets& am) {
    if (am.data.markets.empty()) throw DataError("no markets to build instruments for");
    if (am.firms.size() != am.data.markets.size() ||
        am.wage.size() != am.data.markets.size() ||
        am.xrate.size() != am.data.markets.size())
        throw ShapeError("auto market side tables out of sync with markets");

    std::vector<std::string> warnings;
    const size_t n_chars = 4; // hp, space, mpd, ac
    for (size_t t = 0; t < am.data.markets.size(); ++t) {
        Market& mk = am.data.markets[t];
        size_t J = mk.J();
        if (am.firms[t].size() != J || am.wage[t].size() != J || am.xrate[t].size() != J)
            throw ShapeError("auto market side tables out of sync at market " + mk.id);

        std::array<double, n_chars> total{};
        std::map<std::string, std::array<double, n_chars>> firm_sum;
        for (size_t j = 0; j < J; ++j) {
            auto& fs = firm_sum[am.firms[t][j]];
            for (size_t c = 0; c < n_chars; ++c) {
                double v = mk.x(j, 1 + c);
                total[c] += v;
                fs[c] += v;
            }
        }
        if (firm_sum.size() == 1)
            warnings.push_back("year " + mk.id +
                               ": single firm, rival characteristic sums are all zero");

        mk.z = Matrix(J, 2 * n_chars + 2);
        for (size_t j = 0; j < J; ++j) {
            const auto& fs = firm_sum[am.firms[t][j]];
            for (size_t c = 0; c < n_chars; ++c) {
                mk.z(j, c) = fs[c] - mk.x(j, 1 + c);
                mk.z(j, n_chars + c) = total[c] - fs[c];
            }
            mk.z(j, 2 * n_chars) = am.wage[t][j];
            mk.z(j, 2 * n_chars + 1) = am.xrate[t][j];
        }
    }
    return warnings;
}

} // namespace setchoice
