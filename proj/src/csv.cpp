#include "setchoice/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "setchoice/fsio.hpp"

namespace setchoice {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError("cannot parse '" + s + "' as a number (" + where + ")");
    return v;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::string text = read_file(path);
    std::vector<std::vector<std::string>> rows;
    size_t start = 0;
    while (start < text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) rows.push_back(split_line(line));
        start = end + 1;
    }
    if (rows.empty()) throw DataError("empty csv file: " + path);
    return rows;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream os;
    for (size_t c = 0; c < header.size(); ++c) {
        if (c) os << ',';
        os << header[c];
    }
    os << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw ShapeError("csv row has " + std::to_string(row.size()) + " cells, header has " +
                             std::to_string(header.size()));
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) os << ',';
            os << row[c];
        }
        os << '\n';
    }
    write_file_atomic(path, os.str());
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
    if (ds.markets.empty()) throw DataError("cannot write an empty dataset");
    size_t k_in = ds.k_in();
    int mu_col = ds.markets.front().mu_col;
    size_t nz = ds.markets.front().z.cols;
    size_t k = (mu_col >= 0 ? k_in - 1 : k_in) - 1; // characteristic columns

    std::vector<std::string> header{"market_id", "product_id", "price"};
    for (size_t c = 0; c < k; ++c) header.push_back("x" + std::to_string(c + 1));
    header.push_back("share");
    if (mu_col >= 0) header.push_back("mu");
    for (size_t c = 0; c < nz; ++c) header.push_back("z" + std::to_string(c + 1));

    std::vector<std::vector<std::string>> rows;
    for (const Market& m : ds.markets) {
        if (m.mu_col != mu_col || m.z.cols != nz || m.x.cols != k_in)
            throw DataError("market " + m.id + " has a different column layout; cannot emit one csv");
        if (m.y.size() != m.J())
            throw DataError("market " + m.id + " lacks shares; dataset csv requires them");
        for (size_t j = 0; j < m.J(); ++j) {
            std::vector<std::string> row{m.id, std::to_string(j),
                                         format_double(m.x(j, kPriceCol))};
            for (size_t c = 0; c < k; ++c) row.push_back(format_double(m.x(j, 1 + c)));
            row.push_back(format_double(m.y[j]));
            if (mu_col >= 0) row.push_back(format_double(m.x(j, static_cast<size_t>(mu_col))));
            for (size_t c = 0; c < nz; ++c) row.push_back(format_double(m.z(j, c)));
            rows.push_back(std::move(row));
        }
    }
    write_csv(path, header, rows);
}

Dataset load_dataset_csv(const std::string& path) {
    std::vector<std::vector<std::string>> rows = read_csv(path);
    const std::vector<std::string>& h = rows.front();
    if (h.size() < 4 || h[0] != "market_id" || h[1] != "product_id" || h[2] != "price")
        throw DataError(path + ": header must start with market_id,product_id,price");

    size_t k = 0;
    size_t col = 3;
    while (col < h.size() && h[col] == "x" + std::to_string(k + 1)) {
        ++k;
        ++col;
    }
    if (col >= h.size() || h[col] != "share")
        throw DataError(path + ": expected 'share' after the feature columns, found " +
                        (col < h.size() ? "'" + h[col] + "'" : "end of header"));
    size_t share_col = col++;
    bool has_mu = col < h.size() && h[col] == "mu";
    size_t mu_col = has_mu ? col++ : 0;
    size_t nz = 0;
    while (col < h.size() && h[col] == "z" + std::to_string(nz + 1)) {
        ++nz;
        ++col;
    }
    if (col != h.size())
        throw DataError(path + ": unrecognized trailing column '" + h[col] + "'");

    Dataset ds;
    Market* cur = nullptr;
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        std::string where = path + " line " + std::to_string(r + 1);
        if (row.size() != h.size())
            throw DataError(where + ": " + std::to_string(row.size()) + " cells, header has " +
                            std::to_string(h.size()));
        if (!cur || cur->id != row[0]) {
            ds.markets.emplace_back();
            cur = &ds.markets.back();
            cur->id = row[0];
            cur->mu_col = has_mu ? static_cast<int>(1 + k) : -1;
        }
        std::vector<double> feat;
        feat.push_back(parse_double(row[2], where));
        for (size_t c = 0; c < k; ++c) feat.push_back(parse_double(row[3 + c], where));
        if (has_mu) feat.push_back(parse_double(row[mu_col], where));
        cur->y.push_back(parse_double(row[share_col], where));

        size_t old_rows = cur->x.rows;
        Matrix grown(old_rows + 1, feat.size());
        std::copy(cur->x.data.begin(), cur->x.data.end(), grown.data.begin());
        std::copy(feat.begin(), feat.end(), grown.row(old_rows));
        cur->x = std::move(grown);

        if (nz > 0) {
            Matrix zg(old_rows + 1, nz);
            std::copy(cur->z.data.begin(), cur->z.data.end(), zg.data.begin());
            for (size_t c = 0; c < nz; ++c) zg(old_rows, c) = parse_double(row[col - nz + c], where);
            cur->z = std::move(zg);
        }
    }
    if (ds.markets.empty()) throw DataError(path + ": no data rows");
    validate_dataset(ds);
    return ds;
}

} // namespace setchoice
