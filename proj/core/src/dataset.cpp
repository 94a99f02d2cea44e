#include "labelbias/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "labelbias/errors.hpp"

namespace labelbias::simdata {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || cell.empty()) {
        throw NonNumericCell("non-numeric cell '" + cell + "' at data row " +
                             std::to_string(row + 1) + ", column '" + column + "'");
    }
    if (!std::isfinite(value)) {
        throw NonNumericCell("non-finite cell '" + cell + "' at data row " +
                             std::to_string(row + 1) + ", column '" + column + "'");
    }
    return value;
}

}  // namespace

CsvSchema CsvSchema::from_json_string(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    CsvSchema s;
    s.covariates = j.at("covariates").get<std::vector<std::string>>();
    s.proxy = j.at("proxy").get<std::string>();
    if (j.contains("truth") && !j["truth"].is_null()) s.truth = j["truth"].get<std::string>();
    if (j.contains("group") && !j["group"].is_null()) s.group = j["group"].get<std::string>();
    return s;
}

CsvSchema CsvSchema::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw EmptyFile("cannot open schema file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_string(buf.str());
}

std::string CsvSchema::to_json_string() const {
    nlohmann::json j;
    j["covariates"] = covariates;
    j["proxy"] = proxy;
    if (truth) j["truth"] = *truth;
    if (group) j["group"] = *group;
    return j.dump(2);
}

Eigen::MatrixXd Dataset::covariates() const {
    Eigen::MatrixXd X(values.rows(), static_cast<Eigen::Index>(covariate_cols.size()));
    for (std::size_t k = 0; k < covariate_cols.size(); ++k) {
        X.col(static_cast<Eigen::Index>(k)) = values.col(covariate_cols[k]);
    }
    return X;
}

Eigen::VectorXi Dataset::group() const {
    Eigen::VectorXi g(values.rows());
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        g[i] = static_cast<int>(std::llround(values(i, *group_col)));
    }
    return g;
}

Eigen::Index Dataset::column_index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw MissingColumn("column '" + name + "' not present");
    return static_cast<Eigen::Index>(it - names.begin());
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw EmptyFile("cannot open " + path.string());

    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        header = split_csv_line(line);
        break;
    }
    if (header.empty()) throw EmptyFile(path.string() + ": no header row");

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw NonNumericCell(path.string() + ": data row " + std::to_string(lineno + 1) +
                                 " has " + std::to_string(cells.size()) + " cells, expected " +
                                 std::to_string(header.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            row[c] = parse_cell(cells[c], lineno, header[c]);
        }
        rows.push_back(std::move(row));
        ++lineno;
    }
    if (rows.empty()) throw EmptyFile(path.string() + ": no data rows");

    const auto require = [&](const std::string& name) -> Eigen::Index {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw MissingColumn(path.string() + ": declared column '" + name +
                                "' missing from header");
        }
        return static_cast<Eigen::Index>(it - header.begin());
    };

    Dataset d;
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto p = static_cast<Eigen::Index>(header.size());
    d.names = header;
    d.values.resize(n, p + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < p; ++c) d.values(i, c) = rows[i][c];
    }
    // intercept column appended as part of preparation
    d.values.col(p).setOnes();
    d.names.push_back("intercept");

    d.covariate_cols.push_back(p);
    for (const auto& name : schema.covariates) d.covariate_cols.push_back(require(name));
    d.proxy_col = require(schema.proxy);
    if (schema.truth) d.truth_col = require(*schema.truth);
    if (schema.group) d.group_col = require(*schema.group);
    return d;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& names,
               const Eigen::MatrixXd& values,
               const std::vector<std::string>& header_comments) {
    if (static_cast<Eigen::Index>(names.size()) != values.cols()) {
        throw std::invalid_argument("write_csv: names/columns mismatch");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
    for (const auto& c : header_comments) out << "# " << c << '\n';
    for (std::size_t k = 0; k < names.size(); ++k) {
        out << names[k] << (k + 1 == names.size() ? '\n' : ',');
    }
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            out << format_double(values(i, c)) << (c + 1 == values.cols() ? '\n' : ',');
        }
    }
}

}  // namespace labelbias::simdata
