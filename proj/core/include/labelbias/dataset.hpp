#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace labelbias::simdata {

/// Column-role assignment for an external CSV file. Stored as a JSON sidecar
/// of the form {"covariates": [...], "proxy": "...", "truth": "...", "group": "..."};
/// truth and group are optional.
struct CsvSchema {
    std::vector<std::string> covariates;
    std::string proxy;
    std::optional<std::string> truth;
    std::optional<std::string> group;

    static CsvSchema from_json_file(const std::filesystem::path& path);
    static CsvSchema from_json_string(const std::string& text);
    std::string to_json_string() const;
};

/// Immutable column-named numeric matrix with role assignments. After
/// preparation the covariate block always starts with an intercept column
/// of ones named "intercept".
struct Dataset {
    std::vector<std::string> names;  // one per column of values
    Eigen::MatrixXd values;          // n x p

    std::vector<Eigen::Index> covariate_cols;  // intercept first
    Eigen::Index proxy_col = -1;
    std::optional<Eigen::Index> truth_col;
    std::optional<Eigen::Index> group_col;

    Eigen::Index n() const { return values.rows(); }

    /// Covariate block (n x m), intercept first.
    Eigen::MatrixXd covariates() const;
    Eigen::VectorXd proxy() const { return values.col(proxy_col); }
    Eigen::VectorXd truth() const { return values.col(*truth_col); }
    /// Group labels, rounded to int.
    Eigen::VectorXi group() const;

    Eigen::Index column_index(const std::string& name) const;
};

/// Loads a CSV file (UTF-8, header row, '.' decimal separator) and assigns
/// roles per the schema. Throws EmptyFile, MissingColumn or NonNumericCell;
/// each message names the offending location.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes a named numeric table as CSV. Values are printed in shortest
/// round-trip form so finite decimals survive a load/save cycle unchanged.
/// Lines in header_comments are emitted first, each prefixed with "# ".
void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& names,
               const Eigen::MatrixXd& values,
               const std::vector<std::string>& header_comments = {});

/// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace labelbias::simdata
