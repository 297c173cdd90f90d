#include "multippi/covariance.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace multippi {

namespace {

void check_samples(const Matrix& samples) {
    if (samples.rows() < 2)
        throw Error(ErrorCode::TooFewSamples, "need at least 2 rows, got " + std::to_string(samples.rows()));
    if (samples.cols() < 1) throw Error(ErrorCode::InvalidArgument, "samples have no columns");
    if (!samples.allFinite()) throw Error(ErrorCode::NonfiniteEntry, "samples contain non-finite entries");
}

Matrix centered(const Matrix& samples) {
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    return samples.rowwise() - mean;
}

}  // namespace

CovarianceMatrix empirical_covariance(const Matrix& samples, Divisor divisor) {
    check_samples(samples);
    const Matrix x = centered(samples);
    const double n = static_cast<double>(samples.rows());
    const double denom = divisor == Divisor::N ? n : n - 1.0;
    Matrix s = (x.transpose() * x) / denom;
    return CovarianceMatrix(0.5 * (s + s.transpose()));
}

LedoitWolfResult ledoit_wolf(const Matrix& samples) {
    check_samples(samples);
    const Matrix x = centered(samples);
    const auto n_rows = samples.rows();
    const auto k = samples.cols();
    const double n = static_cast<double>(n_rows);

    Matrix s = (x.transpose() * x) / n;
    s = 0.5 * (s + s.transpose()).eval();
    const double m = s.trace() / static_cast<double>(k);
    const Matrix identity = Matrix::Identity(k, k);
    const double d_sq = (s - m * identity).squaredNorm();

    double sum = 0.0;
    for (Eigen::Index j = 0; j < n_rows; ++j) {
        const Vector xj = x.row(j).transpose();
        sum += (xj * xj.transpose() - s).squaredNorm();
    }
    const double b_bar_sq = sum / (n * n);
    const double b_sq = std::min(b_bar_sq, d_sq);
    const double delta = d_sq > 0.0 ? std::clamp(b_sq / d_sq, 0.0, 1.0) : 0.0;

    Matrix lw = (1.0 - delta) * s + (delta * m) * identity;
    return LedoitWolfResult{
        .sigma_lw = CovarianceMatrix(std::move(lw)),
        .sigma_empirical = CovarianceMatrix(std::move(s)),
        .shrinkage = delta,
        .target_scale = m,
        .b_bar_sq = b_bar_sq,
        .b_sq = b_sq,
        .d_sq = d_sq,
        .a_sq = d_sq - b_sq,
    };
}

CovarianceMethod parse_covariance_method(const std::string& name) {
    if (name == "empirical") return CovarianceMethod::Empirical;
    if (name == "ledoit_wolf" || name == "ledoit-wolf" || name == "lw") return CovarianceMethod::LedoitWolf;
    throw Error(ErrorCode::InvalidArgument, "unknown covariance method '" + name + "'");
}

std::string to_string(CovarianceMethod method) {
    return method == CovarianceMethod::Empirical ? "empirical" : "ledoit_wolf";
}

CovarianceMatrix estimate_covariance(const Matrix& samples, CovarianceMethod method, Divisor empirical_divisor) {
    if (method == CovarianceMethod::LedoitWolf) return ledoit_wolf(samples).sigma_lw;
    return empirical_covariance(samples, empirical_divisor);
}

// ------------------------------------------------------------------- CSV

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(trim(field));
            field.clear();
        } else {
            field.push_back(ch);
        }
    }
    out.push_back(trim(field));
    return out;
}

double parse_number(const std::string& field, std::size_t line_no) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc() || ptr != last)
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": '" + field + "' is not a number");
    if (!std::isfinite(value))
        throw Error(ErrorCode::NonfiniteEntry, "line " + std::to_string(line_no) + ": non-finite value");
    return value;
}

Matrix parse_rows(std::istream& in, std::size_t& line_no, std::size_t expected_cols) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (expected_cols == 0) expected_cols = fields.size();
        if (fields.size() != expected_cols)
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                                   std::to_string(expected_cols) + " fields, got " +
                                                   std::to_string(fields.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(parse_number(f, line_no));
        rows.push_back(std::move(row));
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(expected_cols));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < expected_cols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
    return in;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
    std::string header;
    std::size_t line_no = 0;
    while (std::getline(in, header)) {
        ++line_no;
        if (!header.empty() && header.back() == '\r') header.pop_back();
        if (!trim(header).empty()) break;
    }
    if (trim(header).empty()) throw Error(ErrorCode::ParseError, "dataset CSV has no header row");
    Dataset d;
    d.names = split_fields(header);
    d.rows = parse_rows(in, line_no, d.names.size());
    return d;
}

Dataset read_dataset_csv_file(const std::string& path) {
    auto in = open_or_throw(path);
    return read_dataset_csv(in);
}

Matrix read_matrix_csv(std::istream& in) {
    std::size_t line_no = 0;
    return parse_rows(in, line_no, 0);
}

Matrix read_matrix_csv_file(const std::string& path) {
    auto in = open_or_throw(path);
    return read_matrix_csv(in);
}

}  // namespace multippi
