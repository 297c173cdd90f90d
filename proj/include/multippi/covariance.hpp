#pragma once

#include "multippi/model.hpp"

#include <istream>
#include <string>
#include <vector>

namespace multippi {

enum class Divisor { N, NMinusOne };

/// Centered second moments of the rows of `samples` (N x k).
CovarianceMatrix empirical_covariance(const Matrix& samples, Divisor divisor = Divisor::N);

struct LedoitWolfResult {
    CovarianceMatrix sigma_lw;
    CovarianceMatrix sigma_empirical;  // divisor N
    double shrinkage = 0.0;            // delta in [0, 1]
    double target_scale = 0.0;         // tr(Sigma_N) / k
    double b_bar_sq = 0.0;             // unclipped dispersion of outer products
    double b_sq = 0.0;                 // min(b_bar_sq, d_sq)
    double d_sq = 0.0;                 // ||Sigma_N - m I||_F^2
    double a_sq = 0.0;                 // d_sq - b_sq
};

/// Shrinks the divisor-N empirical covariance toward tr/k * I:
///
///   Sigma_LW = (1 - delta) Sigma_N + delta m I,  delta = min(b_bar^2, d^2) / d^2,
///   b_bar^2  = N^-2 sum_j ||x_j x_j^T - Sigma_N||_F^2 over centered rows.
///
/// delta is 0 when Sigma_N is already spherical (d^2 == 0).
LedoitWolfResult ledoit_wolf(const Matrix& samples);

enum class CovarianceMethod { Empirical, LedoitWolf };

CovarianceMethod parse_covariance_method(const std::string& name);
std::string to_string(CovarianceMethod method);

/// Estimate used by the pipeline and CLI.
CovarianceMatrix estimate_covariance(const Matrix& samples, CovarianceMethod method,
                                     Divisor empirical_divisor = Divisor::N);

struct Dataset {
    std::vector<std::string> names;
    Matrix rows;
};

/// CSV with one header row of variable names and numeric rows after it.
Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv_file(const std::string& path);

/// Headerless numeric CSV (used for covariance matrices and batch files).
Matrix read_matrix_csv(std::istream& in);
Matrix read_matrix_csv_file(const std::string& path);

}  // namespace multippi
