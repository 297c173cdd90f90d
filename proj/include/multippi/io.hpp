#pragma once

#include "multippi/simulator.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace multippi {

using Json = nlohmann::ordered_json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

/// Covariance as an array of row arrays.
Json to_json(const CovarianceMatrix& sigma);
CovarianceMatrix covariance_from_json(const Json& j);
/// `.json` files hold an array of rows; anything else is read as headerless CSV.
CovarianceMatrix read_covariance_file(const std::string& path);
void write_matrix_csv(std::ostream& out, const Matrix& m);

/// {"k", "subsets": ["1,2", ...], "costs": [[c_I per row], ...], "budgets": [...]}.
/// Builder forms are accepted too:
///   {"builder": "additive", "per_model": [...], "budgets": [...]}
///   {"builder": "cascading", "input_rate", "output_rate", "tiers": [...], "budgets": [...]}
Json to_json(const CostModel& cm);
CostModel cost_model_from_json(const Json& j);

Json to_json(const AllocationPlan& plan);
AllocationPlan plan_from_json(const Json& j);

/// {point, variance, alpha, interval: [lo, hi], per_subset: [{subset, n, mean, var}], allocation, spend}.
Json to_json(const EstimateReport& report);
EstimateReport report_from_json(const Json& j);

/// Relative dataset paths in the source block resolve against `base_dir`.
ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir = {});

Json error_json(const Error& e);

Json read_json_file(const std::string& path);

}  // namespace multippi
