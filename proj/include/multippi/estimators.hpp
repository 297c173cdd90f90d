#pragma once

#include "multippi/allocator.hpp"
#include "multippi/covariance.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace multippi {

/// Standard normal quantile, |error| < 1e-9 on (0, 1).
double normal_quantile(double p);

struct SubsetReport {
    Subset subset;
    std::int64_t n = 0;
    double mean = 0.0;  // of the projections lambda_I . X_I
    double var = 0.0;   // unbiased sample variance of the projections
};

struct EstimateReport {
    double point = 0.0;
    double variance = 0.0;  // sum_I var_I / n_I
    double alpha = 0.05;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<SubsetReport> per_subset;
    std::vector<std::pair<Subset, std::int64_t>> allocation;
    Vector spend;
    /// Tuning parameters chosen by a baseline (empty for MultiPPI).
    Vector tuning;
};

/// theta_hat = sum_{I : n_I > 0} (1/n_I) sum_j lambda_I^T X_I^(j).
/// Batches may come in any order; subsets with n_I = 0 need no batch.
double multippi_point(const std::vector<SampleBatch>& batches, const SubsetFamily& family, const Allocation& alloc,
                      const WeightScheme& weights);

/// Point estimate plus theta_hat +- z_{1-alpha/2} sqrt(sum_I s_I^2 / n_I).
EstimateReport confidence_interval(const std::vector<SampleBatch>& batches, const SubsetFamily& family,
                                   const Allocation& alloc, const WeightScheme& weights, double alpha);

/// Sufficient statistics of one batch: mean and divisor-(n-1) covariance.
struct BatchSummary {
    Subset subset;
    std::int64_t n = 0;
    Vector mean;
    Matrix cov;
};

BatchSummary summarize(const SampleBatch& batch);

/// Same estimator as confidence_interval, from batch summaries.
EstimateReport estimate_from_summaries(const std::vector<BatchSummary>& summaries, const SubsetFamily& family,
                                       const Allocation& alloc, const WeightScheme& weights, double alpha);

// Baselines. `labeled` holds (X_1, proxies...) rows; unlabeled rows hold proxies only.

/// (1/n) sum_j X_1^(j).
EstimateReport classical_estimate(const Vector& x1, double alpha);

/// (1/N) sum f~ + (1/n) sum (Y - f); labeled is n x 2.
EstimateReport ppi_estimate(const Matrix& labeled, const Vector& unlabeled, double alpha);

/// (1/n) sum (Y - lambda f) + (1/N) sum lambda f~, with
/// lambda = N/(n+N) Cov(Y, f)/Var(f) on the labeled pairs unless given.
EstimateReport ppi_pp_scalar(const Matrix& labeled, const Vector& unlabeled, double alpha,
                             std::optional<double> lambda = std::nullopt);

/// Vector version: labeled n x k, unlabeled N x (k-1),
/// lambda = N/(n+N) Sigma_22^{-1} c on the labeled rows unless given.
EstimateReport ppi_pp_vector(const Matrix& labeled, const Matrix& unlabeled, double alpha,
                             std::optional<Vector> lambda = std::nullopt);

/// (1/n) sum (X1 - l X2) + (1/N) sum (l X2~ - l' X3~) + (1/M) sum l' X3~~.
/// b12 is n x 2, b23 is N x 2, b3 has M rows.
EstimateReport cascade_estimate(const Matrix& b12, const Matrix& b23, const Vector& b3, double lambda,
                                double lambda_prime, double alpha);

/// Family used by the cascade: {1,2}, {2,3}, {3}.
SubsetFamily cascade_family();

/// (lambda, lambda') from the optimal weights of the cascade family at the given counts.
std::pair<double, double> cascade_tuning(const CovarianceMatrix& sigma, const std::vector<double>& counts);

// Pipeline.

enum class FamilyKind { Full, Restricted };

FamilyKind parse_family_kind(const std::string& name);
std::string to_string(FamilyKind kind);

/// {1..k} plus every nonempty subset of {2..k} (Full) or {2..k}, {2}, ..., {k} (Restricted).
SubsetFamily pipeline_family(int k, FamilyKind kind);

/// Two budget rows: money (the full subset is free there) and the labeled cap
/// n_{1..k} <= labeled_count. `model_costs` is aligned with family[1..]. With a
/// zero money budget only the full subset remains and the money row is dropped.
CostModel labeled_cap_model(const SubsetFamily& family, const std::vector<double>& model_costs, double money_budget,
                            std::int64_t labeled_count);

struct PipelineConfig {
    CovarianceMethod covariance_method = CovarianceMethod::LedoitWolf;
    CostModel cost_model;  // must contain the full subset with a labeled cap
    double alpha = 0.05;
    SolverOptions solver;
};

/// Draws n rows of X_I for a subset other than the full one.
using BatchSource = std::function<Matrix(const Subset&, std::int64_t)>;

struct PipelineResult {
    CovarianceMatrix sigma_hat;
    AllocationPlan plan;
    EstimateReport report;
};

/// Estimates Sigma from the labeled rows, solves the allocation, reuses the
/// first n_{1..k} labeled rows for the full subset and draws the rest.
PipelineResult pipeline_run(const Matrix& labeled, const TargetSpec& target, const PipelineConfig& config,
                            const BatchSource& source);

}  // namespace multippi
